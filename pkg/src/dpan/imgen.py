"""IMGEN: raw hex measurement text <-> 220x200 grayscale phenotype images.

A measurement is 11,000 lines of one 32-bit DWORD in hex (e.g. FFFA3F6C),
44,000 bytes total. Each byte is one pixel intensity, filled row-major into
200 rows of 220 pixels. The mapping is lossless in both directions, and
images persist as binary PGM (P5).
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np

WIDTH = 220
HEIGHT = 200
RESPONSE_BYTES = WIDTH * HEIGHT  # 44,000
RESPONSE_BITS = RESPONSE_BYTES * 8  # 352,000

_HEX_LINE = re.compile(r"[0-9a-fA-F]{8}")


class HexFormatError(ValueError):
    pass


class PgmFormatError(ValueError):
    pass


@dataclass
class Phenotype:
    """A 220x200 grayscale image of one PUF measurement."""

    pixels: np.ndarray  # (HEIGHT, WIDTH) uint8, row-major measurement bytes
    label: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (HEIGHT, WIDTH):
            raise ValueError(
                f"phenotype must be {HEIGHT}x{WIDTH}, got {self.pixels.shape}"
            )

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()


def parse_hex_response(text: str) -> bytes:
    """Parse DWORD-per-line hex text into measurement bytes.

    Case-insensitive. Surplus bytes past 44,000 are dropped with a warning;
    fewer is an error. Bad lines report 1-based line/column positions.
    """
    out = bytearray()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if len(line) != 8:
            raise HexFormatError(
                f"line {lineno}: expected 8 hex characters, got {len(line)}"
            )
        if not _HEX_LINE.fullmatch(line):
            col = next(i for i, c in enumerate(line, start=1) if c not in "0123456789abcdefABCDEF")
            raise HexFormatError(
                f"line {lineno}, column {col}: invalid hex character {line[col - 1]!r}"
            )
        out += bytes.fromhex(line)
    if len(out) < RESPONSE_BYTES:
        raise HexFormatError(
            f"need {RESPONSE_BYTES} bytes, file only provides {len(out)}"
        )
    if len(out) > RESPONSE_BYTES:
        warnings.warn(
            f"hex input has {len(out)} bytes; ignoring {len(out) - RESPONSE_BYTES} surplus",
            stacklevel=2,
        )
    return bytes(out[:RESPONSE_BYTES])


def format_hex_response(data: bytes) -> str:
    """Inverse of parse_hex_response: 8 uppercase hex chars per line."""
    if len(data) != RESPONSE_BYTES:
        raise ValueError(f"expected {RESPONSE_BYTES} bytes, got {len(data)}")
    lines = [data[i : i + 4].hex().upper() for i in range(0, len(data), 4)]
    return "\n".join(lines) + "\n"


def imgen(data: bytes, label: str | None = None, meta: dict | None = None) -> Phenotype:
    """Render 44,000 measurement bytes as a phenotype image (identity mapping)."""
    if len(data) != RESPONSE_BYTES:
        raise ValueError(f"imgen needs exactly {RESPONSE_BYTES} bytes, got {len(data)}")
    pixels = np.frombuffer(data, dtype=np.uint8).reshape(HEIGHT, WIDTH).copy()
    return Phenotype(pixels, label=label, meta=meta or {})


def to_pgm(p: Phenotype) -> bytes:
    return f"P5\n{WIDTH} {HEIGHT}\n255\n".encode("ascii") + p.to_bytes()


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise PgmFormatError("truncated PGM header")
    return data[start:pos], pos


def from_pgm(data: bytes, label: str | None = None) -> Phenotype:
    magic, pos = _next_token(data, 0)
    if magic != b"P5":
        raise PgmFormatError(f"not a binary PGM (magic {magic!r})")
    fields = []
    for _ in range(3):
        tok, pos = _next_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise PgmFormatError(f"non-numeric PGM header field {tok!r}") from None
    width, height, maxval = fields
    if (width, height) != (WIDTH, HEIGHT):
        raise PgmFormatError(f"expected {WIDTH}x{HEIGHT} image, got {width}x{height}")
    if maxval != 255:
        raise PgmFormatError(f"expected maxval 255, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos:]
    if len(raster) != RESPONSE_BYTES:
        raise PgmFormatError(
            f"expected {RESPONSE_BYTES} raster bytes, got {len(raster)}"
        )
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(HEIGHT, WIDTH).copy()
    return Phenotype(pixels, label=label)


def write_pgm(path, p: Phenotype) -> None:
    with open(path, "wb") as fh:
        fh.write(to_pgm(p))


def read_pgm(path, label: str | None = None) -> Phenotype:
    with open(path, "rb") as fh:
        return from_pgm(fh.read(), label=label)


def image_similarity(a: Phenotype, b: Phenotype) -> float:
    """Bit-level similarity: 1 - Hamming(a, b) / 352,000."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError("phenotype dimensions differ")
    diff = np.unpackbits(a.pixels ^ b.pixels).sum()
    return 1.0 - diff / RESPONSE_BITS
