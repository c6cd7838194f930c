"""Versioned binary containers: magic + JSON header + named float32 sections.

Layout: magic bytes, a 4-byte little-endian header length, the UTF-8 JSON
header, then the raw section payloads concatenated in header order. Every
section is a little-endian IEEE-754 float32 array whose name and shape are
declared in the header under "sections". Headers are serialized with sorted
keys so identical inputs produce identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np


class ContainerError(ValueError):
    pass


def encode_container(magic: bytes, header: dict, arrays: list[tuple[str, np.ndarray]]) -> bytes:
    header = dict(header)
    header["sections"] = [{"name": name, "shape": list(a.shape)} for name, a in arrays]
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = bytearray()
    out += magic
    out += struct.pack("<I", len(head))
    out += head
    for _, a in arrays:
        out += np.ascontiguousarray(a, dtype="<f4").tobytes()
    return bytes(out)


def decode_container(data: bytes, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[: len(magic)] != magic:
        raise ContainerError(
            f"bad magic: expected {magic!r}, got {bytes(data[:len(magic)])!r}"
        )
    pos = len(magic)
    if len(data) < pos + 4:
        raise ContainerError("truncated container header length")
    (hlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if len(data) < pos + hlen:
        raise ContainerError("truncated container header")
    try:
        header = json.loads(data[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"unreadable container header: {exc}") from exc
    pos += hlen
    sections: dict[str, np.ndarray] = {}
    for sec in header.get("sections", []):
        shape = tuple(sec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if len(data) < pos + nbytes:
            raise ContainerError(f"truncated section {sec['name']!r}")
        arr = np.frombuffer(data[pos : pos + nbytes], dtype="<f4").reshape(shape)
        sections[sec["name"]] = arr
        pos += nbytes
    if pos != len(data):
        raise ContainerError(f"{len(data) - pos} trailing bytes after declared sections")
    return header, sections


def write_container(path, magic: bytes, header: dict, arrays) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_container(magic, header, arrays))


def read_container(path, magic: bytes):
    with open(path, "rb") as fh:
        return decode_container(fh.read(), magic)
