"""Synthetic DRAM latency-PUF measurement source.

Each simulated device owns a per-bit failure propensity map (theta): when a
challenge pattern is written and read back with the row-to-column delay
forced to zero, cells whose propensity exceeds a fixed threshold flip in the
stable (noise-free) response. Environmental noise is modeled as i.i.d.
per-bit flips whose rate is calibrated so that two repeated measurements
disagree by 5.95% of bits at 20C/1.50V and by 36.91% at 50C/1.27V.

Three challenge patterns (0xFF, 0x00, 0x55) drive distinct but correlated
failure behavior per device: a common latent draw plus a per-pattern
perturbation, combined so every theta is uniform on [0, 1].

Every function is pure and deterministic given its arguments and seeds.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.special import ndtr

from . import imgen

N_BITS = imgen.RESPONSE_BITS  # 352,000
N_BYTES = imgen.RESPONSE_BYTES  # 44,000

# Fraction of cells failing in the stable response, per pattern.
STABLE_FAIL_DENSITY = 0.30
STABLE_FAIL_THRESHOLD = 0.70
# Latent correlation between the per-pattern propensity maps of one device.
PATTERN_CORRELATION = 0.5
# Process variation is spatially correlated: the propensity field is a box
# average of white noise over this many pixels, giving phenotype images the
# blobby texture real failure maps show. The small independent per-bit part
# keeps neighbouring cells distinct.
SPATIAL_WINDOW = 32
BIT_JITTER_VAR = 0.1

# Measured pairwise-disagreement anchors for repeated measurements.
DISAGREEMENT_IDEAL = 0.0595  # 20C, 1.50V
DISAGREEMENT_EXTREME = 0.3691  # 50C, 1.27V

TEMP_MIN = 20.0
TEMP_MAX = 50.0
VOLTAGE_NOMINAL = 1.50
VOLTAGE_REDUCED = 1.27

DEFAULT_LABELS = ["Alpha", "Beta", "Delta", "Gamma", "Epsilon"]


class ChallengePattern(enum.Enum):
    P_FF = "P_FF"
    P_00 = "P_00"
    P_55 = "P_55"

    def base_bits(self) -> np.ndarray:
        if self is ChallengePattern.P_FF:
            return np.ones(N_BITS, dtype=np.uint8)
        if self is ChallengePattern.P_00:
            return np.zeros(N_BITS, dtype=np.uint8)
        # 0x55: bits alternate 0/1 within each byte (MSB first)
        return np.tile(np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=np.uint8), N_BYTES)

    @classmethod
    def parse(cls, text: str) -> "ChallengePattern":
        t = text.strip().upper().removeprefix("P_").removeprefix("0X")
        for p in cls:
            if p.name.removeprefix("P_") == t:
                return p
        raise ValueError(f"unknown challenge pattern {text!r}")


PATTERNS = list(ChallengePattern)


@dataclass(frozen=True)
class EnvCondition:
    temp_c: float
    voltage_v: float

    def __post_init__(self):
        if not TEMP_MIN <= self.temp_c <= TEMP_MAX:
            raise ValueError(
                f"temperature {self.temp_c} outside [{TEMP_MIN}, {TEMP_MAX}]"
            )
        if not (
            math.isclose(self.voltage_v, VOLTAGE_NOMINAL, abs_tol=1e-9)
            or math.isclose(self.voltage_v, VOLTAGE_REDUCED, abs_tol=1e-9)
        ):
            raise ValueError(
                f"voltage {self.voltage_v} not one of the measured levels "
                f"{VOLTAGE_NOMINAL}/{VOLTAGE_REDUCED}"
            )


ENV_IDEAL = EnvCondition(20.0, VOLTAGE_NOMINAL)
ENV_EXTREME = EnvCondition(50.0, VOLTAGE_REDUCED)

DEFAULT_CONDITIONS = [
    EnvCondition(t, v)
    for t in (20.0, 30.0, 40.0, 50.0)
    for v in (VOLTAGE_NOMINAL, VOLTAGE_REDUCED)
]


@dataclass
class DeviceFingerprint:
    """Latent per-cell failure propensities defining one device identity."""

    device_id: str
    seed: int
    theta: np.ndarray  # (3, N_BITS) float64 in [0, 1], rows follow PATTERNS

    def stable_fail_bits(self, pattern: ChallengePattern) -> np.ndarray:
        row = PATTERNS.index(pattern)
        return (self.theta[row] > STABLE_FAIL_THRESHOLD).astype(np.uint8)

    def stable_response_bits(self, pattern: ChallengePattern) -> np.ndarray:
        return pattern.base_bits() ^ self.stable_fail_bits(pattern)


def _structured_normal(rng: np.random.Generator) -> np.ndarray:
    """Per-bit standard normals with spatial correlation on the pixel grid.

    A wrap-around box average of white noise over SPATIAL_WINDOW^2 pixels
    (rescaled back to unit variance) is shared by the 8 bits of each pixel,
    plus an independent per-bit jitter; the mix keeps every entry exactly
    N(0, 1).
    """
    field = uniform_filter(
        rng.standard_normal((imgen.HEIGHT, imgen.WIDTH)),
        size=SPATIAL_WINDOW,
        mode="wrap",
    ) * SPATIAL_WINDOW
    z = math.sqrt(1.0 - BIT_JITTER_VAR) * np.repeat(field.ravel(), 8)
    z += math.sqrt(BIT_JITTER_VAR) * rng.standard_normal(N_BITS)
    return z


def new_fingerprint(seed: int, device_id: str) -> DeviceFingerprint:
    """Instantiate a device's propensity maps from a seed.

    A shared latent draw plus an independent per-pattern draw are mixed with
    weight sqrt(PATTERN_CORRELATION) and pushed through the normal CDF, so
    each theta is marginally uniform: the stable failure density is exactly
    1 - STABLE_FAIL_THRESHOLD in expectation.
    """
    rng = np.random.default_rng(seed)
    z_base = _structured_normal(rng)
    w_base = math.sqrt(PATTERN_CORRELATION)
    w_own = math.sqrt(1.0 - PATTERN_CORRELATION)
    theta = np.empty((len(PATTERNS), N_BITS))
    for row in range(len(PATTERNS)):
        z = w_base * z_base + w_own * _structured_normal(rng)
        theta[row] = ndtr(z)
    return DeviceFingerprint(device_id=device_id, seed=int(seed), theta=theta)


def disagreement_target(env: EnvCondition) -> float:
    """Expected bit disagreement between two repeated measurements at env.

    Bilinear in (temperature, voltage) between the two measured anchors,
    attributing the increase equally to each axis.
    """
    ut = (env.temp_c - TEMP_MIN) / (TEMP_MAX - TEMP_MIN)
    uv = (VOLTAGE_NOMINAL - env.voltage_v) / (VOLTAGE_NOMINAL - VOLTAGE_REDUCED)
    span = DISAGREEMENT_EXTREME - DISAGREEMENT_IDEAL
    return DISAGREEMENT_IDEAL + span * (ut + uv) / 2.0


def flip_prob(d: float) -> float:
    """Per-measurement flip probability f with 2f(1-f) = d (pair disagreement)."""
    if not 0.0 <= d < 0.5:
        raise ValueError(f"pair disagreement {d} outside [0, 0.5)")
    return (1.0 - math.sqrt(1.0 - 2.0 * d)) / 2.0


@dataclass
class RawResponse:
    """One 44,000-byte measurement with its provenance."""

    data: bytes
    device_id: str
    pattern: ChallengePattern
    env: EnvCondition
    repeat: int = 0

    def __post_init__(self):
        if len(self.data) != N_BYTES:
            raise ValueError(f"response must be {N_BYTES} bytes, got {len(self.data)}")

    def bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.data, dtype=np.uint8))


def measure(
    fp: DeviceFingerprint,
    pattern: ChallengePattern,
    env: EnvCondition,
    noise_seed: int,
    repeat: int = 0,
) -> RawResponse:
    """One noisy read: base pattern XOR stable failures XOR env noise."""
    f = flip_prob(disagreement_target(env))
    rng = np.random.default_rng(noise_seed)
    noise = (rng.random(N_BITS) < f).astype(np.uint8)
    bits = fp.stable_response_bits(pattern) ^ noise
    return RawResponse(
        data=np.packbits(bits).tobytes(),
        device_id=fp.device_id,
        pattern=pattern,
        env=env,
        repeat=repeat,
    )


def pairwise_disagreement(a: RawResponse, b: RawResponse) -> float:
    """Fraction of the 352,000 bit positions where two responses differ."""
    if len(a.data) != len(b.data):
        raise ValueError("response lengths differ")
    xa = np.frombuffer(a.data, dtype=np.uint8)
    xb = np.frombuffer(b.data, dtype=np.uint8)
    return np.unpackbits(xa ^ xb).sum() / N_BITS


def response_to_phenotype(r: RawResponse) -> imgen.Phenotype:
    return imgen.imgen(
        r.data,
        label=r.device_id,
        meta={
            "pattern": r.pattern.value,
            "temp_c": r.env.temp_c,
            "voltage_v": r.env.voltage_v,
            "repeat": r.repeat,
        },
    )


@dataclass
class ManifestRecord:
    device_id: str
    pattern: str
    temp_c: float
    voltage_v: float
    repeat: int
    image_path: str

    def sort_key(self):
        return (
            self.device_id,
            [p.value for p in PATTERNS].index(self.pattern),
            self.temp_c,
            self.voltage_v,
            self.repeat,
        )


@dataclass
class DatasetManifest:
    """Index of a generated or ingested phenotype dataset on disk."""

    records: list[ManifestRecord]
    devices: list[dict]  # {"device_id": ..., "seed": ...?} per device
    seed: int | None = None
    root: Path = field(default_factory=Path)

    def labels(self) -> list[str]:
        return sorted({r.device_id for r in self.records})

    def device_seeds(self) -> dict[str, int]:
        return {
            d["device_id"]: d["seed"] for d in self.devices if "seed" in d
        }

    def load_phenotype(self, record: ManifestRecord) -> imgen.Phenotype:
        p = imgen.read_pgm(self.root / record.image_path, label=record.device_id)
        p.meta = {
            "pattern": record.pattern,
            "temp_c": record.temp_c,
            "voltage_v": record.voltage_v,
            "repeat": record.repeat,
        }
        return p

    def to_dict(self) -> dict:
        return {
            "format": "dpan-manifest-v1",
            "seed": self.seed,
            "devices": self.devices,
            "records": [vars(r) for r in self.records],
        }

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        raw = json.loads(path.read_text())
        if raw.get("format") != "dpan-manifest-v1":
            raise ValueError(f"{path}: not a dpan dataset manifest")
        records = [ManifestRecord(**r) for r in raw["records"]]
        return cls(
            records=records,
            devices=raw.get("devices", []),
            seed=raw.get("seed"),
            root=path.parent,
        )

    @staticmethod
    def sha256(path) -> str:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _image_name(device: str, pattern: ChallengePattern, env: EnvCondition, rep: int) -> str:
    return f"{device}_{pattern.value}_{env.temp_c:g}C_{env.voltage_v:.2f}V_r{rep}.pgm"


def generate_dataset(
    out_dir,
    m: int = 5,
    conditions: list[EnvCondition] | None = None,
    repeats: int = 3,
    seed: int = 0,
    labels: list[str] | None = None,
    export_hex: bool = False,
) -> DatasetManifest:
    """Measure m devices under every pattern/condition/repeat and write PGMs.

    Canonical record order is (device, pattern, condition, repeat); the noise
    seed stream follows that order, so identical arguments reproduce the
    dataset byte for byte.
    """
    if m < 2:
        raise ValueError("group authentication needs at least 2 devices")
    if labels is None:
        if m > len(DEFAULT_LABELS):
            raise ValueError(
                f"only {len(DEFAULT_LABELS)} default labels; pass explicit labels for m={m}"
            )
        labels = DEFAULT_LABELS[:m]
    if len(labels) != m or len(set(labels)) != m:
        raise ValueError("labels must be m unique names")
    conditions = list(conditions) if conditions else list(DEFAULT_CONDITIONS)
    conditions.sort(key=lambda e: (e.temp_c, e.voltage_v))

    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    if export_hex:
        (out_dir / "hex").mkdir(exist_ok=True)

    master = np.random.default_rng(seed)
    ordered = sorted(labels)
    device_seeds = {
        dev: int(master.integers(0, 2**63)) for dev in ordered
    }
    records = []
    for dev in ordered:
        fp = new_fingerprint(device_seeds[dev], dev)
        for pattern in PATTERNS:
            for env in conditions:
                for rep in range(repeats):
                    noise_seed = int(master.integers(0, 2**63))
                    resp = measure(fp, pattern, env, noise_seed, repeat=rep)
                    name = _image_name(dev, pattern, env, rep)
                    imgen.write_pgm(out_dir / "images" / name, response_to_phenotype(resp))
                    if export_hex:
                        hexdir = out_dir / "hex" / dev
                        hexdir.mkdir(exist_ok=True)
                        hexname = (
                            f"{pattern.value}_{env.temp_c:g}_{env.voltage_v:.2f}_{rep}.txt"
                        )
                        (hexdir / hexname).write_text(imgen.format_hex_response(resp.data))
                    records.append(
                        ManifestRecord(
                            device_id=dev,
                            pattern=pattern.value,
                            temp_c=env.temp_c,
                            voltage_v=env.voltage_v,
                            repeat=rep,
                            image_path=f"images/{name}",
                        )
                    )
    records.sort(key=ManifestRecord.sort_key)
    manifest = DatasetManifest(
        records=records,
        devices=[{"device_id": d, "seed": device_seeds[d]} for d in ordered],
        seed=int(seed),
        root=out_dir,
    )
    manifest.save(out_dir / "manifest.json")
    return manifest
