"""Convolutional feature extraction for phenotype images.

A five-block VGG-style stack (conv counts 2,2,3,3,3; all 3x3 filters, each
block closed by a 2x2 max pool) maps a 200x220x3 input to a 6x6xC volume,
flattened in (row, col, channel) order. Channel widths are the classic
[64, 128, 256, 512, 512] scaled by a width factor. Filters are fixed: either
drawn from a seeded He-scaled normal or imported from a weight container;
there is no training and no biases, so an all-zero input yields an all-zero
feature vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import imgen
from .container import read_container, write_container
from .kernels import conv3x3_relu, maxpool2x2

WEIGHTS_MAGIC = b"DPANW1"

BLOCK_WIDTHS = [64, 128, 256, 512, 512]
CONVS_PER_BLOCK = [2, 2, 3, 3, 3]
ALLOWED_WIDTH_SCALES = (0.125, 0.25, 0.5, 1.0)

INPUT_SHAPE = (imgen.HEIGHT, imgen.WIDTH, 3)  # (200, 220, 3)
OUTPUT_GRID = 6 * 6


@dataclass(frozen=True)
class SeededRandom:
    seed: int


@dataclass(frozen=True)
class Imported:
    path: str


@dataclass(frozen=True)
class ExtractorConfig:
    width_scale: float = 0.125
    weight_source: SeededRandom | Imported = SeededRandom(0)

    def __post_init__(self):
        if self.width_scale not in ALLOWED_WIDTH_SCALES:
            raise ValueError(
                f"width_scale must be one of {ALLOWED_WIDTH_SCALES}, got {self.width_scale}"
            )

    @property
    def block_widths(self) -> list[int]:
        return [int(w * self.width_scale) for w in BLOCK_WIDTHS]

    @property
    def feature_length(self) -> int:
        return OUTPUT_GRID * self.block_widths[-1]


def layer_plan(width_scale: float) -> list[tuple[int, int]]:
    """(in_channels, out_channels) for each of the 13 conv layers."""
    widths = [int(w * width_scale) for w in BLOCK_WIDTHS]
    plan = []
    cin = 3
    for width, n_convs in zip(widths, CONVS_PER_BLOCK):
        for _ in range(n_convs):
            plan.append((cin, width))
            cin = width
    return plan


def fan_in(cin: int) -> int:
    return 3 * 3 * cin


def he_scale(cin: int) -> float:
    return float(np.sqrt(2.0 / fan_in(cin)))


@dataclass
class WeightSet:
    width_scale: float
    seed: int | None
    layers: list[np.ndarray]  # 13 arrays (3, 3, cin, cout) float32


def init_weights(cfg: ExtractorConfig) -> WeightSet:
    """Draw every filter from N(0, 2/fan_in); no biases."""
    if not isinstance(cfg.weight_source, SeededRandom):
        raise ValueError("init_weights needs a SeededRandom weight source")
    rng = np.random.default_rng(cfg.weight_source.seed)
    layers = []
    for cin, cout in layer_plan(cfg.width_scale):
        draw = rng.standard_normal((3, 3, cin, cout)) * he_scale(cin)
        layers.append(draw.astype("<f4"))
    return WeightSet(cfg.width_scale, int(cfg.weight_source.seed), layers)


def export_weights(ws: WeightSet, path) -> None:
    header = {
        "format": "dpan-weights-v1",
        "width_scale": ws.width_scale,
        "block_widths": [int(w * ws.width_scale) for w in BLOCK_WIDTHS],
        "seed": ws.seed,
    }
    arrays = [(f"conv{idx:02d}", layer) for idx, layer in enumerate(ws.layers)]
    write_container(path, WEIGHTS_MAGIC, header, arrays)


def import_weights(path) -> WeightSet:
    header, sections = read_container(path, WEIGHTS_MAGIC)
    width_scale = float(header["width_scale"])
    plan = layer_plan(width_scale)
    layers = []
    for idx, (cin, cout) in enumerate(plan):
        name = f"conv{idx:02d}"
        if name not in sections:
            raise ValueError(f"weight container missing layer {name}")
        arr = sections[name]
        if arr.shape != (3, 3, cin, cout):
            raise ValueError(
                f"layer {name} shape {arr.shape} != expected {(3, 3, cin, cout)}"
            )
        layers.append(arr)
    return WeightSet(width_scale, header.get("seed"), layers)


def load_weights(cfg: ExtractorConfig) -> WeightSet:
    if isinstance(cfg.weight_source, SeededRandom):
        return init_weights(cfg)
    ws = import_weights(cfg.weight_source.path)
    if ws.width_scale != cfg.width_scale:
        raise ValueError(
            f"imported weights have width_scale {ws.width_scale}, config wants {cfg.width_scale}"
        )
    return ws


def preprocess(p: imgen.Phenotype) -> np.ndarray:
    """Scale intensities to [0, 1] and replicate across 3 channels."""
    gray = p.pixels.astype(np.float64) / 255.0
    return np.repeat(gray[:, :, None], 3, axis=2)


def extract(ws: WeightSet, t: np.ndarray) -> np.ndarray:
    """Run the conv stack; returns the flattened 6x6xC feature vector."""
    if t.shape != INPUT_SHAPE:
        raise ValueError(f"expected input shape {INPUT_SHAPE}, got {t.shape}")
    x = np.ascontiguousarray(t, dtype=np.float64)
    li = 0
    for n_convs in CONVS_PER_BLOCK:
        for _ in range(n_convs):
            w = np.ascontiguousarray(ws.layers[li], dtype=np.float64)
            x = conv3x3_relu(x, w)
            li += 1
        x = np.ascontiguousarray(maxpool2x2(x))
    # terminal 1x1 average pool over the 6x6 grid is the identity
    out = np.asarray(x).ravel()
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite values in feature vector")
    return out


def extract_phenotype(ws: WeightSet, p: imgen.Phenotype) -> np.ndarray:
    return extract(ws, preprocess(p))


def extract_many(ws: WeightSet, phenotypes) -> np.ndarray:
    return np.stack([extract_phenotype(ws, p) for p in phenotypes])
