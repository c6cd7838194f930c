#!/usr/bin/env python3
"""Time the compiled conv/pool kernels against the numpy fallback.

Runs representative single layers plus a full feature extraction at both
width scales, for every backend importable in this environment.

Usage: python benchmarks/compare_backends.py [--full-width]
"""

import argparse
import importlib
import time

import numpy as np

from dpan import features as feat
from dpan import imgen


def load_backends():
    backends = {}
    try:
        backends["cython"] = importlib.import_module("dpan._convkernels")
    except ImportError:
        pass
    backends["numpy"] = importlib.import_module("dpan._kernels_numpy")
    return backends


def time_call(fn, *args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def layer_benchmarks(mod):
    rng = np.random.default_rng(0)
    rows = []
    for h, w, cin, cout in ((200, 220, 3, 64), (50, 55, 128, 128), (12, 13, 512, 512)):
        x = np.ascontiguousarray(rng.standard_normal((h, w, cin)))
        k = np.ascontiguousarray(rng.standard_normal((3, 3, cin, cout)) * 0.05)
        rows.append((f"conv {h}x{w}x{cin}->{cout}", time_call(mod.conv3x3_relu, x, k)))
    x = np.ascontiguousarray(rng.standard_normal((200, 220, 64)))
    rows.append(("pool 200x220x64", time_call(mod.maxpool2x2, x)))
    return rows


def extract_benchmark(mod, width_scale):
    ws = feat.init_weights(feat.ExtractorConfig(width_scale, feat.SeededRandom(1)))
    rng = np.random.default_rng(2)
    p = imgen.Phenotype(rng.integers(0, 256, (200, 220), dtype=np.uint8))
    x = feat.preprocess(p)

    def run():
        cur = np.ascontiguousarray(x)
        li = 0
        for n_convs in feat.CONVS_PER_BLOCK:
            for _ in range(n_convs):
                cur = mod.conv3x3_relu(
                    np.ascontiguousarray(cur),
                    np.ascontiguousarray(ws.layers[li], dtype=np.float64),
                )
                li += 1
            cur = mod.maxpool2x2(np.ascontiguousarray(cur))

    return time_call(run, repeats=2)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--full-width", action="store_true",
                        help="also time a width_scale=1.0 extraction (slow)")
    args = parser.parse_args()

    backends = load_backends()
    print(f"backends available: {', '.join(backends)}\n")
    for name, mod in backends.items():
        print(f"== {name}")
        for label, t in layer_benchmarks(mod):
            print(f"  {label:26s} {t * 1e3:9.2f} ms")
        t = extract_benchmark(mod, 0.125)
        print(f"  {'extract width 1/8':26s} {t * 1e3:9.2f} ms")
        if args.full_width:
            t = extract_benchmark(mod, 1.0)
            print(f"  {'extract width 1':26s} {t:9.2f} s")
        print()


if __name__ == "__main__":
    main()
