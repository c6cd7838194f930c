"""Pure-numpy kernels, used when the compiled extension is unavailable.

Term grouping matches the compiled kernels: contributions accumulate in
(tap row, tap column) order with float64 arithmetic, so both backends agree
far below the documented 1e-5 tolerance.
"""

import numpy as np


def conv3x3_relu(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1, then ReLU.

    x: (H, W, Cin) float64; w: (3, 3, Cin, Cout) float64 -> (H, W, Cout).
    """
    h, wd, cin = x.shape
    cout = w.shape[3]
    padded = np.zeros((h + 2, wd + 2, cin))
    padded[1:-1, 1:-1] = x
    acc = np.zeros((h * wd, cout))
    for di in range(3):
        for dj in range(3):
            tap = padded[di : di + h, dj : dj + wd].reshape(h * wd, cin)
            acc += tap @ w[di, dj]
    np.maximum(acc, 0.0, out=acc)
    return acc.reshape(h, wd, cout)


def maxpool2x2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling, stride 2, floor semantics (odd edges dropped)."""
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    trimmed = x[: h2 * 2, : w2 * 2]
    return trimmed.reshape(h2, 2, w2, 2, x.shape[2]).max(axis=(1, 3))
