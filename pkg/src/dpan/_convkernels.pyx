# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled conv/pool kernels for the feature extractor hot loop."""

import numpy as np


def conv3x3_relu(double[:, :, ::1] x, double[:, :, :, ::1] w):
    """3x3 convolution, stride 1, zero padding 1, then ReLU.

    Accumulates per output pixel in (tap row, tap column, input channel)
    order with float64 arithmetic; matches the numpy fallback.
    """
    cdef Py_ssize_t h = x.shape[0]
    cdef Py_ssize_t wd = x.shape[1]
    cdef Py_ssize_t cin = x.shape[2]
    cdef Py_ssize_t cout = w.shape[3]
    out_arr = np.zeros((h, wd, cout))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, di, dj, ii, jj, ci, co
    cdef double v

    for i in range(h):
        for di in range(3):
            ii = i + di - 1
            if ii < 0 or ii >= h:
                continue
            for j in range(wd):
                for dj in range(3):
                    jj = j + dj - 1
                    if jj < 0 or jj >= wd:
                        continue
                    for ci in range(cin):
                        v = x[ii, jj, ci]
                        for co in range(cout):
                            out[i, j, co] += v * w[di, dj, ci, co]
    for i in range(h):
        for j in range(wd):
            for co in range(cout):
                if out[i, j, co] < 0.0:
                    out[i, j, co] = 0.0
    return out_arr


def maxpool2x2(double[:, :, ::1] x):
    """2x2 max pooling, stride 2, floor semantics (odd edges dropped)."""
    cdef Py_ssize_t h2 = x.shape[0] // 2
    cdef Py_ssize_t w2 = x.shape[1] // 2
    cdef Py_ssize_t c = x.shape[2]
    out_arr = np.empty((h2, w2, c))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double a, b

    for i in range(h2):
        for j in range(w2):
            for k in range(c):
                a = x[2 * i, 2 * j, k]
                b = x[2 * i, 2 * j + 1, k]
                if b > a:
                    a = b
                b = x[2 * i + 1, 2 * j, k]
                if b > a:
                    a = b
                b = x[2 * i + 1, 2 * j + 1, k]
                if b > a:
                    a = b
                out[i, j, k] = a
    return out_arr
