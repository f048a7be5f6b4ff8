# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled patch extraction/scatter kernels (hot path of every convolution)."""

import numpy as np

cimport cython


ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int k, int stride, int pad):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t oh = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (W + 2 * pad - k) // stride + 1
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_np = np.zeros((N, C * k * k, oh * ow), dtype=dtype)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t n, c, ki, kj, oi, oj, row, ii, jj
    with nogil:
        for n in range(N):
            for c in range(C):
                for ki in range(k):
                    for kj in range(k):
                        row = (c * k + ki) * k + kj
                        for oi in range(oh):
                            ii = oi * stride + ki - pad
                            if ii < 0 or ii >= H:
                                continue
                            for oj in range(ow):
                                jj = oj * stride + kj - pad
                                if 0 <= jj < W:
                                    out[n, row, oi * ow + oj] = x[n, c, ii, jj]
    return out_np


def col2im(real[:, :, ::1] cols, Py_ssize_t H, Py_ssize_t W, int k, int stride, int pad):
    cdef Py_ssize_t N = cols.shape[0], ckk = cols.shape[1]
    cdef Py_ssize_t C = ckk // (k * k)
    cdef Py_ssize_t oh = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (W + 2 * pad - k) // stride + 1
    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_np = np.zeros((N, C, H, W), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_np
    cdef Py_ssize_t n, c, ki, kj, oi, oj, row, ii, jj
    with nogil:
        for n in range(N):
            for c in range(C):
                for ki in range(k):
                    for kj in range(k):
                        row = (c * k + ki) * k + kj
                        for oi in range(oh):
                            ii = oi * stride + ki - pad
                            if ii < 0 or ii >= H:
                                continue
                            for oj in range(ow):
                                jj = oj * stride + kj - pad
                                if 0 <= jj < W:
                                    out[n, c, ii, jj] += cols[n, row, oi * ow + oj]
    return out_np
