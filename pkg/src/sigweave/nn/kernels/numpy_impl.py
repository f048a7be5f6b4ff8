"""Pure-numpy patch extraction/scatter kernels (fallback backend)."""

import numpy as np


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C*k*k, oh*ow) patch matrix, zero-padded borders."""
    N, C, H, W = x.shape
    oh = (H + 2 * pad - k) // stride + 1
    ow = (W + 2 * pad - k) // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sn, sc, sh, sw = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(N, C, k, k, oh, ow),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return windows.reshape(N, C * k * k, oh * ow)


def col2im(cols: np.ndarray, H: int, W: int, k: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add patch columns back onto (N, C, H, W)."""
    N, ckk, L = cols.shape
    C = ckk // (k * k)
    oh = (H + 2 * pad - k) // stride + 1
    ow = (W + 2 * pad - k) // stride + 1
    cols6 = cols.reshape(N, C, k, k, oh, ow)
    out = np.zeros((N, C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    for ki in range(k):
        for kj in range(k):
            out[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += cols6[
                :, :, ki, kj
            ]
    if pad:
        out = out[:, :, pad : pad + H, pad : pad + W]
    return np.ascontiguousarray(out)
