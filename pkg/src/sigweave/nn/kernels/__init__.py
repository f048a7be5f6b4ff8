"""Convolution patch kernels with a compiled core and a numpy fallback.

The compiled extension is picked automatically when present; set the
environment variable ``SIGWEAVE_KERNELS=numpy`` (or call ``set_backend``)
to force the fallback. Both backends implement the same two functions:

    im2col(x, k, stride, pad)          (N,C,H,W) -> (N, C*k*k, oh*ow)
    col2im(cols, H, W, k, stride, pad) adjoint scatter-add

Results agree to accumulation-order rounding; within one backend they are
bit-deterministic.
"""

import os

import numpy as np

from . import numpy_impl

_BACKENDS = {"numpy": numpy_impl}

try:
    from . import _native

    _BACKENDS["native"] = _native
except ImportError:
    _native = None

_env = os.environ.get("SIGWEAVE_KERNELS", "").strip().lower()
if _env in _BACKENDS:
    _active = _env
else:
    _active = "native" if "native" in _BACKENDS else "numpy"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    _active = name


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    return _BACKENDS[_active].im2col(np.ascontiguousarray(x), k, stride, pad)


def col2im(cols: np.ndarray, H: int, W: int, k: int, stride: int, pad: int) -> np.ndarray:
    return _BACKENDS[_active].col2im(np.ascontiguousarray(cols), H, W, k, stride, pad)
