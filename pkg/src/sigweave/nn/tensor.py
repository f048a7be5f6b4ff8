"""Minimal reverse-mode autodiff over numpy arrays.

Covers exactly the ops the autoencoder/discriminator stack needs: elementwise
arithmetic with broadcasting, 2-D matmul, strided/upsampling convolutions (via
the kernels backend), instance normalization, activations, column slicing and
concatenation (for latent segment exchange), reductions and a fused softmax
cross-entropy. Every analytic gradient here is pinned against central finite
differences in the test suite.

Engines are dtype-parametric: training runs float32, gradient checks float64.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import kernels
from ..errors import ShapeError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back onto the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    # -- plumbing ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeError("backward() needs a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape)

    def mean(self):
        return mean(self)

    def sum(self):
        return sum_(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _make(data, parents, backward) -> Tensor:
    track = _GRAD_ENABLED and any(p.requires_grad or p._parents for p in parents)
    if track:
        return Tensor(data, requires_grad=False, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        out_data = a.data + b

        def bwd(g, a=a):
            a._accumulate(_unbroadcast(g, a.data.shape))

        return _make(out_data, (a,), bwd)
    a = as_tensor(a)
    out_data = a.data + b.data

    def bwd(g, a=a, b=b):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), bwd)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        out_data = a.data * b

        def bwd(g, a=a, b=b):
            a._accumulate(_unbroadcast(g * b, a.data.shape))

        return _make(out_data, (a,), bwd)
    a = as_tensor(a)
    out_data = a.data * b.data

    def bwd(g, a=a, b=b):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def bwd(g, a=a, b=b):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return _make(out_data, (a, b), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def bwd(g, a=a):
        a._accumulate(g.reshape(a.data.shape))

    return _make(out_data, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out_data = a.data * mask

    def bwd(g, a=a, mask=mask):
        a._accumulate(g * mask)

    return _make(out_data, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                 np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))

    def bwd(g, a=a, s=s):
        a._accumulate(g * s * (1.0 - s))

    return _make(s, (a,), bwd)


def softplus(a: Tensor) -> Tensor:
    x = a.data
    out_data = np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))

    def bwd(g, a=a, x=x):
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                     np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))
        a._accumulate(g * s)

    return _make(out_data, (a,), bwd)


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def bwd(g, a=a):
        a._accumulate(g / a.data)

    return _make(out_data, (a,), bwd)


def abs_(a: Tensor) -> Tensor:
    out_data = np.abs(a.data)

    def bwd(g, a=a):
        a._accumulate(g * np.sign(a.data))

    return _make(out_data, (a,), bwd)


def mean(a: Tensor) -> Tensor:
    out_data = a.data.mean(dtype=a.data.dtype)

    def bwd(g, a=a):
        a._accumulate(np.full_like(a.data, g / a.data.size))

    return _make(np.asarray(out_data), (a,), bwd)


def sum_(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.sum(dtype=a.data.dtype))

    def bwd(g, a=a):
        a._accumulate(np.full_like(a.data, g))

    return _make(out_data, (a,), bwd)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols expects (N, d), got {a.data.shape}")
    out_data = a.data[:, start:stop].copy()

    def bwd(g, a=a, start=start, stop=stop):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        a._accumulate(full)

    return _make(out_data, (a,), bwd)


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows of a batch tensor; repeated indices accumulate gradient."""
    idx = np.asarray(idx, dtype=np.intp)
    out_data = a.data[idx].copy()

    def bwd(g, a=a, idx=idx):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accumulate(full)

    return _make(out_data, (a,), bwd)


def concat_rows(parts: list[Tensor]) -> Tensor:
    out_data = np.concatenate([p.data for p in parts], axis=0)
    sizes = [p.data.shape[0] for p in parts]

    def bwd(g, parts=tuple(parts), sizes=tuple(sizes)):
        off = 0
        for p, n in zip(parts, sizes):
            p._accumulate(g[off : off + n])
            off += n

    return _make(out_data, tuple(parts), bwd)


def concat_cols(parts: list[Tensor]) -> Tensor:
    out_data = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]

    def bwd(g, parts=tuple(parts), widths=tuple(widths)):
        off = 0
        for p, w in zip(parts, widths):
            p._accumulate(g[:, off : off + w])
            off += w

    return _make(out_data, tuple(parts), bwd)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int, pad: int) -> Tensor:
    """x (N,C,H,W) * w (CO,C,k,k) + b (CO,) with square kernel/stride."""
    N, C, H, W = x.data.shape
    CO, CI, k, _ = w.data.shape
    if CI != C:
        raise ShapeError(f"conv2d channel mismatch: input {C}, weight {CI}")
    oh = (H + 2 * pad - k) // stride + 1
    ow = (W + 2 * pad - k) // stride + 1
    cols = kernels.im2col(x.data, k, stride, pad)  # (N, C*k*k, L)
    w2 = w.data.reshape(CO, C * k * k)
    out_data = np.matmul(w2, cols).reshape(N, CO, oh, ow) + b.data.reshape(1, CO, 1, 1)

    def bwd(g, x=x, w=w, b=b, cols=cols, w2=w2, k=k, stride=stride, pad=pad,
            N=N, C=C, H=H, W=W, CO=CO, oh=oh, ow=ow):
        gf = g.reshape(N, CO, oh * ow)
        b._accumulate(gf.sum(axis=(0, 2)))
        dw2 = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0)
        w._accumulate(dw2.reshape(w.data.shape))
        dcols = np.matmul(w2.T, gf)
        x._accumulate(kernels.col2im(dcols, H, W, k, stride, pad))

    return _make(out_data, (x, w, b), bwd)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x spatial upsampling of (N,C,H,W)."""
    out_data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bwd(g, x=x):
        N, C, H, W = x.data.shape
        x._accumulate(g.reshape(N, C, H, 2, W, 2).sum(axis=(3, 5)))

    return _make(out_data, (x,), bwd)


def pad_hw(x: Tensor, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Zero-pad the spatial dims of (N,C,H,W)."""
    if top == bottom == left == right == 0:
        return x
    out_data = np.pad(x.data, ((0, 0), (0, 0), (top, bottom), (left, right)))

    def bwd(g, x=x, top=top, left=left):
        N, C, H, W = x.data.shape
        x._accumulate(np.ascontiguousarray(g[:, :, top : top + H, left : left + W]))

    return _make(out_data, (x,), bwd)


def crop_hw(x: Tensor, top: int, left: int, H: int, W: int) -> Tensor:
    """Take a spatial window out of (N,C,·,·); adjoint of pad_hw."""
    if (top, left) == (0, 0) and x.data.shape[2:] == (H, W):
        return x
    out_data = np.ascontiguousarray(x.data[:, :, top : top + H, left : left + W])

    def bwd(g, x=x, top=top, left=left, H=H, W=W):
        full = np.zeros_like(x.data)
        full[:, :, top : top + H, left : left + W] = g
        x._accumulate(full)

    return _make(out_data, (x,), bwd)


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel normalization over the spatial dims.

    Degenerate 1x1 spatial extent bypasses normalization (statistics are
    undefined there and would zero out the signal); the affine part remains.
    """
    N, C, H, W = x.data.shape
    gb = gamma.data.reshape(1, C, 1, 1)
    bb = beta.data.reshape(1, C, 1, 1)
    if H * W == 1:
        out_data = x.data * gb + bb

        def bwd_affine(g, x=x, gamma=gamma, beta=beta, gb=gb):
            gamma._accumulate((g * x.data).sum(axis=(0, 2, 3)))
            beta._accumulate(g.sum(axis=(0, 2, 3)))
            x._accumulate(g * gb)

        return _make(out_data, (x, gamma, beta), bwd_affine)

    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    r = 1.0 / np.sqrt(var + eps)
    xh = xc * r
    out_data = xh * gb + bb

    def bwd(g, x=x, gamma=gamma, beta=beta, xh=xh, r=r, gb=gb):
        gamma._accumulate((g * xh).sum(axis=(0, 2, 3)))
        beta._accumulate(g.sum(axis=(0, 2, 3)))
        gh = g * gb
        m1 = gh.mean(axis=(2, 3), keepdims=True)
        m2 = (gh * xh).mean(axis=(2, 3), keepdims=True)
        x._accumulate(r * (gh - m1 - xh * m2))

    return _make(out_data, (x, gamma, beta), bwd)


def cross_entropy_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of (N, K) logits against int labels."""
    N = logits.data.shape[0]
    shift = logits.data - logits.data.max(axis=1, keepdims=True)
    expv = np.exp(shift)
    probs = expv / expv.sum(axis=1, keepdims=True)
    nll = -(shift[np.arange(N), labels] - np.log(expv.sum(axis=1)))
    out_data = np.asarray(nll.mean(), dtype=logits.data.dtype)

    def bwd(g, logits=logits, probs=probs, labels=labels, N=N):
        d = probs.copy()
        d[np.arange(N), labels] -= 1.0
        logits._accumulate(g * d / N)

    return _make(out_data, (logits,), bwd)


def l1(a: Tensor, b: Tensor) -> Tensor:
    """Pixel-mean absolute difference."""
    return mean(abs_(a - b))
