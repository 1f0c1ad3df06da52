"""Dense float64 tensors with reverse-mode gradient accumulation.

Every op builds its output eagerly with numpy and, when any input requires a
gradient, records a closure mapping the output adjoint to input adjoints.
``Tensor.backward`` linearises the graph into a :class:`Tape` (topological
order) and replays the closures in reverse.
"""
from __future__ import annotations

import contextlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Raised for incompatible operand shapes or invalid axes."""


_grad_enabled = True

#: Forward evaluations per op name. Cleared with ``OP_COUNTS.clear()``.
OP_COUNTS: Counter = Counter()


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and 0 in arr.shape:
            raise ShapeError(f"extents must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self._op: str | None = None

    # -- basic properties ------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, op={self._op})"

    def __len__(self):
        return self.shape[0]

    # -- autograd ----------------------------------------------------------
    def backward(self, grad=None):
        if grad is None:
            if self.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if not self.requires_grad:
            return
        tape = Tape.from_root(self)
        tape.run_backward(self, grad)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


@dataclass
class TapeNode:
    op: str
    inputs: tuple
    output: Tensor
    ctx: Callable


@dataclass
class Tape:
    """Topologically ordered record of the ops reachable from a root."""

    nodes: list = field(default_factory=list)

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for p in reversed(t._parents):
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        nodes = [TapeNode(t._op, t._parents, t, t._backward) for t in order if t._backward is not None]
        return cls(nodes)

    def run_backward(self, root: Tensor, seed: np.ndarray):
        # interior adjoints are per-pass; only leaves accumulate across passes
        for node in self.nodes:
            node.output.grad = None
        root.grad = seed.copy()
        for node in reversed(self.nodes):
            g = node.output.grad
            if g is None:
                continue
            in_grads = node.ctx(g)
            for p, gp in zip(node.inputs, in_grads):
                if gp is None or not p.requires_grad:
                    continue
                gp = _unbroadcast(np.asarray(gp, dtype=np.float64), p.shape)
                if p.grad is not None:
                    p.grad = p.grad + gp
                elif p._backward is None:
                    p.grad = np.array(gp)       # leaves get an owned, writable array
                else:
                    # interior adjoints are never mutated in place, so sharing is safe
                    p.grad = gp


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def apply_op(op: str, data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap ``data`` as the output of ``op``.

    ``backward(g)`` must return one adjoint (or None) per parent. Extension
    modules (e.g. the warp sampler) register their ops through this.
    """
    OP_COUNTS[op] += 1
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def _bshape(a: np.ndarray, b: np.ndarray):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from None


# -- elementwise ---------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a.data, b.data)
    return apply_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a.data, b.data)
    return apply_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a.data, b.data)
    ad, bd = a.data, b.data
    return apply_op("mul", ad * bd, (a, b),
                    lambda g: (g * bd if a.requires_grad else None, g * ad if b.requires_grad else None))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a.data, b.data)
    ad, bd = a.data, b.data
    out = ad / bd
    return apply_op("div", out, (a, b),
                    lambda g: (g / bd if a.requires_grad else None,
                               -g * out / bd if b.requires_grad else None))


def scalar_mul(a, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)
    return apply_op("scalar-mul", a.data * s, (a,), lambda g: (g * s,))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return apply_op("neg", -a.data, (a,), lambda g: (-g,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)
    ad = a.data
    return apply_op("pow", ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),))


def tabs(a) -> Tensor:
    # abs'(0) = 0
    a = as_tensor(a)
    s = np.sign(a.data)
    return apply_op("abs", np.abs(a.data), (a,), lambda g: (g * s,))


def maximum(a, b) -> Tensor:
    # ties route the gradient to the first argument
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a.data, b.data)
    first = a.data >= b.data
    return apply_op("max", np.where(first, a.data, b.data), (a, b),
                    lambda g: (g * first, g * ~first))


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a.data, b.data)
    first = a.data <= b.data
    return apply_op("min", np.where(first, a.data, b.data), (a, b),
                    lambda g: (g * first, g * ~first))


def texp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return apply_op("exp", out, (a,), lambda g: (g * out,))


def tlog(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return apply_op("log", np.log(ad), (a,), lambda g: (g / ad,))


def tsqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return apply_op("sqrt", out, (a,), lambda g: (g * 0.5 / out,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return apply_op("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tsin(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return apply_op("sin", np.sin(ad), (a,), lambda g: (g * np.cos(ad),))


def tcos(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return apply_op("cos", np.cos(ad), (a,), lambda g: (-g * np.sin(ad),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return apply_op("relu", np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def elu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    e = np.exp(np.minimum(a.data, 0.0))
    out = np.where(pos, a.data, e - 1.0)
    return apply_op("elu", out, (a,), lambda g: (np.where(pos, g, g * e),))


def where(mask, a, b) -> Tensor:
    """Select by a constant boolean mask; no gradient flows to the mask."""
    a, b = as_tensor(a), as_tensor(b)
    m = np.asarray(mask, dtype=bool)
    return apply_op("where", np.where(m, a.data, b.data), (a, b),
                    lambda g: (g * m, g * ~m))


_UNARY = {"abs": tabs, "exp": texp, "sigmoid": sigmoid, "relu": relu}
_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div, "max": maximum, "min": minimum}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Dispatch by op name; ``scalar-mul`` takes a python number as ``b``."""
    if kind in _UNARY:
        if b is not None:
            raise ShapeError(f"{kind} is unary")
        return _UNARY[kind](a)
    if kind in _BINARY:
        if b is None:
            raise ShapeError(f"{kind} needs two operands")
        return _BINARY[kind](a, b)
    if kind == "scalar-mul":
        return scalar_mul(a, b)
    raise ValueError(f"unknown elementwise op {kind!r}")


# -- reductions ----------------------------------------------------------
def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for rank {ndim}")
        out.append(ax % ndim)
    return tuple(sorted(set(out)))


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)
    shape = a.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return apply_op("sum", out, (a,), bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return scalar_mul(tsum(a, axes, keepdims), 1.0 / n)


def min_argmin(a, axis: int):
    """Minimum along ``axis`` plus the (first) argmin index array."""
    a = as_tensor(a)
    (ax,) = _norm_axes(axis, a.ndim)
    idx = np.argmin(a.data, axis=ax)
    val = np.take_along_axis(a.data, np.expand_dims(idx, ax), axis=ax).squeeze(ax)
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        np.put_along_axis(out, np.expand_dims(idx, ax), np.expand_dims(g, ax), axis=ax)
        return (out,)

    return apply_op("min-argmin", val, (a,), bw), idx


def reduce(kind: str, a, axes=None):
    if kind == "sum":
        return tsum(a, axes)
    if kind == "mean":
        return mean(a, axes)
    if kind == "min-with-argmin":
        if axes is None or (not isinstance(axes, int) and len(axes) != 1):
            raise ShapeError("min-with-argmin reduces exactly one axis")
        return min_argmin(a, axes if isinstance(axes, int) else axes[0])
    raise ValueError(f"unknown reduction {kind!r}")


# -- shape ops -----------------------------------------------------------
def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return apply_op("reshape", out, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return apply_op("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g) if _is_advanced(idx) else out.__setitem__(idx, g)
        return (out,)

    return apply_op("getitem", a.data[idx], (a,), bw)


def _is_advanced(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def bw(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(ts)))

    return apply_op("concat", out, ts, bw)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in ts]
    return concat(expanded, axis)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul needs (m,k)@(k,n), got {a.shape}@{b.shape}")
    ad, bd = a.data, b.data
    return apply_op("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


# -- image ops -------------------------------------------------------------
def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x[N,C,H,W] with w[O,C,kh,kw], zero padding."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and kernel")
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"conv2d channel mismatch: input {c}, kernel {cw}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("conv2d kernel extents must be odd")
    hp, wp = h + 2 * padding, wd + 2 * padding
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d output would be empty")
    xd = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = [kernels.im2col(xd[i], kh, kw, stride) for i in range(n)]
    wmat = w.data.reshape(o, -1)
    out = np.stack([wmat @ col for col in cols]).reshape(n, o, ho, wo)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data.reshape(1, o, 1, 1)
        parents.append(b)

    def bw(g):
        g2 = g.reshape(n, o, ho * wo)
        gw = sum(g2[i] @ cols[i].T for i in range(n)).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            gx = np.empty((n, c, h, wd))
            for i in range(n):
                full = kernels.col2im(wmat.T @ g2[i], c, hp, wp, kh, kw, stride, ho, wo)
                gx[i] = full[:, padding:padding + h, padding:padding + wd]
        res = [gx, gw]
        if b is not None:
            res.append(g.sum(axis=(0, 2, 3)))
        return tuple(res)

    return apply_op("conv2d", out, parents, bw)


def resize(x, mh: np.ndarray, mw: np.ndarray) -> Tensor:
    """Separable linear resampling: out[..., i, j] = sum mh[i,a] x[..., a, b] mw[j,b].

    Realises bilinear/nearest upsampling and adaptive average pooling from
    constant interpolation matrices.
    """
    x = as_tensor(x)
    if mh.shape[1] != x.shape[-2] or mw.shape[1] != x.shape[-1]:
        raise ShapeError("resize matrices do not match input extents")
    out = np.einsum("ia,...ab,jb->...ij", mh, x.data, mw, optimize=True)
    return apply_op("resize", out, (x,),
                    lambda g: (np.einsum("ia,...ij,jb->...ab", mh, g, mw, optimize=True),))


def box3(x) -> Tensor:
    """3x3 mean over the last two axes; windows truncated at the image edge."""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    cnt = _box_sum(np.ones((h, w)))
    return apply_op("box3", _box_sum(x.data) / cnt, (x,), lambda g: (_box_sum(g / cnt),))


def _box_sum(a: np.ndarray) -> np.ndarray:
    # symmetric 3x3 neighbourhood sum with zero outside; self-adjoint
    h, w = a.shape[-2:]
    return kernels.box_sum3(a.reshape(-1, h, w)).reshape(a.shape)


def gather_pixels(x, idx: np.ndarray) -> Tensor:
    """x[1,C,H,W] -> (C, len(idx)) feature columns at flat pixel indices."""
    x = as_tensor(x)
    _, c, h, w = x.shape
    flat = x.data.reshape(c, h * w)
    idx = np.asarray(idx, dtype=np.intp)

    def bw(g):
        out = np.empty((c, h * w))
        for ch in range(c):
            out[ch] = np.bincount(idx, weights=g[ch], minlength=h * w)
        return (out.reshape(x.shape),)

    return apply_op("gather", flat[:, idx], (x,), bw)


def l2_normalize(x, axis: int = 1, eps: float = 1e-12) -> Tensor:
    x = as_tensor(x)
    return div(x, tsqrt(add(tsum(mul(x, x), axis, keepdims=True), eps)))
