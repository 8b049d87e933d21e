"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps a numpy array and records the operation that
produced it; calling :meth:`Tensor.backward` on a scalar loss walks the
recorded graph in reverse topological order and accumulates gradients
into every reachable parameter (a Tensor created with
``requires_grad=True``).

Tensors are immutable values once created.  A graph belongs to a single
logical thread; independent graphs (e.g. per-sequence losses) can be
built concurrently because nodes share no mutable state until backward
runs on them.

Every op checks its output for non-finite values (disable via
``set_check_finite`` for micro-benchmarks only).  Ops on inputs that do
not require gradients produce detached outputs, so constant subgraphs
cost no closures.
"""

import contextlib

import numpy as np

from . import backend
from .errors import ContractError, NumericError, ShapeError

_GRAD_ENABLED = True
_CHECK_FINITE = True


def set_check_finite(flag):
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


@contextlib.contextmanager
def no_grad():
    """Build no graph inside this context; outputs are detached constants."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph ----------------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into .grad of every reachable leaf."""
        if self.data.size != 1:
            raise ContractError("backward() requires a scalar loss node")

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._bwd is not None:
                node._bwd(node.grad)
                node._bwd = None  # free closures as we go

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)  # copy: g may be aliased
        else:
            self.grad += g

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return powi(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape)


def param(data):
    """Leaf tensor that receives gradients."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _finite_or_raise(data, op):
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by op '{op}'")


def _node(data, parents, bwd, op):
    """Wrap an op result; detach when no parent needs gradients."""
    _finite_or_raise(data, op)
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data)
    if track:
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._bwd = bwd
    return out


def _unbroadcast(g, shape):
    """Reduce gradient g back to the given pre-broadcast shape."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ----------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return _node(data, (a, b), bwd, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.data.shape))

    return _node(data, (a, b), bwd, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), bwd, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(data, (a, b), bwd, "div")


def powi(a, exponent):
    a = as_tensor(a)
    e = float(exponent)
    data = a.data**e

    def bwd(g):
        a._accum(g * e * a.data ** (e - 1.0))

    return _node(data, (a,), bwd, f"pow{exponent}")


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        data = np.exp(a.data)

    def bwd(g):
        a._accum(g * data)

    return _node(data, (a,), bwd, "exp")


def log(a):
    a = as_tensor(a)
    with np.errstate(invalid="ignore", divide="ignore"):
        data = np.log(a.data)

    def bwd(g):
        a._accum(g / a.data)

    return _node(data, (a,), bwd, "log")


def tanh(a):
    a = as_tensor(a)
    data = np.tanh(a.data)

    def bwd(g):
        a._accum(g * (1.0 - data * data))

    return _node(data, (a,), bwd, "tanh")


def clamp(a, lo, hi):
    """Clip to [lo, hi]; gradient is zero outside the open interval."""
    a = as_tensor(a)
    data = np.clip(a.data, lo, hi)

    def bwd(g):
        a._accum(g * ((a.data > lo) & (a.data < hi)))

    return _node(data, (a,), bwd, "clamp")


def scaled_softplus(x, gamma):
    """gamma * log(1 + exp(x / gamma)); both arguments may carry gradients.

    gamma broadcasts against x from the trailing axis (numpy rules).
    Strictly positive and overflow-free for any finite input.
    """
    x, gamma = as_tensor(x), as_tensor(gamma)
    if np.any(gamma.data <= 0.0):
        raise ContractError("scaled_softplus requires gamma > 0")
    gb = np.ascontiguousarray(np.broadcast_to(gamma.data, x.data.shape))
    xc = np.ascontiguousarray(x.data)
    data = backend.kernels.scaled_softplus_fwd(xc, gb)

    def bwd(g):
        gx, ggamma = backend.kernels.scaled_softplus_bwd(xc, gb, np.ascontiguousarray(g))
        if x.requires_grad:
            x._accum(gx)
        if gamma.requires_grad:
            gamma._accum(_unbroadcast(ggamma, gamma.data.shape))

    return _node(data, (x, gamma), bwd, "scaled_softplus")


def softplus(x):
    return scaled_softplus(x, Tensor(1.0))


# -- linear algebra and shaping -------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return _node(data, (a, b), bwd, "matmul")


def transpose(a):
    a = as_tensor(a)

    def bwd(g):
        a._accum(g.T)

    return _node(a.data.T.copy(), (a,), bwd, "transpose")


def reshape(a, shape):
    a = as_tensor(a)

    def bwd(g):
        a._accum(g.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), bwd, "reshape")


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.data.shape).copy())

    return _node(data, (a,), bwd, "sum")


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def rows(a, start, stop):
    """Contiguous row slice a[start:stop]."""
    a = as_tensor(a)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        a._accum(full)

    return _node(a.data[start:stop].copy(), (a,), bwd, "rows")


def cols(a, start, stop):
    """Contiguous column slice a[:, start:stop]."""
    a = as_tensor(a)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        a._accum(full)

    return _node(a.data[:, start:stop].copy(), (a,), bwd, "cols")


def vstack(parts):
    parts = [as_tensor(p) for p in parts]
    data = np.vstack([p.data for p in parts])
    splits = np.cumsum([p.data.shape[0] for p in parts])[:-1]

    def bwd(g):
        for p, gp in zip(parts, np.split(g, splits, axis=0)):
            if p.requires_grad:
                p._accum(gp)

    return _node(data, tuple(parts), bwd, "vstack")


def hstack(parts):
    parts = [as_tensor(p) for p in parts]
    data = np.hstack([p.data for p in parts])
    splits = np.cumsum([p.data.shape[1] for p in parts])[:-1]

    def bwd(g):
        for p, gp in zip(parts, np.split(g, splits, axis=1)):
            if p.requires_grad:
                p._accum(gp)

    return _node(data, tuple(parts), bwd, "hstack")


def take_rows(a, indices):
    """Row gather a[indices]; scatter-adds gradients back (embedding lookup)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accum(full)

    return _node(a.data[idx], (a,), bwd, "take_rows")


def gather_cols(a, indices):
    """out[i] = a[i, indices[i]] for a 2-D tensor; returns a vector."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    rng = np.arange(a.data.shape[0])

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rng, idx), g)
        a._accum(full)

    return _node(a.data[rng, idx], (a,), bwd, "gather_cols")


def causal_softmax(scores):
    """Causally masked row softmax for square attention scores."""
    scores = as_tensor(scores)
    probs = backend.kernels.causal_softmax_fwd(np.ascontiguousarray(scores.data))

    def bwd(g):
        scores._accum(backend.kernels.causal_softmax_bwd(probs, np.ascontiguousarray(g)))

    return _node(probs, (scores,), bwd, "causal_softmax")


def layer_norm(x):
    """Row-wise normalisation to zero mean / unit variance (no gain or bias)."""
    x = as_tensor(x)
    y, rstd = backend.kernels.layernorm_fwd(np.ascontiguousarray(x.data))

    def bwd(g):
        x._accum(backend.kernels.layernorm_bwd(y, rstd, np.ascontiguousarray(g)))

    return _node(y, (x,), bwd, "layer_norm")


# -- parameter bookkeeping -------------------------------------------------


def collect_gradients(params):
    """Gradient map for a dict of named parameters after a backward pass.

    Parameters the loss never touched get zero gradients, so every entry
    is present exactly once and shapes always match.
    """
    out = {}
    for name, p in params.items():
        out[name] = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
    return out


def zero_gradients(params):
    for p in params.values():
        p.grad = None
