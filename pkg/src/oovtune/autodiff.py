"""Reverse-mode automatic differentiation over float64 numpy arrays.

A ``Tensor`` wraps an ndarray and remembers how it was produced. Calling
:func:`backward` on a scalar result walks the recorded graph once and
accumulates gradients into every reachable tensor created with
``requires_grad=True``. Gradients are additive across calls: running
backward twice doubles each accumulated entry.

Only the operations the transducer model needs are provided. All math is
64-bit; overflow-prone reductions (logsumexp, log_softmax) subtract the
max before exponentiating.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DimensionError


class Tensor:
    """Node in the computation graph holding a float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad = np.zeros_like(self.data)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -other if isinstance(other, Tensor) else -float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _node(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out._parents = parents
    out._backward = backward_fn
    return out


def _acc(grads: dict, needs: dict, node: Tensor, g: np.ndarray):
    """Accumulate an upstream gradient for ``node`` in the per-call table."""
    if not needs.get(id(node), False):
        return
    key = id(node)
    cur = grads.get(key)
    grads[key] = g if cur is None else cur + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(root: Tensor, grad_output: np.ndarray | None = None):
    """Propagate gradients from ``root`` into every requires_grad tensor.

    The per-call gradient table starts fresh each time, so repeated calls
    add (never overwrite) into ``Tensor.grad``.
    """
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    needs: dict[int, bool] = {}
    for node in topo:  # parents precede children in postorder
        needs[id(node)] = node.requires_grad or any(needs.get(id(p), False) for p in node._parents)

    seed = np.ones_like(root.data) if grad_output is None else np.asarray(grad_output, dtype=np.float64)
    grads: dict[int, np.ndarray] = {id(root): seed}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = node.grad + g
        if node._backward is not None:
            node._backward(g, grads, needs)


def _as_tensor_or_const(x):
    if isinstance(x, Tensor):
        return x, None
    return None, np.asarray(x, dtype=np.float64)


def add(a, b) -> Tensor:
    ta, ca = _as_tensor_or_const(a)
    tb, cb = _as_tensor_or_const(b)
    da = ta.data if ta is not None else ca
    db = tb.data if tb is not None else cb
    out_data = da + db
    parents = tuple(t for t in (ta, tb) if t is not None)

    def bw(g, grads, needs):
        if ta is not None:
            _acc(grads, needs, ta, _unbroadcast(g, da.shape))
        if tb is not None:
            _acc(grads, needs, tb, _unbroadcast(g, db.shape))

    return _node(out_data, parents, bw)


def mul(a, b) -> Tensor:
    ta, ca = _as_tensor_or_const(a)
    tb, cb = _as_tensor_or_const(b)
    da = ta.data if ta is not None else ca
    db = tb.data if tb is not None else cb
    out_data = da * db
    parents = tuple(t for t in (ta, tb) if t is not None)

    def bw(g, grads, needs):
        if ta is not None:
            _acc(grads, needs, ta, _unbroadcast(g * db, da.shape))
        if tb is not None:
            _acc(grads, needs, tb, _unbroadcast(g * da, db.shape))

    return _node(out_data, parents, bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def bw(g, grads, needs):
        _acc(grads, needs, a, g @ b.data.T)
        _acc(grads, needs, b, a.data.T @ g)

    return _node(out_data, (a, b), bw)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def bw(g, grads, needs):
        _acc(grads, needs, x, g * (1.0 - out_data * out_data))

    return _node(out_data, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    out_data = expit(x.data)

    def bw(g, grads, needs):
        _acc(grads, needs, x, g * out_data * (1.0 - out_data))

    return _node(out_data, (x,), bw)


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g, grads, needs):
        if axis is not None and not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, ax)
        _acc(grads, needs, x, np.broadcast_to(g, x.data.shape))

    return _node(out_data, (x,), bw)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out_data = x.data.reshape(shape)

    def bw(g, grads, needs):
        _acc(grads, needs, x, g.reshape(x.data.shape))

    return _node(out_data, (x,), bw)


def getitem(x: Tensor, idx) -> Tensor:
    """Basic indexing (ints and slices). Backward scatters into zeros."""
    out_data = x.data[idx]

    def bw(g, grads, needs):
        full = np.zeros_like(x.data)
        full[idx] += g
        _acc(grads, needs, x, full)

    return _node(out_data, (x,), bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = list(tensors)
    out_data = np.stack([t.data for t in ts], axis=axis)

    def bw(g, grads, needs):
        gm = np.moveaxis(g, axis, 0)
        for i, t in enumerate(ts):
            _acc(grads, needs, t, gm[i])

    return _node(out_data, tuple(ts), bw)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` by integer index array."""
    ids = np.asarray(ids, dtype=np.int64)
    out_data = table.data[ids]

    def bw(g, grads, needs):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        _acc(grads, needs, table, full)

    return _node(out_data, (table,), bw)


def logsumexp(v: Tensor) -> Tensor:
    """log(sum(exp(v))) over all elements, stabilized by max subtraction."""
    if v.data.size == 0:
        raise ValueError("logsumexp of an empty tensor")
    m = np.max(v.data)
    shifted = np.exp(v.data - m)
    total = shifted.sum()
    out_data = np.asarray(m + np.log(total))
    softmax = shifted / total

    def bw(g, grads, needs):
        _acc(grads, needs, v, g * softmax)

    return _node(out_data, (v,), bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """x - logsumexp(x) along ``axis``; exp of the result sums to 1."""
    if x.data.size == 0:
        raise ValueError("log_softmax of an empty tensor")
    m = np.max(x.data, axis=axis, keepdims=True)
    shifted = x.data - m
    log_norm = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out_data = shifted - log_norm
    probs = np.exp(out_data)

    def bw(g, grads, needs):
        _acc(grads, needs, x, g - probs * g.sum(axis=axis, keepdims=True))

    return _node(out_data, (x,), bw)


def assert_finite(arrays: Iterable[np.ndarray], what: str):
    """Raise NumericsError if any array holds a NaN or infinity."""
    from .errors import NumericsError

    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericsError(f"non-finite values in {what}")
