"""Reverse-mode autodiff on dense float64 arrays.

A Tensor wraps a numpy array and, when it results from an operation on
tensors that require gradients, remembers its parents together with a
vector-Jacobian product for each.  Calling ``backward()`` on a scalar
walks the recorded graph once in reverse topological order and
accumulates gradients into the leaves.

Everything is float64 and pure: the same inputs always produce
bit-identical outputs.
"""

from __future__ import annotations

import numpy as np


class DiffError(Exception):
    """Raised on invalid use of the autodiff substrate."""


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    # sum out prepended axes
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # sum over axes that were broadcast from size 1
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Dense float64 tensor participating in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        # list of (parent Tensor, vjp: upstream ndarray -> ndarray)
        self._parents: list = []
        self._name = name

    # ---- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DiffError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={self.requires_grad}, name={self._name!r})"

    # ---- graph construction --------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents) -> "Tensor":
        live = [(p, vjp) for p, vjp in parents if p.requires_grad or p._parents]
        out = Tensor(data, requires_grad=False)
        out._parents = live
        return out

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # ---- backward ------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate gradients of this scalar into all reachable leaves."""
        if self.data.size != 1:
            raise DiffError("backward() requires a scalar loss")
        if not np.isfinite(self.data).all():
            raise DiffError("non-finite loss in backward()")

        # iterative topological order (graphs can be thousands of nodes deep)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        adjoint: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            up = adjoint.pop(id(node), None)
            if up is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += up
            for parent, vjp in node._parents:
                g = vjp(up)
                if not np.isfinite(g).all():
                    raise DiffError("non-finite gradient encountered in backward()")
                key = id(parent)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + g
                else:
                    adjoint[key] = g

    # ---- operators -------------------------------------------------------

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


# ---- elementwise arithmetic ----------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return Tensor._make(out, [
        (a, lambda g, sa=a.data.shape: _unbroadcast(g, sa)),
        (b, lambda g, sb=b.data.shape: _unbroadcast(g, sb)),
    ])


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return Tensor._make(out, [
        (a, lambda g, sa=a.data.shape: _unbroadcast(g, sa)),
        (b, lambda g, sb=b.data.shape: _unbroadcast(-g, sb)),
    ])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    return Tensor._make(out, [
        (a, lambda g, bd=b.data, sa=a.data.shape: _unbroadcast(g * bd, sa)),
        (b, lambda g, ad=a.data, sb=b.data.shape: _unbroadcast(g * ad, sb)),
    ])


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return Tensor._make(out, [
        (a, lambda g, bd=b.data, sa=a.data.shape: _unbroadcast(g / bd, sa)),
        (b, lambda g, ad=a.data, bd=b.data, sb=b.data.shape:
            _unbroadcast(-g * ad / (bd * bd), sb)),
    ])


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data
    def vjp_a(g, ad=a.data, bd=b.data):
        if ad.ndim == 1 and bd.ndim == 2:   # (k,) @ (k,n) -> (n,)
            return g @ bd.T
        if ad.ndim == 2 and bd.ndim == 1:   # (m,k) @ (k,) -> (m,)
            return np.outer(g, bd)
        return g @ np.swapaxes(bd, -1, -2)
    def vjp_b(g, ad=a.data, bd=b.data):
        if ad.ndim == 1 and bd.ndim == 2:
            return np.outer(ad, g)
        if ad.ndim == 2 and bd.ndim == 1:
            return ad.T @ g
        return np.swapaxes(ad, -1, -2) @ g
    return Tensor._make(out, [(a, vjp_a), (b, vjp_b)])


# ---- nonlinearities --------------------------------------------------------


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._make(out, [(a, lambda g, o=out: g * (1.0 - o * o))])


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor._make(out, [(a, lambda g, o=out: g * o * (1.0 - o))])


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return Tensor._make(out, [(a, lambda g, ad=a.data: g / (1.0 + np.exp(-ad)))])


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._make(out, [(a, lambda g, o=out: g * o)])


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)
    return Tensor._make(out, [(a, lambda g, ad=a.data: g / ad)])


def square(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._make(a.data * a.data, [(a, lambda g, ad=a.data: g * 2.0 * ad)])


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._make(np.abs(a.data), [(a, lambda g, ad=a.data: g * np.sign(ad))])


def maximum(a, b) -> Tensor:
    """Elementwise max; at ties the gradient goes to the first argument."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data >= b.data
    out = np.where(take_a, a.data, b.data)
    return Tensor._make(out, [
        (a, lambda g, m=take_a, sa=a.data.shape: _unbroadcast(g * m, sa)),
        (b, lambda g, m=~take_a, sb=b.data.shape: _unbroadcast(g * m, sb)),
    ])


# ---- reductions and shaping -------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    def vjp(g, shape=a.data.shape, axis=axis, keepdims=keepdims):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(ax % len(shape) for ax in axes):
                g = np.expand_dims(g, ax)
        return np.broadcast_to(g, shape).copy()
    return Tensor._make(out, [(a, vjp)])


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else (
        np.prod([a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return Tensor._make(out, [(a, lambda g, s=a.data.shape: g.reshape(s))])


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    parents = []
    offset = 0
    for t in tensors:
        w = t.data.shape[axis]
        def vjp(g, off=offset, w=w, axis=axis):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(off, off + w)
            return g[tuple(sl)]
        parents.append((t, vjp))
        offset += w
    return Tensor._make(out, parents)


def take(a, idx) -> Tensor:
    a = as_tensor(a)
    out = a.data[idx]
    def vjp(g, shape=a.data.shape, idx=idx):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return full
    return Tensor._make(np.array(out, copy=True), [(a, vjp)])


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    parents = []
    for i, t in enumerate(tensors):
        def vjp(g, i=i, axis=axis):
            return np.take(g, i, axis=axis)
        parents.append((t, vjp))
    return Tensor._make(out, parents)
