"""Minimal reverse-mode autodiff over float64 numpy arrays.

Supports exactly what MLP-scale actor-critic training needs: dense linear
layers, smooth elementwise ops, reductions, column slicing/concatenation.
Everything is float64 and single-threaded deterministic: two identical
forward/backward passes produce bitwise-identical results.
"""

from __future__ import annotations

import numpy as np


class NumericalError(RuntimeError):
    """Raised when a non-finite value appears where finite math is required."""


def _asarray(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # sum over prepended axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """One tape node: a value, an accumulated gradient slot, and vjp links."""

    __slots__ = ("value", "grad", "_parents", "_tape")

    def __init__(self, value, tape: "Tape | None" = None):
        self.value = _asarray(value)
        self.grad = None
        self._parents = ()  # tuple of (Var, vjp) pairs
        self._tape = tape
        if tape is not None:
            tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    # -- operator sugar (other may be Var, ndarray, or scalar) --
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self._tape), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other, self._tape), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        raise NotImplementedError("only **2 is supported")


class Tape:
    """Records Vars in construction order so backward can walk them reversed."""

    def __init__(self):
        self.nodes: list[Var] = []

    def var(self, value) -> Var:
        """A differentiable leaf (gradients will accumulate here)."""
        return Var(value, self)

    def const(self, value) -> Var:
        """A leaf whose gradient we never read; still tracked for simplicity."""
        return Var(value, self)


def _lift(x, tape: Tape | None) -> Var:
    if isinstance(x, Var):
        return x
    return Var(x, tape)


def _node(tape, value, parents) -> Var:
    out = Var(value, tape)
    out._parents = tuple(parents)
    return out


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var) and x._tape is not None:
            return x._tape
    return None


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = _lift(a, t), _lift(b, t)
    return _node(t, a.value + b.value, [
        (a, lambda g: _unbroadcast(g, a.value.shape)),
        (b, lambda g: _unbroadcast(g, b.value.shape)),
    ])


def sub(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = _lift(a, t), _lift(b, t)
    return _node(t, a.value - b.value, [
        (a, lambda g: _unbroadcast(g, a.value.shape)),
        (b, lambda g: _unbroadcast(-g, b.value.shape)),
    ])


def mul(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = _lift(a, t), _lift(b, t)
    return _node(t, a.value * b.value, [
        (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
        (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
    ])


def div(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = _lift(a, t), _lift(b, t)
    inv = 1.0 / b.value
    return _node(t, a.value * inv, [
        (a, lambda g: _unbroadcast(g * inv, a.value.shape)),
        (b, lambda g: _unbroadcast(-g * a.value * inv * inv, b.value.shape)),
    ])


def matmul(a: Var, b: Var) -> Var:
    t = _tape_of(a, b)
    a, b = _lift(a, t), _lift(b, t)
    return _node(t, a.value @ b.value, [
        (a, lambda g: g @ b.value.T),
        (b, lambda g: a.value.T @ g),
    ])


def linear(x: Var, w: Var, b: Var) -> Var:
    """Dense layer x @ w.T + b for x (batch, in), w (out, in), b (out,)."""
    t = _tape_of(x, w, b)
    x, w, b = _lift(x, t), _lift(w, t), _lift(b, t)
    return _node(t, x.value @ w.value.T + b.value, [
        (x, lambda g: g @ w.value),
        (w, lambda g: g.T @ x.value),
        (b, lambda g: g.sum(axis=0)),
    ])


def square(a) -> Var:
    t = _tape_of(a)
    a = _lift(a, t)
    return _node(t, a.value * a.value, [(a, lambda g: g * (2.0 * a.value))])


def tanh(a) -> Var:
    t = _tape_of(a)
    a = _lift(a, t)
    y = np.tanh(a.value)
    return _node(t, y, [(a, lambda g: g * (1.0 - y * y))])


def exp(a) -> Var:
    t = _tape_of(a)
    a = _lift(a, t)
    y = np.exp(a.value)
    return _node(t, y, [(a, lambda g: g * y)])


def log(a) -> Var:
    t = _tape_of(a)
    a = _lift(a, t)
    return _node(t, np.log(a.value), [(a, lambda g: g / a.value)])


def softplus(a) -> Var:
    t = _tape_of(a)
    a = _lift(a, t)
    y = np.logaddexp(0.0, a.value)
    sig = 1.0 / (1.0 + np.exp(-a.value))
    return _node(t, y, [(a, lambda g: g * sig)])


def clip(a, lo: float, hi: float) -> Var:
    """Clamp with pass-through gradient strictly inside [lo, hi]."""
    t = _tape_of(a)
    a = _lift(a, t)
    y = np.clip(a.value, lo, hi)
    inside = (a.value > lo) & (a.value < hi)
    return _node(t, y, [(a, lambda g: g * inside)])


def maximum(a, floor: float) -> Var:
    """max(a, floor) elementwise; gradient passes where a > floor."""
    t = _tape_of(a)
    a = _lift(a, t)
    y = np.maximum(a.value, floor)
    mask = a.value > floor
    return _node(t, y, [(a, lambda g: g * mask)])


def vsum(a, axis=None) -> Var:
    t = _tape_of(a)
    a = _lift(a, t)
    y = a.value.sum(axis=axis)
    if axis is None:
        vjp = lambda g: np.broadcast_to(g, a.value.shape).copy()
    else:
        vjp = lambda g: np.broadcast_to(np.expand_dims(g, axis), a.value.shape).copy()
    return _node(t, y, [(a, vjp)])


def vmean(a, axis=None) -> Var:
    t = _tape_of(a)
    a = _lift(a, t)
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(vsum(a, axis=axis), 1.0 / n)


def col_slice(a: Var, start: int, stop: int) -> Var:
    """Columns [start:stop) of a 2-D array."""
    t = _tape_of(a)
    a = _lift(a, t)

    def vjp(g):
        out = np.zeros_like(a.value)
        out[:, start:stop] = g
        return out

    return _node(t, a.value[:, start:stop], [(a, vjp)])


def concat_cols(parts: list) -> Var:
    t = _tape_of(*parts)
    parts = [_lift(p, t) for p in parts]
    widths = [p.value.shape[1] for p in parts]
    offs = np.concatenate([[0], np.cumsum(widths)])
    value = np.concatenate([p.value for p in parts], axis=1)
    links = []
    for i, p in enumerate(parts):
        s, e = int(offs[i]), int(offs[i + 1])
        links.append((p, lambda g, s=s, e=e: g[:, s:e]))
    return _node(t, value, links)


# ---------------------------------------------------------------------------
# backward


def backward(root: Var, leaves: list[Var]) -> list[np.ndarray]:
    """Propagate d root = 1 through the tape; return and clear leaf grads.

    root must be scalar (0-d or size-1). Gradients of non-leaf nodes are
    discarded; the tape itself stays reusable for another backward pass.
    """
    if root.value.size != 1:
        raise ValueError("backward expects a scalar root")
    if not np.isfinite(root.value):
        raise NumericalError("loss is not finite")
    tape = root._tape
    root.grad = np.ones_like(root.value)
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node._parents:
            pg = vjp(g)
            if parent.grad is None:
                parent.grad = pg.copy() if isinstance(pg, np.ndarray) else _asarray(pg)
            else:
                parent.grad = parent.grad + pg
    out = []
    for leaf in leaves:
        g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        out.append(np.asarray(g, dtype=np.float64).reshape(leaf.value.shape))
    for node in tape.nodes:
        node.grad = None
    return out
