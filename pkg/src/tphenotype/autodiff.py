"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every operation records its parents and a closure that pushes the output
gradient back to them. Calling :meth:`Var.backward` on a scalar walks the
graph in reverse topological order. Only real-valued arrays are supported;
complex quantities are carried as separate real and imaginary parts.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out axes that numpy broadcasting created or stretched
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "_parents", "_backward")
    __array_priority__ = 100.0

    def __init__(self, value, parents: Sequence["Var"] = (), backward: Callable | None = None):
        self.value = np.asarray(value, dtype=float)
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape})"

    def _accumulate(self, g: np.ndarray) -> None:
        g = _unbroadcast(np.asarray(g, dtype=float), self.value.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def backward(self) -> None:
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar output")
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic -------------------------------------------------------------

    def __add__(self, other):
        other = as_var(other)

        def back(g):
            self._accumulate(g)
            other._accumulate(g)

        return Var(self.value + other.value, (self, other), back)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_var(other)

        def back(g):
            self._accumulate(g)
            other._accumulate(-g)

        return Var(self.value - other.value, (self, other), back)

    def __rsub__(self, other):
        return as_var(other) - self

    def __neg__(self):
        return Var(-self.value, (self,), lambda g: self._accumulate(-g))

    def __mul__(self, other):
        other = as_var(other)

        def back(g):
            self._accumulate(g * other.value)
            other._accumulate(g * self.value)

        return Var(self.value * other.value, (self, other), back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_var(other)

        def back(g):
            self._accumulate(g / other.value)
            other._accumulate(-g * self.value / other.value**2)

        return Var(self.value / other.value, (self, other), back)

    def __rtruediv__(self, other):
        return as_var(other) / self

    def __pow__(self, exponent: float):
        def back(g):
            self._accumulate(g * exponent * self.value ** (exponent - 1))

        return Var(self.value**exponent, (self,), back)

    def __matmul__(self, other):
        other = as_var(other)

        def back(g):
            a, b = self.value, other.value
            if b.ndim == 1:
                self._accumulate(np.multiply.outer(g, b))
                other._accumulate(np.tensordot(a, g, axes=(list(range(a.ndim - 1)), list(range(g.ndim)))))
                return
            self._accumulate(g @ np.swapaxes(b, -1, -2))
            gb = np.swapaxes(a, -1, -2) @ g
            other._accumulate(gb)

        return Var(self.value @ other.value, (self, other), back)

    def __rmatmul__(self, other):
        return as_var(other) @ self

    def __getitem__(self, index):
        basic = not any(isinstance(i, (list, np.ndarray)) for i in (index if isinstance(index, tuple) else (index,)))

        def back(g):
            full = np.zeros_like(self.value)
            if basic:
                full[index] += g
            else:
                np.add.at(full, index, g)
            self._accumulate(full)

        return Var(self.value[index], (self,), back)

    # shape ------------------------------------------------------------------

    def reshape(self, *shape):
        return Var(self.value.reshape(*shape), (self,), lambda g: self._accumulate(g.reshape(self.value.shape)))

    def sum(self, axis=None, keepdims: bool = False):
        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.value.shape))

        return Var(self.value.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


# elementwise functions ------------------------------------------------------


def exp(x: Var) -> Var:
    out = np.exp(x.value)
    return Var(out, (x,), lambda g: x._accumulate(g * out))


def log(x: Var) -> Var:
    return Var(np.log(x.value), (x,), lambda g: x._accumulate(g / x.value))


def sin(x: Var) -> Var:
    return Var(np.sin(x.value), (x,), lambda g: x._accumulate(g * np.cos(x.value)))


def cos(x: Var) -> Var:
    return Var(np.cos(x.value), (x,), lambda g: x._accumulate(-g * np.sin(x.value)))


def tanh(x: Var) -> Var:
    out = np.tanh(x.value)
    return Var(out, (x,), lambda g: x._accumulate(g * (1.0 - out**2)))


def sigmoid(x: Var) -> Var:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return Var(out, (x,), lambda g: x._accumulate(g * out * (1.0 - out)))


def relu(x: Var) -> Var:
    # subgradient 0 at the kink
    mask = x.value > 0
    return Var(np.where(mask, x.value, 0.0), (x,), lambda g: x._accumulate(g * mask))


def hypot(x: Var, y: Var) -> Var:
    """sqrt(x**2 + y**2) with a zero gradient where both parts vanish."""
    x, y = as_var(x), as_var(y)
    r = np.hypot(x.value, y.value)
    safe = np.where(r > 0, r, 1.0)

    def back(g):
        x._accumulate(np.where(r > 0, g * x.value / safe, 0.0))
        y._accumulate(np.where(r > 0, g * y.value / safe, 0.0))

    return Var(r, (x, y), back)


def log_softmax(x: Var, axis: int = -1) -> Var:
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def back(g):
        x._accumulate(g - soft * g.sum(axis=axis, keepdims=True))

    return Var(out, (x,), back)


def concat(parts: Sequence[Var], axis: int = -1) -> Var:
    parts = [as_var(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            p._accumulate(np.take(g, np.arange(lo, hi), axis=axis))

    return Var(np.concatenate([p.value for p in parts], axis=axis), parts, back)


def stack(parts: Sequence[Var], axis: int = 0) -> Var:
    parts = [as_var(p) for p in parts]

    def back(g):
        for i, p in enumerate(parts):
            p._accumulate(np.take(g, i, axis=axis))

    return Var(np.stack([p.value for p in parts], axis=axis), parts, back)


def take_along_axis(x: Var, indices: np.ndarray, axis: int) -> Var:
    def back(g):
        full = np.zeros_like(x.value)
        np.put_along_axis(full, indices, g, axis=axis)
        x._accumulate(full)

    return Var(np.take_along_axis(x.value, indices, axis=axis), (x,), back)


def where(mask: np.ndarray, a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)

    def back(g):
        a._accumulate(np.where(mask, g, 0.0))
        b._accumulate(np.where(mask, 0.0, g))

    return Var(np.where(mask, a.value, b.value), (a, b), back)


def value_and_grad(fn: Callable[..., Var], params: dict[str, np.ndarray]):
    """Evaluate ``fn(**vars)`` and return ``(value, {name: gradient})``."""
    leaves = {k: Var(v) for k, v in params.items()}
    out = fn(leaves)
    out.backward()
    grads = {k: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)) for k, leaf in leaves.items()}
    return float(out.value), grads
