"""Numerical utilities shared by the trainable modules.

Quadrature on the unit interval, finite-difference gradient checking,
seeded random generators, flat parameter packing and the AdamW optimizer.
"""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_NODES = 1001


class NumericError(ArithmeticError):
    """Raised when a computation produces non-finite values."""


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator; equal seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed for a child generator."""
    return int(rng.integers(0, 2**63 - 1))


def quadrature_unit_interval(f: Callable[[np.ndarray], np.ndarray], nodes: int = DEFAULT_NODES) -> complex:
    """Integrate ``f`` over [0, 1] on ``nodes`` uniform points.

    ``f`` is called once with the whole node vector and may return real or
    complex values. Composite Simpson is used (exact for cubics); with an
    even node count the last three intervals use the 3/8 rule, and two
    nodes reduce to the trapezoid.
    """
    if nodes < 2:
        raise ValueError(f"nodes must be >= 2, got {nodes}")
    t = np.linspace(0.0, 1.0, nodes)
    values = np.asarray(f(t))
    if values.shape != t.shape:
        values = np.broadcast_to(values, t.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        raise NumericError(f"integrand is not finite at t={t[np.argmax(bad)]:.17g}")
    return complex(_simpson(values, t[1] - t[0]))


def _simpson(y: np.ndarray, h: float):
    intervals = y.size - 1
    if intervals == 1:
        return h * (y[0] + y[1]) / 2.0
    tail = 0.0
    if intervals % 2:
        # three-eighths rule on the last three intervals keeps cubic exactness
        y, last = y[:-3], y[-4:]
        tail = 3.0 * h / 8.0 * (last[0] + 3.0 * last[1] + 3.0 * last[2] + last[3])
        if y.size == 1:
            return tail
    return h / 3.0 * (y[0] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum() + y[-1]) + tail


def grad_check(
    loss: Callable[[np.ndarray], tuple[float, np.ndarray]],
    params: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Compare an analytic gradient against central differences.

    Parameters
    ----------
    loss : callable
        Maps a flat parameter vector to ``(value, gradient)``.
    params : ndarray
        Point at which to check.
    h : float
        Finite-difference step.

    Returns
    -------
    float
        ``max_i |g_i - fd_i| / max(1, |fd_i|)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = np.asarray(params, dtype=float).copy()
    value, grad = loss(params)
    if not np.isfinite(value):
        raise NumericError("loss is not finite at the check point")
    grad = np.asarray(grad, dtype=float).ravel()
    worst = 0.0
    for i in range(params.size):
        orig = params[i]
        params[i] = orig + h
        up = loss(params)[0]
        params[i] = orig - h
        down = loss(params)[0]
        params[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"loss is not finite when perturbing coordinate {i}")
        fd = (up - down) / (2.0 * h)
        worst = max(worst, abs(grad[i] - fd) / max(1.0, abs(fd)))
    return worst


def flatten(params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(params[k]) for k in sorted(params)])


def unflatten(vector: np.ndarray, like: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out, pos = {}, 0
    for k in sorted(like):
        size = like[k].size
        out[k] = np.asarray(vector[pos : pos + size], dtype=float).reshape(like[k].shape)
        pos += size
    return out


def checksum(params: dict[str, np.ndarray]) -> str:
    import hashlib

    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k], dtype=float).tobytes())
    return h.hexdigest()


class AdamW:
    """Adam with decoupled weight decay, operating on a dict of arrays in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 0.01, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
