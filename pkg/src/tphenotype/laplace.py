"""Laplace embeddings: rational frequency-domain representations of a signal.

An embedding holds ``n`` poles ``p_m`` and an ``n x d`` coefficient matrix
``c_{m,l}``. In the frequency domain it is

    F(s) = sum_m sum_l c_{m,l} / (s - p_m)**l

and its time-domain signal on [0, 1] is

    x(t) = sum_m sum_l c_{m,l} t**(l-1) / (l-1)! * exp(p_m t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numeric import DEFAULT_NODES, quadrature_unit_interval

POLE_SINGULARITY_TOL = 1e-12


class PoleSingularityError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class EmbeddingRanges:
    """Box constraints on poles and coefficients.

    ``freq_max`` is in cycles per unit interval; the bound on ``Im(p)`` is
    the angular frequency ``2*pi*freq_max``.
    """

    r_max: float = 10.0
    freq_max: float = 20.0
    c_max: float = 5.0
    delta_pole: float = 1.0

    def __post_init__(self):
        for name in ("r_max", "freq_max", "c_max", "delta_pole"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def omega_max(self) -> float:
        return 2.0 * math.pi * self.freq_max


@dataclass(frozen=True)
class LaplaceEmbedding:
    poles: np.ndarray
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        poles = np.asarray(self.poles, dtype=complex).reshape(-1)
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.ndim == 1:
            coeffs = coeffs.reshape(poles.size, -1)
        if coeffs.shape[0] != poles.size:
            raise ValueError(f"coeffs has {coeffs.shape[0]} rows for {poles.size} poles")
        poles.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n(self) -> int:
        return self.poles.size

    @property
    def d(self) -> int:
        return self.coeffs.shape[1]

    def to_vector(self) -> np.ndarray:
        """Complex vector ``[p_1..p_n, c_11..c_nd]``."""
        return np.concatenate([self.poles, self.coeffs.reshape(-1)])

    def to_flat(self) -> list[float]:
        """Interleaved re/im reals, poles first then coefficients row-major."""
        v = self.to_vector()
        return np.column_stack([v.real, v.imag]).reshape(-1).tolist()

    @classmethod
    def from_flat(cls, values, n: int, d: int) -> "LaplaceEmbedding":
        values = np.asarray(values, dtype=float)
        if values.size != 2 * n * (d + 1):
            raise ValueError(f"expected {2 * n * (d + 1)} reals for n={n}, d={d}, got {values.size}")
        v = values[0::2] + 1j * values[1::2]
        return cls(v[:n], v[n:].reshape(n, d))

    def __eq__(self, other):
        if not isinstance(other, LaplaceEmbedding):
            return NotImplemented
        return np.array_equal(self.poles, other.poles) and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.poles.tobytes(), self.coeffs.tobytes()))


def eval_frequency(w: LaplaceEmbedding, s: complex) -> complex:
    s = complex(s)
    gaps = s - w.poles
    if np.any(np.abs(gaps) < POLE_SINGULARITY_TOL):
        m = int(np.argmin(np.abs(gaps)))
        raise PoleSingularityError(f"s={s} coincides with pole {m} ({w.poles[m]})")
    powers = gaps[:, None] ** np.arange(1, w.d + 1)[None, :]
    return complex(np.sum(w.coeffs / powers))


def _time_basis(t: np.ndarray, d: int) -> np.ndarray:
    # t**(l-1)/(l-1)! for l=1..d, with 0**0 = 1
    t = np.asarray(t, dtype=float)
    return np.stack([t**k / math.factorial(k) if k else np.ones_like(t) for k in range(d)], axis=-1)


def reconstruct(w: LaplaceEmbedding, t) -> np.ndarray | complex:
    """Time-domain signal of ``w`` at ``t`` (scalar or array) in [0, 1]."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    basis = _time_basis(t, w.d)  # (T, d)
    growth = np.exp(np.outer(t, w.poles))  # (T, n)
    out = np.einsum("tl,tm,ml->t", basis, growth, w.coeffs)
    return complex(out[0]) if scalar else out


def pole_precedes(a: complex, b: complex, delta_pole: float) -> bool:
    """Robust lexical order: real parts decide only when they differ by more than ``delta_pole``."""
    gap = abs(a.real - b.real)
    if gap > delta_pole:
        return a.real < b.real
    return a.imag <= b.imag


def sort_permutation(poles: np.ndarray, delta_pole: float) -> np.ndarray:
    """Index order that places ``poles`` in robust lexical order.

    The robust comparison is not transitive, so the result would depend on
    the input order. Poles are first put in exact (Re, Im) order and then
    insertion-sorted with the robust rule, which makes the output a
    function of the pole multiset alone.
    """
    poles = np.asarray(poles, dtype=complex)
    order = list(np.lexsort((poles.imag, poles.real)))
    out: list[int] = []
    for idx in order:
        pos = len(out)
        # move left past every element that idx strictly precedes
        while pos > 0:
            prev = out[pos - 1]
            if pole_precedes(poles[idx], poles[prev], delta_pole) and not pole_precedes(
                poles[prev], poles[idx], delta_pole
            ):
                pos -= 1
            else:
                break
        out.insert(pos, idx)
    return np.asarray(out, dtype=int)


def sort_poles(w: LaplaceEmbedding, delta_pole: float) -> LaplaceEmbedding:
    # exact duplicates of a pole with different coefficients: order rows by coefficients first
    tie = np.lexsort(tuple(np.concatenate([w.coeffs.imag.T[::-1], w.coeffs.real.T[::-1]])))
    poles, coeffs = w.poles[tie], w.coeffs[tie]
    perm = sort_permutation(poles, delta_pole)
    return LaplaceEmbedding(poles[perm], coeffs[perm])


def clamp_ranges(w: LaplaceEmbedding, ranges: EmbeddingRanges) -> LaplaceEmbedding:
    def box(z, re_lim, im_lim):
        return np.clip(z.real, -re_lim, re_lim) + 1j * np.clip(z.imag, -im_lim, im_lim)

    return LaplaceEmbedding(
        box(w.poles, ranges.r_max, ranges.omega_max),
        box(w.coeffs, ranges.c_max, ranges.c_max),
    )


def within_ranges(w: LaplaceEmbedding, ranges: EmbeddingRanges) -> bool:
    return bool(
        np.all(np.abs(w.poles.real) <= ranges.r_max)
        and np.all(np.abs(w.poles.imag) <= ranges.omega_max)
        and np.all(np.abs(w.coeffs.real) <= ranges.c_max)
        and np.all(np.abs(w.coeffs.imag) <= ranges.c_max)
    )


def trajectory_l2_distance(w1: LaplaceEmbedding, w2: LaplaceEmbedding, nodes: int = DEFAULT_NODES) -> float:
    """Squared L2 distance on [0, 1] between the two reconstructions."""

    def integrand(t):
        return np.abs(reconstruct(w1, t) - reconstruct(w2, t)) ** 2

    return quadrature_unit_interval(integrand, nodes).real
