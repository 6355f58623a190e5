"""Laplace encoders: recurrent summaries of irregular series mapped to Laplace embeddings.

A :class:`LaplaceEncoder` reads ``(dt_j, x(t_j))`` pairs with a single GRU
cell, passes the final state through a one-layer feedforward head and maps
the outputs to poles and coefficients with ``range * tanh(raw)``. Poles are
then put in robust lexical order.

:class:`CompositeEncoder` stacks one encoder per time-varying feature and
passes static features through as their first observed value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from . import autodiff as ad
from .data import Dataset, DatasetError, TimeSeries
from .laplace import EmbeddingRanges, LaplaceEmbedding, sort_permutation, sort_poles
from .numeric import AdamW, NumericError, child_seed, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderHyper:
    n: int = 4
    d: int = 1
    hidden: int = 10
    alpha: float = 1.0
    alpha1: float = 0.1
    alpha2: float = 0.01
    delta_pole: float = 1.0
    r_max: float = 10.0
    freq_max: float = 20.0
    c_max: float = 5.0
    lr: float = 0.01
    weight_decay: float = 0.01
    epochs: int = 50
    batch_size: int = 16
    distinct_subset: int = 10
    lr_final: float | None = None
    clip_norm: float = 0.0
    dt_scale: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.alpha1, self.alpha2) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.n < 1 or self.d < 1 or self.hidden < 1 or self.batch_size < 1:
            raise ValueError("n, d, hidden and batch_size must be positive")
        if self.clip_norm < 0:
            raise ValueError("clip_norm must be >= 0")

    @property
    def ranges(self) -> EmbeddingRanges:
        return EmbeddingRanges(self.r_max, self.freq_max, self.c_max, self.delta_pole)

    @property
    def width(self) -> int:
        """Number of reals in one embedding."""
        return 2 * self.n * (self.d + 1)


def init_weights(hyper: EncoderHyper, rng: np.random.Generator) -> dict[str, np.ndarray]:
    h = hyper.hidden
    k = 1.0 / math.sqrt(h)
    return {
        "gru_wx": rng.uniform(-k, k, size=(2, 3 * h)),
        "gru_wh": rng.uniform(-k, k, size=(h, 3 * h)),
        "gru_bx": rng.uniform(-k, k, size=3 * h),
        "gru_bh": rng.uniform(-k, k, size=3 * h),
        "head_w1": rng.uniform(-k, k, size=(h, h)),
        "head_b1": rng.uniform(-k, k, size=h),
        # small output layer so the first embeddings sit near the origin
        "head_w2": rng.normal(0.0, 0.01, size=(h, hyper.width)),
        "head_b2": np.zeros(hyper.width),
    }


# batching -------------------------------------------------------------------


@dataclass
class Batch:
    t: np.ndarray  # (B, T) padded timestamps
    x: np.ndarray  # (B, T) padded values
    mask: np.ndarray  # (B, T) 1 where observed
    dt: np.ndarray  # (B, T) intervals, dt_1 = t_1

    @property
    def size(self) -> int:
        return self.t.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)


def make_batch(series: list[tuple[np.ndarray, np.ndarray]]) -> Batch:
    if not series:
        raise ValueError("empty batch")
    width = max(len(t) for t, _ in series)
    b = len(series)
    t = np.zeros((b, width))
    x = np.zeros((b, width))
    mask = np.zeros((b, width))
    for i, (ti, xi) in enumerate(series):
        if len(ti) == 0:
            raise ValueError("cannot encode an empty series")
        t[i, : len(ti)] = ti
        x[i, : len(ti)] = xi
        mask[i, : len(ti)] = 1.0
        t[i, len(ti) :] = ti[-1]
    dt = np.diff(t, axis=1, prepend=0.0)
    return Batch(t, x, mask, dt)


# forward pass on the tape ---------------------------------------------------


@dataclass
class EmbeddingVars:
    pole_re: ad.Var  # (B, n)
    pole_im: ad.Var  # (B, n)
    coef_re: ad.Var  # (B, n, d)
    coef_im: ad.Var  # (B, n, d)

    def flat(self) -> ad.Var:
        b = self.pole_re.shape[0]
        return ad.concat(
            [self.pole_re, self.pole_im, self.coef_re.reshape(b, -1), self.coef_im.reshape(b, -1)], axis=1
        )


def forward(w: dict[str, ad.Var], batch: Batch, hyper: EncoderHyper) -> EmbeddingVars:
    h_dim = hyper.hidden
    b, steps = batch.t.shape
    h = ad.Var(np.zeros((b, h_dim)))
    for j in range(steps):
        inp = np.column_stack([hyper.dt_scale * batch.dt[:, j], batch.x[:, j]])
        gx = inp @ w["gru_wx"] + w["gru_bx"]
        gh = h @ w["gru_wh"] + w["gru_bh"]
        z = ad.sigmoid(gx[:, :h_dim] + gh[:, :h_dim])
        r = ad.sigmoid(gx[:, h_dim : 2 * h_dim] + gh[:, h_dim : 2 * h_dim])
        cand = ad.tanh(gx[:, 2 * h_dim :] + r * gh[:, 2 * h_dim :])
        new = (1.0 - z) * cand + z * h
        m = batch.mask[:, j : j + 1]
        h = m * new + (1.0 - m) * h if m.min() < 1 else new
    hidden = ad.tanh(h @ w["head_w1"] + w["head_b1"])
    raw = hidden @ w["head_w2"] + w["head_b2"]
    n, d = hyper.n, hyper.d
    rng_ = hyper.ranges
    pole_re = rng_.r_max * ad.tanh(raw[:, :n])
    pole_im = rng_.omega_max * ad.tanh(raw[:, n : 2 * n])
    coef_re = (rng_.c_max * ad.tanh(raw[:, 2 * n : 2 * n + n * d])).reshape(b, n, d)
    coef_im = (rng_.c_max * ad.tanh(raw[:, 2 * n + n * d :])).reshape(b, n, d)
    poles = pole_re.value + 1j * pole_im.value
    perm = np.stack([sort_permutation(p, hyper.delta_pole) for p in poles])
    perm3 = np.repeat(perm[:, :, None], d, axis=2)
    return EmbeddingVars(
        ad.take_along_axis(pole_re, perm, axis=1),
        ad.take_along_axis(pole_im, perm, axis=1),
        ad.take_along_axis(coef_re, perm3, axis=1),
        ad.take_along_axis(coef_im, perm3, axis=1),
    )


def reconstruct_vars(e: EmbeddingVars, t: np.ndarray) -> tuple[ad.Var, ad.Var]:
    """Real and imaginary parts of the reconstruction at ``t`` of shape (B, T)."""
    b, n = e.pole_re.shape
    d = e.coef_re.shape[2]
    tt = t[:, None, :]
    growth = ad.exp(e.pole_re.reshape(b, n, 1) * tt)
    phase = e.pole_im.reshape(b, n, 1) * tt
    ec = growth * ad.cos(phase)
    es = growth * ad.sin(phase)
    re = im = None
    for l in range(d):
        basis = (t**l / math.factorial(l))[:, None, :] if l else 1.0
        cr = e.coef_re[:, :, l].reshape(b, n, 1)
        ci = e.coef_im[:, :, l].reshape(b, n, 1)
        term_re = ((cr * ec - ci * es) * basis).sum(axis=1)
        term_im = ((cr * es + ci * ec) * basis).sum(axis=1)
        re = term_re if re is None else re + term_re
        im = term_im if im is None else im + term_im
    return re, im


def mse_terms(e: EmbeddingVars, batch: Batch) -> ad.Var:
    """Per-sample mean of |x - x_hat|^2 over the observed timestamps, shape (B,)."""
    re, im = reconstruct_vars(e, batch.t)
    sq = ((re - batch.x) ** 2 + im**2) * batch.mask
    return sq.sum(axis=1) / batch.lengths


def sep_terms(e: EmbeddingVars, delta_pole: float) -> ad.Var:
    b, n = e.pole_re.shape
    dre = e.pole_re.reshape(b, n, 1) - e.pole_re.reshape(b, 1, n)
    dim = e.pole_im.reshape(b, n, 1) - e.pole_im.reshape(b, 1, n)
    hinge = ad.relu(delta_pole - ad.hypot(dre, dim))
    off = 1.0 - np.eye(n)
    return (hinge * off).sum(axis=(2)).sum(axis=1)


def jitter_times(lengths: np.ndarray, width: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Timestamps ``clamp(j/T + eps/(2T), 0, 1)`` for j = 1..T per sample, plus a mask."""
    lengths = np.asarray(lengths, dtype=float)
    j = np.arange(1, width + 1)[None, :]
    eps = rng.normal(size=(lengths.size, width))
    t = np.clip(j / lengths[:, None] + eps / (2 * lengths[:, None]), 0.0, 1.0)
    mask = (j <= lengths[:, None]).astype(float)
    return t, mask


def real_terms(e: EmbeddingVars, t: np.ndarray, mask: np.ndarray) -> ad.Var:
    _, im = reconstruct_vars(e, t)
    return (im**2 * mask).sum(axis=1) / mask.sum(axis=1)


def distinct_terms(e: EmbeddingVars, subset: np.ndarray, grid: np.ndarray) -> ad.Var:
    """``||w_i - w_j||^2 exp(-||x_i - x_j||^2)`` over ordered pairs i != j of ``subset``."""
    k = len(subset)
    flat = e.flat()[subset]
    sub = EmbeddingVars(e.pole_re[subset], e.pole_im[subset], e.coef_re[subset], e.coef_im[subset])
    re, im = reconstruct_vars(sub, np.broadcast_to(grid, (k, grid.size)))
    dw = flat.reshape(k, 1, -1) - flat.reshape(1, k, -1)
    dre = re.reshape(k, 1, -1) - re.reshape(1, k, -1)
    dim = im.reshape(k, 1, -1) - im.reshape(1, k, -1)
    wdist = (dw**2).sum(axis=2)
    xdist = (dre**2 + dim**2).sum(axis=2)
    off = 1.0 - np.eye(k)
    return wdist * ad.exp(-xdist) * off


@dataclass
class LossInputs:
    """Random draws consumed by one evaluation of the training loss."""

    jitter_t: np.ndarray
    jitter_mask: np.ndarray
    subset: np.ndarray
    grid: np.ndarray

    @classmethod
    def draw(cls, batch: Batch, hyper: EncoderHyper, rng: np.random.Generator) -> "LossInputs":
        jt, jm = jitter_times(batch.lengths, batch.t.shape[1], rng)
        k = min(hyper.distinct_subset, batch.size)
        subset = np.sort(rng.choice(batch.size, size=k, replace=False))
        grid = np.linspace(0.0, 1.0, batch.t.shape[1])
        return cls(jt, jm, subset, grid)


def laplace_loss(w: dict[str, ad.Var], batch: Batch, hyper: EncoderHyper, draws: LossInputs):
    """Reconstruction error plus weighted uniqueness penalties; returns (total, mse)."""
    e = forward(w, batch, hyper)
    mse = mse_terms(e, batch).mean()
    total = mse
    if hyper.alpha > 0:
        total = total + hyper.alpha * sep_terms(e, hyper.delta_pole).mean()
    if hyper.alpha1 > 0:
        total = total + hyper.alpha1 * real_terms(e, draws.jitter_t, draws.jitter_mask).mean()
    k = len(draws.subset)
    if hyper.alpha2 > 0 and k > 1:
        pairs = distinct_terms(e, draws.subset, draws.grid).sum() * (1.0 / (k * (k - 1)))
        total = total + hyper.alpha2 * pairs
    return total, mse


# encoder objects ------------------------------------------------------------


@dataclass
class LaplaceEncoder:
    hyper: EncoderHyper
    weights: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list, compare=False, repr=False)

    @classmethod
    def initialize(cls, hyper: EncoderHyper, rng: np.random.Generator) -> "LaplaceEncoder":
        return cls(hyper, init_weights(hyper, rng))

    def _vars(self) -> dict[str, ad.Var]:
        return {k: ad.Var(v) for k, v in self.weights.items()}

    def embed_batch(self, series: list[tuple[np.ndarray, np.ndarray]]) -> list[LaplaceEmbedding]:
        e = forward(self._vars(), make_batch(series), self.hyper)
        poles = e.pole_re.value + 1j * e.pole_im.value
        coeffs = e.coef_re.value + 1j * e.coef_im.value
        return [LaplaceEmbedding(p, c) for p, c in zip(poles, coeffs)]

    def encode(self, t, x) -> LaplaceEmbedding:
        t = np.asarray(t, dtype=float)
        if t.size == 0:
            raise ValueError("cannot encode an empty series")
        if np.any(np.diff(t) < 0) or t[0] < 0 or t[-1] > 1:
            raise ValueError("timestamps must be nondecreasing in [0, 1]")
        return self.embed_batch([(t, np.asarray(x, dtype=float).reshape(-1))])[0]

    def mse(self, series: list[tuple[np.ndarray, np.ndarray]], batch_size: int = 256) -> np.ndarray:
        """Per-series reconstruction MSE at the observed timestamps."""
        out = []
        for lo in range(0, len(series), batch_size):
            batch = make_batch(series[lo : lo + batch_size])
            e = forward(self._vars(), batch, self.hyper)
            out.append(mse_terms(e, batch).value)
        return np.concatenate(out) if out else np.zeros(0)


def loss_mse(encoder: LaplaceEncoder, series: list[tuple[np.ndarray, np.ndarray]]) -> float:
    if not series:
        raise ValueError("empty batch")
    return float(np.mean(encoder.mse(series)))


def loss_sep(w: LaplaceEmbedding, delta_pole: float) -> float:
    gaps = np.abs(w.poles[:, None] - w.poles[None, :])
    hinge = np.maximum(0.0, delta_pole - gaps)
    np.fill_diagonal(hinge, 0.0)
    return float(hinge.sum())


def loss_real(w: LaplaceEmbedding, length: int, rng: np.random.Generator) -> float:
    from .laplace import reconstruct

    t, _ = jitter_times(np.array([length]), length, rng)
    return float(np.mean(np.imag(reconstruct(w, t[0])) ** 2))


def loss_distinct(wi: LaplaceEmbedding, wj: LaplaceEmbedding, xi: np.ndarray, xj: np.ndarray) -> float:
    dw = np.sum(np.abs(wi.to_vector() - wj.to_vector()) ** 2)
    dx = np.sum(np.abs(np.asarray(xi) - np.asarray(xj)) ** 2)
    return float(dw * np.exp(-dx))


def _feature_series(ds: Dataset, feature: int) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(s.t, s.x[:, feature]) for s in ds.series]


def epoch_lr(lr: float, lr_final: float | None, epoch: int, epochs: int) -> float:
    """Cosine decay from ``lr`` to ``lr_final`` over the run; constant when ``lr_final`` is None."""
    if lr_final is None or epochs <= 1:
        return lr
    frac = epoch / (epochs - 1)
    return lr_final + 0.5 * (lr - lr_final) * (1.0 + math.cos(math.pi * frac))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    return {k: g * (max_norm / norm) for k, g in grads.items()}


def train_encoder(
    series: list[tuple[np.ndarray, np.ndarray]],
    hyper: EncoderHyper,
    rng: np.random.Generator,
    val_series: list[tuple[np.ndarray, np.ndarray]] | None = None,
) -> LaplaceEncoder:
    """Fit a Laplace encoder with AdamW; keeps the weights with the best validation MSE."""
    if not series:
        raise ValueError("no training series")
    encoder = LaplaceEncoder.initialize(hyper, make_rng(child_seed(rng)))
    if hyper.epochs == 0:
        return encoder
    params = {k: v.copy() for k, v in encoder.weights.items()}
    opt = AdamW(params, lr=hyper.lr, weight_decay=hyper.weight_decay)
    monitor = val_series if val_series else series
    best_score, best = math.inf, {k: v.copy() for k, v in params.items()}
    history = []
    for epoch in range(hyper.epochs):
        opt.lr = epoch_lr(hyper.lr, hyper.lr_final, epoch, hyper.epochs)
        order = rng.permutation(len(series))
        totals = []
        for bi, lo in enumerate(range(0, len(series), hyper.batch_size)):
            batch = make_batch([series[i] for i in order[lo : lo + hyper.batch_size]])
            draws = LossInputs.draw(batch, hyper, rng)
            value, grads = ad.value_and_grad(lambda w: laplace_loss(w, batch, hyper, draws)[0], params)
            if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericError(f"non-finite encoder loss at epoch {epoch}, batch {bi} (value={value})")
            if hyper.clip_norm > 0:
                grads = clip_gradients(grads, hyper.clip_norm)
            opt.step(grads)
            totals.append(value)
        score = float(np.mean(LaplaceEncoder(hyper, params).mse(monitor)))
        history.append({"epoch": epoch, "loss": float(np.mean(totals)), "val_mse": score})
        logger.debug("encoder epoch %d loss %.5f val mse %.5f", epoch, np.mean(totals), score)
        if score < best_score:
            best_score, best = score, {k: v.copy() for k, v in params.items()}
    return LaplaceEncoder(hyper, best, history)


# direct per-series fit ------------------------------------------------------


def _fit_objective(theta, t, x, n, d, delta_pole, alpha, alpha1, real_t):
    p = theta[:n] + 1j * theta[n : 2 * n]
    c = (theta[2 * n : 2 * n + n * d] + 1j * theta[2 * n + n * d :]).reshape(n, d)
    basis_k = [t**k / math.factorial(k) for k in range(d)]

    def signal(tt, basis):
        e = np.exp(np.outer(tt, p))  # (T, n)
        xs = sum(e * c[:, k][None, :] * basis[k][:, None] for k in range(d))  # (T, n)
        return e, xs

    e, parts = signal(t, basis_k)
    xhat = parts.sum(axis=1)
    r = x - xhat
    value = float(np.sum(np.abs(r) ** 2))
    # derivative of xhat wrt p_m is sum_l c_ml t^l/(l-1)! e^{p_m t}
    dp = sum(e * c[:, k][None, :] * (basis_k[k] * t)[:, None] for k in range(d))
    rc = np.conj(r)[:, None]
    g_p = -2 * np.sum(rc * dp, axis=0)
    g_c = [-2 * np.sum(rc * e * basis_k[k][:, None], axis=0) for k in range(d)]
    grad_pre, grad_pim = g_p.real, -g_p.imag
    grad_cre = np.stack([g.real for g in g_c], axis=1)
    grad_cim = np.stack([-g.imag for g in g_c], axis=1)

    if alpha1 > 0:
        basis_r = [real_t**k / math.factorial(k) for k in range(d)]
        er, parts_r = signal(real_t, basis_r)
        im = parts_r.sum(axis=1).imag
        scale = alpha1 / real_t.size
        value += scale * float(np.sum(im**2))
        dpr = sum(er * c[:, k][None, :] * (basis_r[k] * real_t)[:, None] for k in range(d))
        grad_pre += scale * 2 * np.sum(im[:, None] * dpr.imag, axis=0)
        grad_pim += scale * 2 * np.sum(im[:, None] * dpr.real, axis=0)
        for k in range(d):
            dc = er * basis_r[k][:, None]
            grad_cre[:, k] += scale * 2 * np.sum(im[:, None] * dc.imag, axis=0)
            grad_cim[:, k] += scale * 2 * np.sum(im[:, None] * dc.real, axis=0)

    if alpha > 0 and n > 1:
        diff = p[:, None] - p[None, :]
        gap = np.abs(diff)
        active = (gap < delta_pole) & ~np.eye(n, dtype=bool)
        value += alpha * float(np.sum(np.where(active, delta_pole - gap, 0.0)))
        unit = np.where(active & (gap > 0), diff / np.where(gap > 0, gap, 1.0), 0.0)
        # each unordered pair appears twice in the double sum
        g = -2 * alpha * unit.sum(axis=1)
        grad_pre += g.real
        grad_pim += g.imag

    grad = np.concatenate([grad_pre, grad_pim, grad_cre.ravel(), grad_cim.ravel()])
    return value, grad


def direct_fit(
    t,
    x,
    n: int,
    d: int,
    ranges: EmbeddingRanges,
    rng: np.random.Generator,
    alpha: float = 1.0,
    alpha1: float = 0.1,
    restarts: int = 8,
    iterations: int = 500,
) -> LaplaceEmbedding:
    """Per-series nonlinear least-squares fit of a Laplace embedding.

    Each restart draws random poles, solves the coefficients by linear least
    squares, then refines everything with bounded L-BFGS. The best restart
    by objective value is returned with its poles sorted.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if t.size < 2 * n * (d + 1):
        logger.warning("direct_fit: %d observations for %d real parameters", t.size, 2 * n * (d + 1))
    real_t = np.linspace(0.0, 1.0, max(t.size, 2))
    bounds = (
        [(-ranges.r_max, ranges.r_max)] * n
        + [(-ranges.omega_max, ranges.omega_max)] * n
        + [(-ranges.c_max, ranges.c_max)] * (2 * n * d)
    )
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    best_val, best_theta = math.inf, None
    for _ in range(restarts):
        p = rng.uniform(-2.0, 2.0, size=n) + 1j * rng.uniform(-4 * math.pi, 4 * math.pi, size=n)
        basis = np.stack([t**k / math.factorial(k) for k in range(d)], axis=1)
        design = (np.exp(np.outer(t, p))[:, :, None] * basis[:, None, :]).reshape(t.size, n * d)
        c, *_ = np.linalg.lstsq(design, x.astype(complex), rcond=None)
        theta0 = np.concatenate([p.real, p.imag, c.real, c.imag])
        theta0 = np.clip(theta0, lo, hi)
        res = optimize.minimize(
            _fit_objective,
            theta0,
            args=(t, x, n, d, ranges.delta_pole, alpha, alpha1, real_t),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": iterations},
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_theta = res.fun, res.x
    theta = best_theta
    w = LaplaceEmbedding(theta[:n] + 1j * theta[n : 2 * n],
                         (theta[2 * n : 2 * n + n * d] + 1j * theta[2 * n + n * d :]).reshape(n, d))
    return sort_poles(w, ranges.delta_pole)


# composite encoder ----------------------------------------------------------


@dataclass(frozen=True)
class Block:
    feature: int
    kind: str  # "laplace" or "static"
    start: int
    stop: int


@dataclass(frozen=True)
class LatentVector:
    values: np.ndarray
    layout: tuple[Block, ...]

    def block(self, feature: int) -> np.ndarray:
        for b in self.layout:
            if b.feature == feature:
                return self.values[b.start : b.stop]
        raise KeyError(feature)

    def embedding(self, feature: int, n: int, d: int) -> LaplaceEmbedding:
        return LaplaceEmbedding.from_flat(self.block(feature), n, d)


class CompositeEncoder:
    """One Laplace encoder per time-varying feature plus static passthrough."""

    def __init__(self, encoders: dict[int, LaplaceEncoder], dim_x: int, statics=()):
        self.encoders = dict(encoders)
        self.dim_x = dim_x
        self.statics = tuple(sorted(statics))
        expected = [f for f in range(dim_x) if f not in self.statics]
        if sorted(self.encoders) != expected:
            raise ValueError(
                f"feature-count mismatch: encoders for {sorted(self.encoders)}, time-varying features {expected}"
            )
        blocks, pos = [], 0
        for f in range(dim_x):
            width = 1 if f in self.statics else self.encoders[f].hyper.width
            blocks.append(Block(f, "static" if f in self.statics else "laplace", pos, pos + width))
            pos += width
        self.layout = tuple(blocks)
        self.dim_z = pos

    def scale(self) -> np.ndarray:
        """Per-component maxima used to normalize latents for the predictor."""
        out = np.ones(self.dim_z)
        for b in self.layout:
            if b.kind == "static":
                continue
            hp = self.encoders[b.feature].hyper
            r = hp.ranges
            pole = np.tile([r.r_max, r.omega_max], hp.n)
            coef = np.full(2 * hp.n * hp.d, r.c_max)
            out[b.start : b.stop] = np.concatenate([pole, coef])
        return out

    def _check(self, s: TimeSeries):
        if s.dim_x != self.dim_x:
            raise DatasetError(f"series has dim_x={s.dim_x}, encoder expects {self.dim_x}")

    def latents(self, series: list[TimeSeries]) -> np.ndarray:
        """Latent matrix (N, dim_z) for many series."""
        for s in series:
            self._check(s)
        out = np.zeros((len(series), self.dim_z))
        for b in self.layout:
            if b.kind == "static":
                out[:, b.start] = [s.x[0, b.feature] for s in series]
                continue
            enc = self.encoders[b.feature]
            for lo in range(0, len(series), 256):
                chunk = series[lo : lo + 256]
                embs = enc.embed_batch([(s.t, s.x[:, b.feature]) for s in chunk])
                out[lo : lo + len(chunk), b.start : b.stop] = [e.to_flat() for e in embs]
        return out

    def latent(self, s: TimeSeries) -> LatentVector:
        return LatentVector(self.latents([s])[0], self.layout)


def compose_latent(encoders: dict[int, LaplaceEncoder], statics, series: TimeSeries) -> LatentVector:
    return CompositeEncoder(encoders, series.dim_x, statics).latent(series)


def train_composite(
    train: Dataset,
    hyper: EncoderHyper,
    rng: np.random.Generator,
    val: Dataset | None = None,
) -> CompositeEncoder:
    encoders = {}
    for f in range(train.dim_x):
        if f in train.statics:
            continue
        val_series = _feature_series(val, f) if val is not None and len(val) else None
        encoders[f] = train_encoder(_feature_series(train, f), hyper, rng, val_series)
        logger.info("feature %d encoder trained, best val mse %.4f", f,
                    min((h["val_mse"] for h in encoders[f].history), default=float("nan")))
    return CompositeEncoder(encoders, train.dim_x, train.statics)


def encoder_to_dict(enc: LaplaceEncoder) -> dict:
    return {
        "hyper": asdict(enc.hyper),
        "weights": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in sorted(enc.weights.items())},
    }


def encoder_from_dict(doc: dict) -> LaplaceEncoder:
    hyper = EncoderHyper(**doc["hyper"])
    weights = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in doc["weights"].items()}
    return LaplaceEncoder(hyper, weights)
