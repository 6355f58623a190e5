"""Label-distribution predictor over latent vectors and the Jensen-Shannon distance.

The predictor is a small tanh MLP with a softmax output. Latent components
are divided by their range maxima before entering the network so that
poles, frequencies and coefficients live on comparable scales.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .data import Dataset
from .numeric import AdamW, NumericError, checksum, child_seed, make_rng

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
JS_MAX = math.log(2.0)


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class PredictorHyper:
    hidden: int = 10
    layers: int = 3
    lr: float = 0.01
    weight_decay: float = 0.01
    epochs: int = 300
    batch_size: int = 32

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1 or self.batch_size < 1:
            raise ValueError("layers, hidden and batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def js_distance(p, q) -> np.ndarray | float:
    """Jensen-Shannon divergence with natural logarithm, along the last axis.

    Probabilities are floored at 1e-12 before logarithms; the result lies
    in [0, ln 2]. Inputs broadcast against each other.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = 0.5 * (p + q)
    lp = np.log(np.maximum(p, PROB_FLOOR))
    lq = np.log(np.maximum(q, PROB_FLOOR))
    lm = np.log(np.maximum(m, PROB_FLOOR))
    out = 0.5 * np.sum(p * (lp - lm), axis=-1) + 0.5 * np.sum(q * (lq - lm), axis=-1)
    out = np.clip(out, 0.0, JS_MAX)
    return float(out) if out.ndim == 0 else out


def _softmax(a: np.ndarray) -> np.ndarray:
    a = a - a.max(axis=-1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=-1, keepdims=True)


def init_weights(dim_z: int, dim_y: int, hyper: PredictorHyper, rng: np.random.Generator) -> dict[str, np.ndarray]:
    sizes = [dim_z] + [hyper.hidden] * (hyper.layers - 1) + [dim_y]
    w = {}
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        k = 1.0 / math.sqrt(a)
        w[f"w{i}"] = rng.uniform(-k, k, size=(a, b))
        w[f"b{i}"] = np.zeros(b)
    return w


def logits_tape(w: dict[str, ad.Var], z: np.ndarray, layers: int) -> ad.Var:
    h = ad.as_var(z)
    for i in range(layers):
        h = h @ w[f"w{i}"] + w[f"b{i}"]
        if i < layers - 1:
            h = ad.tanh(h)
    return h


def cross_entropy_tape(w: dict[str, ad.Var], z: np.ndarray, y: np.ndarray, layers: int) -> ad.Var:
    """Mean negative log-likelihood of integer labels ``y`` under the softmax of the network."""
    logp = ad.log_softmax(logits_tape(w, z, layers), axis=1)
    onehot = np.eye(logp.shape[1])[y]
    return -(logp * onehot).sum() * (1.0 / len(y))


@dataclass
class Predictor:
    """Trained predictor with its latent normalization and expected layout."""

    weights: dict[str, np.ndarray]
    scale: np.ndarray
    dim_y: int
    layout: tuple = ()
    hyper: PredictorHyper = field(default_factory=PredictorHyper)
    history: list[dict] = field(default_factory=list, compare=False, repr=False)

    @property
    def dim_z(self) -> int:
        return self.scale.size

    def _check(self, z: np.ndarray, layout=None):
        if z.shape[-1] != self.dim_z:
            raise LayoutError(f"latent has {z.shape[-1]} components, predictor expects {self.dim_z}")
        if layout is not None and self.layout and tuple(layout) != tuple(self.layout):
            raise LayoutError(f"latent layout {layout} does not match predictor layout {self.layout}")

    def probs(self, z) -> np.ndarray:
        """Label distributions for latents of shape (..., dim_z)."""
        layout = getattr(z, "layout", None)
        z = np.asarray(getattr(z, "values", z), dtype=float)
        self._check(z, None if layout is None else layout_signature(layout))
        h = z / self.scale
        for i in range(self.hyper.layers):
            h = h @ self.weights[f"w{i}"] + self.weights[f"b{i}"]
            if i < self.hyper.layers - 1:
                h = np.tanh(h)
        return _softmax(h)

    predict = probs


def layout_signature(layout) -> tuple:
    return tuple((b.feature, b.kind, b.stop - b.start) for b in layout)


def predict(params: Predictor, z) -> np.ndarray:
    return params.probs(z)


def train_predictor(
    encoder,
    dataset: Dataset,
    hyper: PredictorHyper,
    rng: np.random.Generator,
    val: Dataset | None = None,
) -> Predictor:
    """Fit the predictor by cross-entropy on latents from a frozen composite encoder.

    The encoder weights are checksummed before and after training; any
    change raises ``RuntimeError``.
    """
    y = dataset.labels()
    if dataset.dim_y < 1:
        raise ValueError("a labeled dataset is required")
    before = {f: checksum(e.weights) for f, e in encoder.encoders.items()}
    scale = encoder.scale()
    z = encoder.latents(dataset.series) / scale
    if val is not None and len(val):
        zv, yv = encoder.latents(val.series) / scale, val.labels()
    else:
        zv, yv = z, y
    params = init_weights(z.shape[1], dataset.dim_y, hyper, make_rng(child_seed(rng)))
    opt = AdamW(params, lr=hyper.lr, weight_decay=hyper.weight_decay)
    layers = hyper.layers

    def val_loss(p):
        return float(cross_entropy_tape({k: ad.Var(v) for k, v in p.items()}, zv, yv, layers).value)

    best_score, best = val_loss(params), {k: v.copy() for k, v in params.items()}
    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(y))
        totals = []
        for bi, lo in enumerate(range(0, len(y), hyper.batch_size)):
            idx = order[lo : lo + hyper.batch_size]
            value, grads = ad.value_and_grad(lambda w: cross_entropy_tape(w, z[idx], y[idx], layers), params)
            if not np.isfinite(value):
                raise NumericError(f"non-finite predictor loss at epoch {epoch}, batch {bi}")
            opt.step(grads)
            totals.append(value)
        score = val_loss(params)
        history.append({"epoch": epoch, "loss": float(np.mean(totals)), "val_loss": score})
        if score < best_score:
            best_score, best = score, {k: v.copy() for k, v in params.items()}
    after = {f: checksum(e.weights) for f, e in encoder.encoders.items()}
    if before != after:
        raise RuntimeError("encoder weights changed while training the predictor")
    return Predictor(best, scale, dataset.dim_y, layout_signature(encoder.layout), hyper, history)


def predictor_to_dict(p: Predictor) -> dict:
    return {
        "hyper": asdict(p.hyper),
        "dim_y": p.dim_y,
        "scale": p.scale.tolist(),
        "layout": [list(b) for b in p.layout],
        "weights": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in sorted(p.weights.items())},
    }


def predictor_from_dict(doc: dict) -> Predictor:
    weights = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in doc["weights"].items()}
    return Predictor(
        weights,
        np.asarray(doc["scale"], dtype=float),
        int(doc["dim_y"]),
        tuple(tuple(b) for b in doc["layout"]),
        PredictorHyper(**doc["hyper"]),
    )
