"""Clustering and prediction metrics.

Cluster agreement (purity, adjusted Rand, NMI) is computed from a
contingency table. Prediction quality is one-vs-rest AUROC and AUPRC,
averaged over the classes present. Cluster consistency uses an
m-nearest-neighbour silhouette ``S^m``, a pattern purity ``P^m`` counting
connected pieces of each cluster's k-NN graph, and the area under the
``S^m`` versus ``P^m`` curve (AUSIL).
"""

from __future__ import annotations

import csv
import io
import logging
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import comb

logger = logging.getLogger(__name__)


def contingency(pred, true) -> np.ndarray:
    """Counts of shape (K_pred, K_true) over the distinct labels present."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.size} predicted vs {true.size} true labels")
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(true, return_inverse=True)
    table = np.zeros((pi.max(initial=-1) + 1, ti.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def purity(pred, true) -> float:
    table = contingency(pred, true)
    return float(table.max(axis=1).sum() / table.sum())


def adjusted_rand(pred, true) -> float:
    table = contingency(pred, true)
    n = table.sum()
    pairs = comb(table, 2).sum()
    rows = comb(table.sum(axis=1), 2).sum()
    cols = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = rows * cols / total if total else 0.0
    top = 0.5 * (rows + cols)
    if top == expected:
        # both partitions trivial in the same way
        return 1.0
    return float((pairs - expected) / (top - expected))


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, true) -> float:
    """Mutual information normalized by the geometric mean of the entropies."""
    table = contingency(pred, true).astype(float)
    n = table.sum()
    hp, ht = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if hp == 0.0 or ht == 0.0:
        return 1.0 if hp == ht else 0.0
    joint = table / n
    outer = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return float(np.clip(mi / math.sqrt(hp * ht), 0.0, 1.0))


def _auroc(score: np.ndarray, positive: np.ndarray) -> float:
    order = np.argsort(-score, kind="mergesort")
    s, y = score[order], positive[order]
    # thresholds at distinct score values
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / y.sum()]
    fpr = np.r_[0.0, fp / (y.size - y.sum())]
    return float(np.trapezoid(tpr, fpr)) if hasattr(np, "trapezoid") else float(np.trapz(tpr, fpr))


def _auprc(score: np.ndarray, positive: np.ndarray) -> float:
    order = np.argsort(-score, kind="mergesort")
    s, y = score[order], positive[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    precision = tp / (last + 1)
    recall = tp / y.sum()
    # step interpolation: sum of precision times recall increments
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def auroc_auprc(scores, onehot) -> tuple[float, float]:
    """One-vs-rest AUROC and AUPRC averaged over classes present in the truth."""
    scores = np.asarray(scores, dtype=float)
    onehot = np.asarray(onehot, dtype=float)
    if scores.shape != onehot.shape:
        raise ValueError(f"scores {scores.shape} and labels {onehot.shape} differ in shape")
    rocs, prcs = [], []
    for c in range(onehot.shape[1]):
        pos = onehot[:, c] > 0.5
        if not pos.any():
            logger.warning("class %d absent from the labels; skipped", c)
            continue
        if pos.all():
            logger.warning("class %d has no negatives; skipped", c)
            continue
        rocs.append(_auroc(scores[:, c], pos.astype(float)))
        prcs.append(_auprc(scores[:, c], pos.astype(float)))
    if not rocs:
        raise ValueError("no class has both positive and negative samples")
    return float(np.mean(rocs)), float(np.mean(prcs))


def _sqdist(points: np.ndarray) -> np.ndarray:
    sq = np.sum(points**2, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    return np.maximum(d, 0.0)


def _nearest_mean(row: np.ndarray, idx: np.ndarray, m: int) -> float:
    # mean of the m smallest entries; ties resolved by lower sample index via stable sort
    vals = row[idx]
    order = np.argsort(vals, kind="stable")
    return float(vals[order[:m]].mean())


def silhouette_m(points, assignments, m: int) -> float:
    """Mean of ``|b - a| / max(a, b)`` with a and b restricted to the m nearest members."""
    if m < 1:
        raise ValueError("m must be >= 1")
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    a_ = np.asarray(assignments)
    labels = np.unique(a_)
    if labels.size < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    D = _sqdist(X)
    members = {k: np.flatnonzero(a_ == k) for k in labels}
    out = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        own = members[a_[i]]
        own = own[own != i]
        if own.size == 0:
            continue
        a = _nearest_mean(D[i], own, m)
        b = min(_nearest_mean(D[i], members[k], m) for k in labels if k != a_[i])
        top = max(a, b)
        out[i] = abs(b - a) / top if top > 0 else 0.0
    return float(out.mean())


def pattern_purity(points, assignments, m: int) -> float:
    """``(1/K) sum_k 1/p_k`` with p_k the connected pieces of cluster k's m-NN graph."""
    if m < 1:
        raise ValueError("m must be >= 1")
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    a_ = np.asarray(assignments)
    labels = np.unique(a_)
    D = _sqdist(X)
    total = 0.0
    for k in labels:
        idx = np.flatnonzero(a_ == k)
        if idx.size == 1:
            total += 1.0
            continue
        sub = D[np.ix_(idx, idx)].copy()
        np.fill_diagonal(sub, np.inf)
        order = np.argsort(sub, axis=1, kind="stable")[:, : min(m, idx.size - 1)]
        rows = np.repeat(np.arange(idx.size), order.shape[1])
        adj = csr_matrix((np.ones(rows.size), (rows, order.ravel())), shape=(idx.size, idx.size))
        count, _ = connected_components(adj, directed=True, connection="weak")
        total += 1.0 / count
    return float(total / labels.size)


def silhouette_curve(points, assignments, M: int) -> list[tuple[int, float, float]]:
    return [(m, silhouette_m(points, assignments, m), pattern_purity(points, assignments, m)) for m in range(1, M + 1)]


def area_under_curve(P, S) -> float:
    """Normalized trapezoid area of ``(S + 1)/2`` over P sorted ascending."""
    P = np.asarray(P, dtype=float)
    St = (np.asarray(S, dtype=float) + 1.0) / 2.0
    order = np.lexsort((St, P))
    P, St = P[order], St[order]
    spread = P[-1] - P[0]
    if spread <= 0:
        return float(St.mean())
    area = np.sum(np.diff(P) * (St[1:] + St[:-1]) / 2.0)
    return float(area / spread)


def ausil(points, assignments, M: int | None = None) -> float:
    """Area under the ``S^m`` versus ``P^m`` curve for m = 1..M.

    ``M`` defaults to ``min(20, largest cluster size)``.
    """
    a_ = np.asarray(assignments)
    if M is None:
        M = max(2, min(20, int(np.bincount(np.unique(a_, return_inverse=True)[1]).max())))
    if M < 2:
        raise ValueError("M must be >= 2")
    curve = silhouette_curve(points, a_, M)
    return area_under_curve([c[2] for c in curve], [c[1] for c in curve])


def h_score(a: float, b: float) -> float:
    """Harmonic mean ``2ab/(a+b)``, zero when both are zero."""
    if a < 0 or b < 0:
        raise ValueError("h_score inputs must be nonnegative")
    if a + b == 0:
        return 0.0
    return 2.0 * a * b / (a + b)


def report_text(report: dict) -> str:
    """Flat ``key value`` lines in sorted key order."""
    return "".join(f"{k} {v!r}\n" for k, v in sorted(report.items()))


def report_csv(report: dict, header: bool = True) -> str:
    buf = io.StringIO()
    keys = sorted(report)
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(keys)
    writer.writerow([repr(report[k]) if isinstance(report[k], float) else report[k] for k in keys])
    return buf.getvalue()
