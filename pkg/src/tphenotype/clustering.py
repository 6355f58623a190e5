"""Graph-constrained predictive clustering.

The pipeline is

1. a greedy warm start that minimizes the within-cluster sum of path
   distances ``Jbar = sum_k sum_{i,j in C_k} S_ij``;
2. repeated rounds of seed refresh, threshold shrinking and
   graph-constrained K-means (:func:`gk_means`), tracking the objective
   ``J = sum_k sum_{X in C_k} d_y(f(X), v_k)``.

Every cluster produced by :func:`gk_means` grows outward from its seed along
graph edges, so it is connected in the graph it was built on. Samples that
no seed can reach are assigned to the nearest centroid and flagged.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.cluster import KMeans

from .numeric import child_seed
from .predictor import JS_MAX, js_distance
from .similarity import DistanceMatrix, SimilarityGraph, build_graph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterConfig:
    K: int = 3
    max_iter: int = 1000
    patience: int = 5
    tol: float = 1e-7

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if self.max_iter < 1 or self.patience < 1 or self.tol < 0:
            raise ValueError("max_iter and patience must be positive and tol nonnegative")


@dataclass
class Clustering:
    assignments: np.ndarray
    centroids: np.ndarray | None = None
    seeds: list[int] = field(default_factory=list)
    delta: float | None = None
    J: float | None = None
    flagged: list[int] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=int)
        if self.centroids is not None:
            self.centroids = np.asarray(self.centroids, dtype=float)

    @property
    def K(self) -> int:
        if self.centroids is not None:
            return self.centroids.shape[0]
        return int(self.assignments.max()) + 1

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == k)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "assignments": self.assignments.tolist(),
            "centroids": None if self.centroids is None else self.centroids.tolist(),
            "seeds": [
                {"centroid": None if self.centroids is None else self.centroids[k].tolist(), "sample": int(s)}
                for k, s in enumerate(self.seeds)
            ],
            "delta": self.delta,
            "J": self.J,
            "flagged": [int(i) for i in self.flagged],
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Clustering":
        return cls(
            np.asarray(doc["assignments"], dtype=int),
            None if doc.get("centroids") is None else np.asarray(doc["centroids"], dtype=float),
            [int(s["sample"]) for s in doc.get("seeds", [])],
            doc.get("delta"),
            doc.get("J"),
            list(doc.get("flagged", [])),
            dict(doc.get("info", {})),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "Clustering":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _matrix(S) -> np.ndarray:
    return S.S if isinstance(S, DistanceMatrix) else np.asarray(S, dtype=float)


def jbar(S, assignments) -> float:
    """Sum over clusters of all ordered within-cluster pair distances."""
    S = _matrix(S)
    a = np.asarray(assignments)
    same = a[:, None] == a[None, :]
    return float(np.sum(S * same))


def centroids_of(probs: np.ndarray, assignments: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((K, probs.shape[1]))
    for k in range(K):
        idx = assignments == k
        if idx.any():
            out[k] = probs[idx].mean(axis=0)
    return out


def objective(probs: np.ndarray, assignments: np.ndarray, centroids: np.ndarray) -> float:
    """``J = sum_i d_y(f(X_i), v_{a_i})``."""
    return float(np.sum(js_distance(probs, centroids[assignments])))


def warm_start(S, K: int, rng: np.random.Generator) -> Clustering:
    """Greedy K-partition of the distance matrix.

    Seeds come from farthest-point traversal starting at the pair with the
    largest distance. The other samples are visited in random order and
    each joins the cluster whose within-cluster sum grows least.
    """
    S = _matrix(S)
    n = S.shape[0]
    if K > n:
        raise ValueError(f"K={K} exceeds the number of samples N={n}")
    if K < 1:
        raise ValueError("K must be positive")
    assign = np.full(n, -1, dtype=int)
    if K == 1:
        assign[:] = 0
        return Clustering(assign, seeds=[0], info={"jbar": jbar(S, assign)})
    upper = np.triu(S, k=1)
    first, second = np.unravel_index(int(np.argmax(upper)), S.shape)
    seeds = [int(first), int(second)]
    while len(seeds) < K:
        gap = S[:, seeds].min(axis=1)
        gap[seeds] = -np.inf
        seeds.append(int(np.argmax(gap)))
    for k, s in enumerate(seeds):
        assign[s] = k
    # running sum of distances from every sample to each cluster
    cost = S[:, seeds].copy()
    for i in rng.permutation(n):
        if assign[i] >= 0:
            continue
        k = int(np.argmin(cost[i]))
        assign[i] = k
        cost[:, k] += S[:, i]
    return Clustering(assign, seeds=seeds, info={"jbar": jbar(S, assign)})


def gk_means(
    probs: np.ndarray,
    seeds: Sequence[int],
    centroids: np.ndarray,
    graph: SimilarityGraph,
) -> Clustering:
    """One pass of graph-constrained K-means.

    Clusters start from their seed samples. In each sweep every free sample
    adjacent to at least one cluster joins, among those clusters, the one
    whose centroid is closest in ``d_y``; free samples are visited in
    ascending index order, and adjacency is judged against the membership
    at the start of the sweep. Centroids are refreshed as member means
    after each sweep. When a sweep assigns nothing, the remaining samples
    are unreachable from every seed: they are assigned to the nearest
    centroid and flagged.
    """
    probs = np.asarray(probs, dtype=float)
    n = probs.shape[0]
    K = len(seeds)
    if len(set(int(s) for s in seeds)) != K:
        raise ValueError("seed samples must be distinct")
    v = np.array(centroids, dtype=float, copy=True)
    assign = np.full(n, -1, dtype=int)
    for k, s in enumerate(seeds):
        assign[int(s)] = k
    adj = graph.adjacency
    flagged: list[int] = []
    sweeps = 0
    while np.any(assign < 0):
        sweeps += 1
        free = np.flatnonzero(assign < 0)
        snapshot = assign.copy()
        # touch[i, k] is True when free sample i has an edge into cluster k
        onehot = np.zeros((n, K), dtype=bool)
        placed = snapshot >= 0
        onehot[np.flatnonzero(placed), snapshot[placed]] = True
        touch = (adj[free].astype(np.int64) @ onehot.astype(np.int64)) > 0
        progressed = False
        for row, i in enumerate(free):
            eligible = np.flatnonzero(touch[row])
            if eligible.size == 0:
                continue
            d = js_distance(probs[i], v[eligible])
            assign[i] = int(eligible[np.argmin(d)])
            progressed = True
        if not progressed:
            for i in free:
                assign[i] = int(np.argmin(js_distance(probs[i], v)))
                flagged.append(int(i))
            logger.warning("gk_means: %d samples unreachable from every seed, assigned by nearest centroid",
                           free.size)
        for k in range(K):
            v[k] = probs[assign == k].mean(axis=0)
    J = objective(probs, assign, v)
    return Clustering(assign, v, [int(s) for s in seeds], graph.delta, J, flagged, {"sweeps": sweeps})


def refresh_seeds(probs: np.ndarray, assignments: np.ndarray, K: int) -> tuple[np.ndarray, list[int]]:
    """Member-mean centroids and, per cluster, the member closest to its centroid."""
    v = centroids_of(probs, assignments, K)
    seeds = []
    for k in range(K):
        members = np.flatnonzero(assignments == k)
        d = js_distance(probs[members], v[k])
        seeds.append(int(members[np.argmin(d)]))
    return v, seeds


def repair_empty(probs: np.ndarray, assignments: np.ndarray, K: int) -> tuple[np.ndarray, list[int]]:
    """Give every empty cluster the sample farthest in ``d_y`` from all current centroids."""
    assignments = assignments.copy()
    repaired = []
    for k in range(K):
        if np.any(assignments == k):
            continue
        present = [c for c in range(K) if np.any(assignments == c)]
        v = centroids_of(probs, assignments, K)[present]
        far = js_distance(probs[:, None, :], v[None, :, :]).min(axis=1)
        # never strip the last member of another cluster
        sizes = np.bincount(assignments, minlength=K)
        far[sizes[assignments] <= 1] = -np.inf
        i = int(np.argmax(far))
        logger.warning("cluster %d empty; reseeded with sample %d", k, i)
        assignments[i] = k
        repaired.append(k)
    return assignments, repaired


def tphenotype(probs: np.ndarray, S, config: ClusterConfig, rng: np.random.Generator) -> Clustering:
    """Alternate seed refresh, threshold shrinking and graph-constrained K-means.

    Parameters
    ----------
    probs : ndarray, shape (N, dim_y)
        Predicted label distributions of the samples being clustered.
    S : DistanceMatrix or ndarray
        Path-distance matrix of the same samples.
    config : ClusterConfig
    rng : Generator
        Drives the visiting order of the warm start.

    Returns
    -------
    Clustering
        The clustering with the smallest objective seen. ``info`` holds the
        warm-start assignments and the per-iteration trace.
    """
    probs = np.asarray(probs, dtype=float)
    S = _matrix(S)
    K = config.K
    if K > probs.shape[0]:
        raise ValueError(f"K={K} exceeds the number of samples N={probs.shape[0]}")
    warm = warm_start(S, K, rng)
    assign = warm.assignments
    delta = JS_MAX
    best: Clustering | None = None
    stall = 0
    trace = []
    repairs = 0
    for it in range(config.max_iter):
        assign, fixed = repair_empty(probs, assign, K)
        repairs += len(fixed)
        v, seeds = refresh_seeds(probs, assign, K)
        spread = float(js_distance(probs, v[assign]).max())
        delta = min(delta, 2.0 * spread)
        graph = build_graph(S, delta)
        result = gk_means(probs, seeds, v, graph)
        trace.append({"iteration": it, "delta": delta, "J": result.J, "flagged": len(result.flagged)})
        if best is None or result.J < best.J - config.tol:
            best, stall = result, 0
        else:
            stall += 1
        assign = result.assignments
        if stall >= config.patience:
            break
    best.info.update(
        {"warm_start": warm.assignments.tolist(), "jbar": warm.info["jbar"], "trace": trace, "repairs": repairs}
    )
    return best


def assign_new(probs_new: np.ndarray, S_cross: np.ndarray, clustering: Clustering) -> tuple[np.ndarray, list[int]]:
    """Assign unseen samples using the graph rule of :func:`gk_means`.

    A new sample may join cluster k when some member of k lies within the
    final threshold in path distance. Among such clusters it takes the one
    with the nearest centroid. Samples with no member within the threshold
    follow their nearest clustered sample and are flagged.
    """
    probs_new = np.asarray(probs_new, dtype=float)
    S_cross = np.asarray(S_cross, dtype=float)
    K, a = clustering.K, clustering.assignments
    out = np.zeros(probs_new.shape[0], dtype=int)
    flagged = []
    member = np.eye(K, dtype=bool)[a]  # (N_train, K)
    for i in range(probs_new.shape[0]):
        near = S_cross[i] <= clustering.delta
        eligible = np.flatnonzero(member[near].any(axis=0))
        if eligible.size:
            d = js_distance(probs_new[i], clustering.centroids[eligible])
            out[i] = int(eligible[np.argmin(d)])
        else:
            out[i] = int(a[np.argmin(S_cross[i])])
            flagged.append(i)
    return out, flagged


def kmeans_latent(latents: np.ndarray, K: int, rng: np.random.Generator, n_init: int = 10) -> Clustering:
    """K-means with k-means++ seeding on latent vectors, best of ``n_init`` restarts."""
    Z = np.asarray(latents, dtype=float)
    if K > Z.shape[0]:
        raise ValueError(f"K={K} exceeds the number of samples N={Z.shape[0]}")
    km = KMeans(n_clusters=K, init="k-means++", n_init=n_init, random_state=child_seed(rng) % (2**32))
    labels = km.fit_predict(Z)
    return Clustering(labels, info={"inertia": float(km.inertia_), "centers": km.cluster_centers_.tolist()})


def select_k(candidates: Sequence[int], evaluate: Callable[[int], Sequence[float]]) -> tuple[int, dict[int, float]]:
    """Pick the candidate with the highest mean score; ties go to the smaller K.

    ``evaluate(K)`` returns one score per cross-validation fold.
    """
    candidates = sorted(set(int(k) for k in candidates))
    if not candidates:
        raise ValueError("no candidate K")
    if len(candidates) == 1:
        return candidates[0], {}
    table = {k: float(np.mean(evaluate(k))) for k in candidates}
    best = max(candidates, key=lambda k: (table[k], -k))
    return best, table


def bound_chain(probs: np.ndarray, S, assignments: np.ndarray) -> tuple[float, float, float]:
    """The three quantities of the bound ``J <= sum_k mean-pair d_y <= Jbar``."""
    probs = np.asarray(probs, dtype=float)
    S = _matrix(S)
    a = np.asarray(assignments)
    K = int(a.max()) + 1
    v = centroids_of(probs, a, K)
    J = objective(probs, a, v)
    middle = 0.0
    for k in range(K):
        m = np.flatnonzero(a == k)
        if m.size:
            middle += float(js_distance(probs[m][:, None, :], probs[m][None, :, :]).sum()) / m.size
    return J, middle, jbar(S, a)


__all__ = [
    "ClusterConfig",
    "Clustering",
    "assign_new",
    "centroids_of",
    "bound_chain",
    "gk_means",
    "jbar",
    "kmeans_latent",
    "objective",
    "refresh_seeds",
    "select_k",
    "tphenotype",
    "warm_start",
]
