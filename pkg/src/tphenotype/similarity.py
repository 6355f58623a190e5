"""Path-based similarity between latent vectors and the thresholded similarity graph.

The distance between two latents is the largest Jensen-Shannon distance
between the prediction at any sampled point of the straight segment joining
them and the prediction at either endpoint. It is not a metric, and the
triangle inequality is not expected to hold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .predictor import JS_MAX, js_distance

DEFAULT_STEPS = 25


def _values(z) -> np.ndarray:
    return np.asarray(getattr(z, "values", z), dtype=float)


def path_distance(predictor, z1, z2, steps: int = DEFAULT_STEPS) -> float:
    if steps < 2:
        raise ValueError("steps must be >= 2")
    z1, z2 = _values(z1), _values(z2)
    return float(_pair_block(predictor, z1[None], z2[None], steps)[0])


def _pair_block(predictor, za: np.ndarray, zb: np.ndarray, steps: int) -> np.ndarray:
    """Path distances between rows of ``za`` and matching rows of ``zb``."""
    a = np.linspace(0.0, 1.0, steps)[None, :, None]
    path = (1.0 - a) * za[:, None, :] + a * zb[:, None, :]
    probs = predictor.probs(path)  # (B, steps, dim_y)
    pa = probs[:, :1, :]
    pb = probs[:, -1:, :]
    # the first and last samples are exactly z1 and z2
    d = np.maximum(js_distance(probs, pa), js_distance(probs, pb))
    return d.max(axis=1)


@dataclass
class DistanceMatrix:
    S: np.ndarray
    steps: int

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=float)

    def __len__(self) -> int:
        return self.S.shape[0]


def distance_matrix(predictor, latents, steps: int = DEFAULT_STEPS, block: int = 4096) -> DistanceMatrix:
    """Pairwise path distances for ``N >= 2`` latents, computed in row blocks."""
    z = np.stack([_values(v) for v in latents]) if not isinstance(latents, np.ndarray) else latents
    n = z.shape[0]
    if n < 2:
        raise ValueError("distance_matrix needs at least 2 latents")
    S = np.zeros((n, n))
    iu, ju = np.triu_indices(n, k=1)
    per = max(1, block // steps)
    for lo in range(0, iu.size, per):
        i, j = iu[lo : lo + per], ju[lo : lo + per]
        S[i, j] = _pair_block(predictor, z[i], z[j], steps)
    S = S + S.T
    return DistanceMatrix(S, steps)


def cross_distances(predictor, za: np.ndarray, zb: np.ndarray, steps: int = DEFAULT_STEPS,
                    block: int = 4096) -> np.ndarray:
    """Path distances between every row of ``za`` and every row of ``zb``."""
    za, zb = np.asarray(za, dtype=float), np.asarray(zb, dtype=float)
    out = np.zeros((za.shape[0], zb.shape[0]))
    ii, jj = np.meshgrid(np.arange(za.shape[0]), np.arange(zb.shape[0]), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    per = max(1, block // steps)
    for lo in range(0, ii.size, per):
        i, j = ii[lo : lo + per], jj[lo : lo + per]
        out[i, j] = _pair_block(predictor, za[i], zb[j], steps)
    return out


@dataclass
class SimilarityGraph:
    """Undirected graph with an edge (i, j), i != j, whenever ``S_ij <= delta``."""

    delta: float
    adjacency: np.ndarray
    _labels: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(i.tolist(), j.tolist()))

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def components(self) -> np.ndarray:
        if self._labels is None:
            _, self._labels = connected_components(csr_matrix(self.adjacency), directed=False)
        return self._labels

    def reachable(self, i: int, j: int) -> bool:
        labels = self.components()
        return bool(labels[i] == labels[j])

    def is_connected_subset(self, members) -> bool:
        """True when ``members`` induce a connected subgraph."""
        members = np.asarray(members, dtype=int)
        if members.size <= 1:
            return True
        sub = self.adjacency[np.ix_(members, members)]
        count, _ = connected_components(csr_matrix(sub), directed=False)
        return count == 1


def build_graph(S, delta: float) -> SimilarityGraph:
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    S = S.S if isinstance(S, DistanceMatrix) else np.asarray(S, dtype=float)
    adj = S <= delta
    np.fill_diagonal(adj, False)
    return SimilarityGraph(float(delta), adj)


def export_matrix_csv(S, path) -> None:
    S = S.S if isinstance(S, DistanceMatrix) else np.asarray(S)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in S])


def export_edge_list(graph: SimilarityGraph, path) -> None:
    lines = [f"# delta {graph.delta!r}", f"# nodes {graph.n}"]
    lines += [f"{i} {j}" for i, j in graph.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


__all__ = [
    "JS_MAX",
    "DEFAULT_STEPS",
    "DistanceMatrix",
    "SimilarityGraph",
    "build_graph",
    "cross_distances",
    "distance_matrix",
    "export_edge_list",
    "export_matrix_csv",
    "path_distance",
]
