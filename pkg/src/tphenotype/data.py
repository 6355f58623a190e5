"""Time-series datasets, benchmark generators, file I/O and seeded splits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numeric import make_rng

SYNTHETIC_PERIODS = (4.0, 6.0, 8.0)


class DatasetError(ValueError):
    pass


@dataclass
class TimeSeries:
    """Irregular observations of one sample.

    ``t`` has shape (T,), ``x`` has shape (T, dim_x). ``y`` is the class
    index of the one-hot label, ``cluster`` the ground-truth group.
    """

    t: np.ndarray
    x: np.ndarray
    y: int | None = None
    cluster: int | None = None
    params: dict | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x.reshape(-1, 1)
        if self.t.size < 1:
            raise DatasetError("a time series needs at least one observation")
        if self.x.shape[0] != self.t.size:
            raise DatasetError(f"{self.t.size} timestamps but {self.x.shape[0]} rows of values")
        if np.any(np.diff(self.t) < 0):
            raise DatasetError("timestamps not nondecreasing")
        if self.t[0] < 0 or self.t[-1] > 1:
            raise DatasetError("timestamps must lie in [0, 1]")

    @property
    def dim_x(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.t.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and self.y == other.y
            and self.cluster == other.cluster
            and self.params == other.params
        )


@dataclass
class Dataset:
    series: list[TimeSeries]
    dim_x: int
    dim_y: int = 0
    statics: tuple[int, ...] = ()
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.statics = tuple(sorted(int(s) for s in self.statics))
        if not self.provenance:
            raise DatasetError("provenance must be populated")
        for i, s in enumerate(self.series):
            if s.dim_x != self.dim_x:
                raise DatasetError(f"series {i} has dim_x={s.dim_x}, dataset declares {self.dim_x}")
            if s.y is not None and not 0 <= s.y < self.dim_y:
                raise DatasetError(f"series {i} label {s.y} outside [0, {self.dim_y})")
        if any(not 0 <= s < self.dim_x for s in self.statics):
            raise DatasetError(f"static feature index out of range: {self.statics}")

    def __len__(self) -> int:
        return len(self.series)

    def __getitem__(self, i):
        return self.series[i]

    @property
    def labeled(self) -> bool:
        return len(self.series) > 0 and all(s.y is not None for s in self.series)

    def labels(self) -> np.ndarray:
        if not self.labeled:
            raise DatasetError("dataset has unlabeled samples; a labeled dataset is required")
        return np.array([s.y for s in self.series], dtype=int)

    def labels_onehot(self) -> np.ndarray:
        return np.eye(self.dim_y)[self.labels()]

    def clusters(self) -> np.ndarray:
        if any(s.cluster is None for s in self.series):
            raise DatasetError("dataset has samples without ground-truth clusters")
        return np.array([s.cluster for s in self.series], dtype=int)

    def subset(self, indices, note: str | None = None) -> "Dataset":
        indices = [int(i) for i in indices]
        prov = dict(self.provenance)
        if note is not None:
            prov["subset"] = note
        return replace(self, series=[self.series[i] for i in indices], provenance=prov)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.dim_x == other.dim_x
            and self.dim_y == other.dim_y
            and self.statics == other.statics
            and self.provenance == other.provenance
            and self.series == other.series
        )


# generators -----------------------------------------------------------------


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def gen_synthetic(
    n: int,
    seed: int,
    phi_rate: float = 0.3,
    noise: float = 0.1,
    n_obs: int = 20,
    window: float = 2.0,
    phi: float | None = None,
) -> Dataset:
    """Two-variable trend/periodicity benchmark with three ground-truth groups.

    ``x1 = sign * sigmoid(10 (t - 0.5 - phi))`` and ``x2 = sin(c (t - phi))``
    with ``c`` in {4, 6, 8}; the label is 0 iff ``c == 6``. Observations are
    drawn uniformly on [0, window], sorted, and rescaled to [0, 1].
    ``phi`` overrides the exponential delay when given.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    series = []
    for _ in range(n):
        sign = 1.0 if rng.integers(0, 2) else -1.0
        delay = rng.exponential(1.0 / phi_rate) if phi is None else float(phi)
        k = int(rng.integers(0, len(SYNTHETIC_PERIODS)))
        c = SYNTHETIC_PERIODS[k]
        t = np.sort(rng.uniform(0.0, window, size=n_obs))
        eps = rng.normal(0.0, 1.0, size=(n_obs, 2)) * noise
        x1 = sign * _sigmoid(10.0 * (t - 0.5 - delay))
        x2 = np.sin(c * (t - delay))
        x = np.column_stack([x1, x2]) + eps
        series.append(
            TimeSeries(t / window, x, y=0 if c == 6.0 else 1, cluster=k,
                       params={"sign": sign, "phi": float(delay), "c": c})
        )
    prov = {
        "generator": "synthetic",
        "n": n,
        "seed": seed,
        "params": {"phi_rate": phi_rate, "noise": noise, "n_obs": n_obs, "window": window, "phi": phi},
        "time_scale": window,
        "timestamps": "per-sample sorted uniform",
    }
    return Dataset(series, dim_x=2, dim_y=2, provenance=prov)


TOY_TYPES = (
    lambda t, p: np.cos(2 * np.pi * (t - p)),
    lambda t, p: np.cos(np.pi * (t - p)),
    lambda t, p: np.sin(np.pi * (t - p)),
    lambda t, p: np.sin(2 * np.pi * (t - p)),
)


def toy_signal(kind: int, t, phi: float) -> np.ndarray:
    return TOY_TYPES[kind](np.asarray(t, dtype=float), phi)


def gen_toy(n: int, seed: int, phi_rate: float = 0.5, noise: float = 0.03, n_obs: int = 15,
            phi: float | None = None) -> Dataset:
    """Four sinusoid shapes with an exponential delay, observed irregularly on [0, 1]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    series = []
    for _ in range(n):
        kind = int(rng.integers(0, len(TOY_TYPES)))
        delay = rng.exponential(1.0 / phi_rate) if phi is None else float(phi)
        t = np.sort(rng.uniform(0.0, 1.0, size=n_obs))
        x = toy_signal(kind, t, delay) + rng.normal(0.0, 1.0, size=n_obs) * noise
        series.append(TimeSeries(t, x, cluster=kind, params={"kind": kind, "phi": float(delay)}))
    prov = {
        "generator": "toy",
        "n": n,
        "seed": seed,
        "params": {"phi_rate": phi_rate, "noise": noise, "n_obs": n_obs, "phi": phi},
        "time_scale": 1.0,
    }
    return Dataset(series, dim_x=1, provenance=prov)


def rate_signal(t, phi: float) -> np.ndarray:
    return np.sin(2 * np.pi * np.asarray(t, dtype=float) + phi)


def gen_rate_study(rates, n: int, seed: int, phi_rate: float = 0.5, noise: float = 0.0) -> list[Dataset]:
    """One dataset per sampling rate, observations at ``t_j = j / rate``."""
    out = []
    for rate in rates:
        rate = int(rate)
        if rate < 2:
            raise ValueError("sampling rate must be at least 2 observations per unit interval")
        rng = make_rng(seed + rate)
        t = np.arange(rate) / rate
        series = []
        for _ in range(n):
            delay = float(rng.exponential(1.0 / phi_rate))
            x = rate_signal(t, delay) + rng.normal(0.0, 1.0, size=rate) * noise
            series.append(TimeSeries(t, x, params={"phi": delay}))
        prov = {
            "generator": "rate_study",
            "n": n,
            "seed": seed,
            "params": {"rate": rate, "phi_rate": phi_rate, "noise": noise},
            "time_scale": 1.0,
        }
        out.append(Dataset(series, dim_x=1, provenance=prov))
    return out


GENERATORS = {"synthetic": gen_synthetic, "toy": gen_toy}


def normalize_time(t, x=None) -> tuple[np.ndarray, float, float]:
    """Shift and scale raw timestamps into [0, 1]; returns ``(t01, origin, scale)``."""
    t = np.asarray(t, dtype=float)
    origin = float(t.min())
    scale = float(t.max() - origin) or 1.0
    return (t - origin) / scale, origin, scale


# file I/O -------------------------------------------------------------------


def save_dataset(ds: Dataset, path) -> None:
    header = {
        "header": {
            "dim_x": ds.dim_x,
            "dim_y": ds.dim_y,
            "statics": list(ds.statics),
            "provenance": ds.provenance,
        }
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in ds.series:
            rec = {"t": s.t.tolist(), "x": s.x.tolist(), "y": s.y, "cluster": s.cluster}
            if s.params is not None:
                rec["params"] = s.params
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    series = []
    header = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: malformed record, line {lineno}: {exc.msg}") from None
            if header is None:
                if "header" not in rec:
                    raise DatasetError(f"{path}: first record must be the header, line {lineno}")
                header = rec["header"]
                continue
            try:
                t, x = rec["t"], rec["x"]
            except (KeyError, TypeError):
                raise DatasetError(f"{path}: record missing 't' or 'x', line {lineno}") from None
            if any(b < a for a, b in zip(t, t[1:])):
                raise DatasetError(f"timestamps not nondecreasing, line {lineno}")
            try:
                s = TimeSeries(t, x, rec.get("y"), rec.get("cluster"), rec.get("params"))
            except (DatasetError, ValueError) as exc:
                raise DatasetError(f"{path}: {exc}, line {lineno}") from None
            if s.dim_x != header["dim_x"]:
                raise DatasetError(f"{path}: inconsistent dims, record has dim_x={s.dim_x} "
                                   f"but header declares {header['dim_x']}, line {lineno}")
            series.append(s)
    if header is None:
        raise DatasetError(f"{path}: empty dataset file")
    return Dataset(series, header["dim_x"], header["dim_y"], tuple(header["statics"]), header["provenance"])


# splits ---------------------------------------------------------------------


def _quotas(total: int, fractions) -> np.ndarray:
    # largest-remainder apportionment, ties to the earlier split
    ideal = np.asarray(fractions, dtype=float) * total
    q = np.floor(ideal).astype(int)
    order = sorted(range(len(q)), key=lambda i: (-(ideal[i] - q[i]), i))
    for i in order[: total - q.sum()]:
        q[i] += 1
    return q


def _stratified_counts(class_sizes: np.ndarray, totals: np.ndarray, fractions) -> np.ndarray:
    """Integer (class x split) table with given margins, each cell within 1 of proportional."""
    import networkx as nx

    ideal = np.outer(class_sizes, fractions)
    base = np.floor(ideal).astype(int)
    row_need = class_sizes - base.sum(axis=1)
    col_need = totals - base.sum(axis=0)
    g = nx.DiGraph()
    for c, need in enumerate(row_need):
        g.add_edge("src", ("c", c), capacity=int(need), weight=0)
    for s, need in enumerate(col_need):
        g.add_edge(("s", s), "dst", capacity=int(max(need, 0)), weight=0)
    for c in range(len(class_sizes)):
        for s in range(len(totals)):
            frac = ideal[c, s] - base[c, s]
            g.add_edge(("c", c), ("s", s), capacity=1, weight=-int(round(frac * 1e6)))
    flow = nx.max_flow_min_cost(g, "src", "dst")
    out = base.copy()
    for c in range(len(class_sizes)):
        for s in range(len(totals)):
            out[c, s] += flow[("c", c)][("s", s)]
    return out


def split(ds: Dataset, fractions=(0.64, 0.16, 0.20), seed: int = 0) -> tuple[Dataset, ...]:
    """Seeded shuffle and contiguous slicing, stratified by label when available."""
    fractions = tuple(float(f) for f in fractions)
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be positive and sum to 1, got {fractions}")
    rng = make_rng(seed)
    n = len(ds)
    totals = _quotas(n, fractions)
    if np.any(totals == 0):
        raise DatasetError(f"split of {n} samples with fractions {fractions} leaves an empty part")
    perm = rng.permutation(n)
    if ds.labeled:
        labels = ds.labels()[perm]
        classes = np.unique(labels)
        members = [perm[labels == c] for c in classes]
        table = _stratified_counts(np.array([m.size for m in members]), totals, fractions)
        parts = [[] for _ in fractions]
        for m, row in zip(members, table):
            bounds = np.concatenate([[0], np.cumsum(row)])
            for s in range(len(fractions)):
                parts[s].extend(m[bounds[s] : bounds[s + 1]].tolist())
        # restore the shuffled order inside each part
        rank = np.empty(n, dtype=int)
        rank[perm] = np.arange(n)
        parts = [sorted(p, key=lambda i: rank[i]) for p in parts]
    else:
        bounds = np.concatenate([[0], np.cumsum(totals)])
        parts = [perm[bounds[s] : bounds[s + 1]].tolist() for s in range(len(fractions))]
    names = ("train", "val", "test")
    out = []
    for s, idx in enumerate(parts):
        sub = ds.subset(idx)
        sub.provenance = dict(sub.provenance, split={"seed": seed, "fractions": list(fractions),
                                                     "part": names[s] if s < 3 else s, "indices": idx})
        out.append(sub)
    return tuple(out)
