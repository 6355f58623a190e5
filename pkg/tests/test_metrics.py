import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tphenotype import metrics as M


def relabel(a, rng):
    a = np.asarray(a)
    labels = np.unique(a)
    return rng.permutation(labels.size + 3)[np.searchsorted(labels, a)]


# agreement metrics


def test_purity_examples():
    assert M.purity([0, 0, 0, 0, 1, 1], [1, 1, 1, 2, 2, 2]) == pytest.approx(5 / 6, abs=1e-12)
    assert M.purity([2, 2, 5, 5], [0, 0, 1, 1]) == 1.0
    assert M.purity([0] * 4, [0, 1, 0, 1]) == 0.5
    with pytest.raises(ValueError, match="length mismatch"):
        M.purity([0, 1], [0])


def test_adjusted_rand_examples():
    # pair counts: same-same 2, row pairs 4, column pairs 4, total 10
    assert M.adjusted_rand([0, 0, 1, 1, 1], [0, 0, 0, 1, 1]) == pytest.approx(1 / 6, abs=1e-12)
    assert M.adjusted_rand([0] * 6, [0, 0, 0, 1, 1, 1]) == pytest.approx(0.0, abs=1e-12)
    assert M.adjusted_rand([3, 3, 1, 1], [0, 0, 1, 1]) == 1.0
    with pytest.raises(ValueError):
        M.adjusted_rand([0], [0, 1])


def test_nmi_examples():
    assert M.nmi([1, 1, 0, 0, 2], [0, 0, 1, 1, 2]) == pytest.approx(1.0, abs=1e-12)
    assert M.nmi([0] * 6, [0, 1, 0, 1, 0, 1]) == 0.0
    rng = np.random.default_rng(0)
    assert M.nmi(rng.integers(0, 3, 10000), rng.integers(0, 3, 10000)) <= 0.02
    # two-by-two table with one swap: I / sqrt(H H) by hand
    p = np.array([[2, 1], [0, 3]]) / 6
    px, py = p.sum(1), p.sum(0)
    nz = p > 0
    mi = np.sum(p[nz] * np.log(p[nz] / np.outer(px, py)[nz]))
    h = lambda q: -np.sum(q * np.log(q))
    assert M.nmi([0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 1, 1]) == pytest.approx(mi / math.sqrt(h(px) * h(py)), abs=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_agreement_ranges_and_relabeling(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    a, b = rng.integers(0, 4, n), rng.integers(0, 3, n)
    pur, ari, mi = M.purity(a, b), M.adjusted_rand(a, b), M.nmi(a, b)
    assert 0 <= pur <= 1 and -1 <= ari <= 1 and 0 <= mi <= 1
    a2, b2 = relabel(a, rng), relabel(b, rng)
    assert M.purity(a2, b2) == pur
    assert M.adjusted_rand(a2, b2) == pytest.approx(ari, abs=1e-12)
    assert M.nmi(a2, b2) == pytest.approx(mi, abs=1e-12)


# prediction metrics


def two_class(s):
    s = np.asarray(s, dtype=float)
    return np.column_stack([1 - s, s])


def test_auroc_auprc_examples():
    onehot = np.eye(2)[[1, 0, 1, 0]]
    roc, prc = M.auroc_auprc(two_class([0.9, 0.8, 0.7, 0.6]), onehot)
    # 3 of the 4 positive/negative pairs are ordered; precision 1 then 2/3 at recall 1/2 and 1
    assert roc == pytest.approx(0.75, abs=1e-12)
    assert prc == pytest.approx(0.5 + 0.5 * 2 / 3, abs=1e-12)
    assert M.auroc_auprc(two_class([0.9, 0.1, 0.8, 0.2]), onehot) == (1.0, 1.0)


def test_auroc_random_scores():
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 2, 5000)
    roc, _ = M.auroc_auprc(two_class(rng.uniform(size=5000)), np.eye(2)[labels])
    assert abs(roc - 0.5) <= 0.03


def test_auroc_ties_count_half():
    roc, _ = M.auroc_auprc(two_class([0.5, 0.5]), np.eye(2)[[1, 0]])
    assert roc == 0.5


@given(st.integers(0, 2**31 - 1))
def test_auroc_complement(seed):
    rng = np.random.default_rng(seed)
    y = np.r_[0, 1, rng.integers(0, 2, 20)]
    s = rng.uniform(size=y.size)
    a = M._auroc(s, y.astype(float))
    b = M._auroc(1 - s, y.astype(float))
    assert a + b == pytest.approx(1.0, abs=1e-12)


def test_absent_class_skipped(caplog):
    scores = np.array([[0.7, 0.2, 0.1], [0.2, 0.7, 0.1]])
    roc, _ = M.auroc_auprc(scores, np.eye(3)[[0, 1]])
    assert roc == 1.0 and "class 2 absent" in caplog.text


# consistency metrics


def blobs(rng, centers, per, spread=0.05):
    pts = np.vstack([rng.normal(c, spread, (per, len(c))) for c in centers])
    return pts, np.repeat(np.arange(len(centers)), per)


def test_silhouette_separated_blobs():
    rng = np.random.default_rng(0)
    X, a = blobs(rng, [(0, 0), (10, 10)], 8)
    for m in (1, 3, 8):
        assert M.silhouette_m(X, a, m) >= 0.95


def test_silhouette_degenerate():
    assert M.silhouette_m(np.zeros((4, 2)), [0, 0, 1, 1], 2) == 0.0
    with pytest.raises(ValueError):
        M.silhouette_m(np.zeros((3, 2)), [0, 0, 0], 1)
    with pytest.raises(ValueError):
        M.silhouette_m(np.zeros((3, 2)), [0, 0, 1], 0)


def full_silhouette(X, a):
    D = ((X[:, None] - X[None]) ** 2).sum(-1)
    out = []
    for i in range(len(a)):
        own = [j for j in range(len(a)) if a[j] == a[i] and j != i]
        if not own:
            out.append(0.0)
            continue
        ai = D[i, own].mean()
        bi = min(D[i, a == k].mean() for k in set(a.tolist()) if k != a[i])
        out.append(abs(bi - ai) / max(ai, bi) if max(ai, bi) > 0 else 0.0)
    return float(np.mean(out))


@given(st.integers(0, 2**31 - 1))
def test_silhouette_large_m_is_all_members(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 2))
    a = np.r_[0, 1, 2, rng.integers(0, 3, 9)]
    m = int(np.bincount(a).max())
    assert M.silhouette_m(X, a, m) == pytest.approx(full_silhouette(X, a), abs=1e-12)


def test_pattern_purity_examples():
    rng = np.random.default_rng(2)
    X, a = blobs(rng, [(0, 0), (10, 0), (0, 10)], 5)
    # m = 4 links every member of a five-point blob to all the others
    assert M.pattern_purity(X, a, 4) == 1.0
    # cluster 0 is two far blobs of five points, cluster 1 one blob
    a = np.r_[np.zeros(10, int), np.ones(5, int)]
    assert M.pattern_purity(X, a, 2) == pytest.approx(0.75, abs=1e-12)
    assert M.pattern_purity(np.zeros((2, 1)), [0, 1], 1) == 1.0


def test_pattern_purity_bounds_and_monotone():
    rng = np.random.default_rng(3)
    for _ in range(20):
        X = rng.normal(size=(15, 2))
        a = np.r_[0, 1, 2, rng.integers(0, 3, 12)]
        sizes = np.bincount(a)
        values = [M.pattern_purity(X, a, m) for m in range(1, 8)]
        assert all(np.mean(1 / sizes) <= v <= 1 for v in values)
        assert all(b >= a_ for a_, b in zip(values, values[1:]))


def test_ausil_examples():
    assert M.area_under_curve([0.5, 1.0], [-0.2, 0.6]) == pytest.approx(0.6, abs=1e-12)
    assert M.area_under_curve([0.2, 0.9, 0.5], [1, 1, 1]) == 1.0
    assert M.area_under_curve([0.2, 0.9, 0.5], [-1, -1, -1]) == 0.0
    assert M.area_under_curve([0.5, 0.5], [0.0, 1.0]) == pytest.approx(0.75)
    rng = np.random.default_rng(4)
    X, a = blobs(rng, [(0, 0), (10, 10)], 10)
    assert 0.95 <= M.ausil(X, a) <= 1.0
    with pytest.raises(ValueError):
        M.ausil(X, a, M=1)


def test_h_score():
    assert M.h_score(0.8, 0.6) == pytest.approx(0.685714, abs=1e-6)
    assert M.h_score(0.4, 0.4) == pytest.approx(0.4)
    assert M.h_score(1.0, 0.0) == 0.0 and M.h_score(0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        M.h_score(-0.1, 0.5)


def test_report_formats():
    report = {"purity": 0.5, "K": 3}
    assert M.report_text(report) == "K 3\npurity 0.5\n"
    assert M.report_csv(report) == "K,purity\n3,0.5\n"
