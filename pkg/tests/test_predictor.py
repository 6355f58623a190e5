import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tphenotype import data
from tphenotype import encoder as E
from tphenotype import predictor as P
from tphenotype.numeric import make_rng
from tphenotype.pipeline import preset_hyper

import gradsuite


def random_dist(rng, k):
    p = rng.dirichlet(np.ones(k) * rng.uniform(0.1, 2.0))
    return p


def test_js_examples():
    assert P.js_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert P.js_distance([1, 0], [0, 1]) == pytest.approx(math.log(2), abs=1e-12)
    assert P.js_distance([0.5, 0.5], [1, 0]) == pytest.approx(0.215762, abs=1e-5)


@given(st.integers(0, 2**31 - 1), st.integers(2, 5))
def test_js_properties(seed, k):
    rng = np.random.default_rng(seed)
    p, q = random_dist(rng, k), random_dist(rng, k)
    d = P.js_distance(p, q)
    assert 0.0 <= d <= math.log(2)
    assert d == P.js_distance(q, p)
    assert P.js_distance(p, p) <= 1e-12


def test_js_broadcasts():
    p = np.array([[1.0, 0.0], [0.5, 0.5]])
    assert P.js_distance(p, np.array([1.0, 0.0])).shape == (2,)


def test_js_many_random_pairs():
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.ones(3), size=1000)
    q = rng.dirichlet(np.ones(3), size=1000)
    d = P.js_distance(p, q)
    assert np.all(d >= 0) and np.all(d <= math.log(2))
    assert np.array_equal(d, P.js_distance(q, p))
    assert np.all(d[np.any(np.abs(p - q) > 1e-3, axis=1)] > 0)


def make_predictor(dim_z=6, dim_y=3, seed=0):
    hyper = P.PredictorHyper()
    return P.Predictor(P.init_weights(dim_z, dim_y, hyper, make_rng(seed)), np.ones(dim_z), dim_y, (), hyper)


@given(st.integers(0, 2**31 - 1))
def test_probs_normalized_and_deterministic(seed):
    pred = make_predictor(seed=seed % 100)
    z = np.random.default_rng(seed).normal(0, 3, size=(4, 6))
    p = pred.probs(z)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.array_equal(p, pred.probs(z))


def test_probs_rejects_wrong_width():
    with pytest.raises(P.LayoutError, match="expects 6"):
        make_predictor().probs(np.zeros(5))


def test_cross_entropy_gradient():
    assert max(gradsuite.cross_entropy(s) for s in range(gradsuite.CONFIGS)) <= gradsuite.THRESHOLD


@pytest.fixture(scope="module")
def trained():
    ds = data.gen_synthetic(1200, seed=11)
    train, val, test = data.split(ds, seed=0)
    enc = E.train_composite(train, preset_hyper("synthetic"), make_rng(0), val)
    pred = P.train_predictor(enc, train, P.PredictorHyper(), make_rng(1), val)
    return enc, pred, test


def test_heldout_accuracy(trained):
    enc, pred, test = trained
    acc = np.mean(pred.probs(enc.latents(test.series)).argmax(axis=1) == test.labels())
    assert acc >= 0.9


def test_layout_check(trained):
    enc, pred, test = trained
    z = enc.latent(test.series[0])
    assert pred.probs(z).shape == (2,)
    wrong = E.LatentVector(z.values, tuple(E.Block(b.feature, "static", b.start, b.stop) for b in z.layout))
    with pytest.raises(P.LayoutError):
        pred.probs(wrong)


def test_different_series_give_different_predictions(trained):
    enc, pred, test = trained
    z = enc.latents(test.series[:2])
    assert not np.array_equal(z[0], z[1])
    assert not np.array_equal(pred.probs(z[0]), pred.probs(z[1]))


def test_constant_label_converges():
    ds = data.gen_synthetic(60, seed=3)
    const = data.Dataset([data.TimeSeries(s.t, s.x, y=1) for s in ds.series], 2, 2, provenance={"generator": "test"})
    enc = E.CompositeEncoder({0: E.LaplaceEncoder.initialize(E.EncoderHyper(), make_rng(0)),
                              1: E.LaplaceEncoder.initialize(E.EncoderHyper(), make_rng(1))}, 2)
    pred = P.train_predictor(enc, const, P.PredictorHyper(epochs=50), make_rng(2))
    assert pred.history[-1]["loss"] <= 0.05
    assert np.all(pred.probs(enc.latents(const.series)).argmax(axis=1) == 1)


def test_encoder_frozen_and_unlabeled_refused():
    ds = data.gen_synthetic(20, seed=3)
    enc = E.CompositeEncoder({0: E.LaplaceEncoder.initialize(E.EncoderHyper(), make_rng(0)),
                              1: E.LaplaceEncoder.initialize(E.EncoderHyper(), make_rng(1))}, 2)
    before = {f: e.weights["head_b2"].copy() for f, e in enc.encoders.items()}
    P.train_predictor(enc, ds, P.PredictorHyper(epochs=2), make_rng(0))
    assert all(np.array_equal(before[f], enc.encoders[f].weights["head_b2"]) for f in before)
    unlabeled = data.Dataset([data.TimeSeries(s.t, s.x) for s in ds.series], 2, 2, provenance={"generator": "test"})
    with pytest.raises(data.DatasetError, match="labeled dataset is required"):
        P.train_predictor(enc, unlabeled, P.PredictorHyper(epochs=1), make_rng(0))


def test_predictor_json_roundtrip(trained):
    _, pred, _ = trained
    back = P.predictor_from_dict(json.loads(json.dumps(P.predictor_to_dict(pred))))
    z = np.random.default_rng(0).normal(size=(3, pred.dim_z))
    assert np.array_equal(back.probs(z), pred.probs(z))
    assert back.layout == pred.layout
