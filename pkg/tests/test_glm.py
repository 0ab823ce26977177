import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import special, stats

from fpmpc.errors import InvalidArgument, ShapeError, TrainingDiverged
from fpmpc.glm import (
    Dataset, GlmModel, TrainConfig, discrepancy, link_inverse, log_likelihood, metrics, minibatch_indices,
    predict, score, sgd_step, synth_binary, synth_linear, synth_poisson, train,
)
from fpmpc.tensor import RandomSource


# --------------------------------------------------------------------------
# link inverses

def test_link_inverse_examples():
    assert link_inverse("logit", np.array(0.0)) == 0.5
    assert link_inverse("probit", np.array(0.0)) == 0.5
    assert abs(link_inverse("logit", np.array(2.0)) - special.expit(2.0)) <= 1e-4
    assert abs(link_inverse("logit", np.array(2.0)) - 0.880797) <= 1e-4
    assert link_inverse("identity", np.array(3.5)) == 3.5
    assert link_inverse("log", np.array(-1.0)) == pytest.approx(math.exp(-1), rel=2e-6)


def test_link_inverse_domain():
    with pytest.raises(Exception, match="series interval"):
        link_inverse("logit", np.array([25.0]))
    with pytest.raises(InvalidArgument):
        link_inverse("cauchit", np.array(0.0))


# --------------------------------------------------------------------------
# SGD step

def cfg(link, **kw):
    return TrainConfig.for_link(link, **kw)


def test_identity_single_sample_closed_form():
    r = np.array([[1.0, -2.0, 0.5]])
    s = np.array([0.7])
    model = GlmModel("identity", np.array([0.1, 0.2, -0.3]), 0.05)
    eta = 0.03
    new = sgd_step(model, r, s, cfg("identity", learning_rate=eta))
    resid = s[0] - (r[0] @ model.w[:, 0] + 0.05)
    assert_allclose(new.w[:, 0], model.w[:, 0] + eta * r[0] * resid, rtol=1e-15)
    assert new.c[0, 0] == pytest.approx(0.05 + eta * resid, rel=1e-15)


@pytest.mark.parametrize("link", ["identity", "logit", "log"])
def test_zero_gradient_leaves_model(link):
    R = RandomSource(1).normal((8, 3)) * 0.3
    model = GlmModel(link, np.array([0.2, -0.1, 0.4]), 0.1)
    s = link_inverse(link, model.theta(R))[:, 0]
    new = sgd_step(model, R, s, cfg(link, weight_decay=0.0))
    assert_allclose(new.w, model.w, atol=1e-15)
    assert_allclose(new.c, model.c, atol=1e-15)


def test_weight_decay_spares_bias():
    R = np.zeros((2, 2))
    model = GlmModel("identity", np.array([1.0, -2.0]), 0.5)
    new = sgd_step(model, R, np.full(2, 0.5), cfg("identity", learning_rate=0.1, weight_decay=0.2))
    assert_allclose(new.w[:, 0], [0.98, -1.96], rtol=1e-15)
    assert new.c[0, 0] == 0.5


# --------------------------------------------------------------------------
# gradients

def fd_gradient(model, data, h=1e-5):
    gw = np.zeros_like(model.w)
    gc = np.zeros_like(model.c)
    for arr, g in ((model.w, gw), (model.c, gc)):
        for i in np.ndindex(arr.shape):
            old = arr[i]
            arr[i] = old + h
            up = log_likelihood(model, data)
            arr[i] = old - h
            dn = log_likelihood(model, data)
            arr[i] = old
            g[i] = (up - dn) / (2 * h)
    return gw, gc


@pytest.mark.parametrize("link,k", [("identity", 1), ("logit", 1), ("log", 1), ("multinomial", 3)])
def test_score_matches_finite_differences(link, k):
    rng = RandomSource(7)
    A = rng.normal((40, 4))
    if link == "identity":
        t = rng.normal(40)
    elif link == "logit":
        t = (rng.random(40) < 0.4).astype(float)
    elif link == "log":
        t = np.round(rng.random(40) * 6)
    else:
        t = np.floor(rng.random(40) * k)
    model = GlmModel(link, rng.normal((4, k)) * 0.5, rng.normal(k) * 0.3)
    data = Dataset(A, t)
    gw, gc = fd_gradient(model, data)
    sw, sc = score(model, data)
    if link == "identity":
        # the reported loss omits the factor 1/2
        gw, gc = gw / 2, gc / 2
    assert_allclose(sw, gw, rtol=1e-6, atol=1e-9)
    assert_allclose(sc, gc, rtol=1e-6, atol=1e-9)


@given(st.floats(0.01, 100))
def test_classifier_direction_invariance(scale):
    prob = synth_binary(seed=3)
    base = predict(GlmModel("logit", prob.w, 0.0), prob.data.A)
    assert_array_equal(predict(GlmModel("logit", prob.w * scale, 0.0), prob.data.A), base)
    W = np.stack([-prob.w, prob.w], axis=1)
    assert_array_equal(predict(GlmModel("multinomial", W * scale, np.zeros(2)), prob.data.A), base)


# --------------------------------------------------------------------------
# synthetic problems

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_synth_linear(seed):
    p = synth_linear(seed=seed)
    A = p.data.A
    assert_allclose(A.T @ A, np.eye(8), atol=1e-12)
    v = (p.data.t - A @ p.w) / 10.0
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
    assert_allclose(A.T @ v, 0.0, atol=1e-12)
    m = GlmModel("identity", p.w, 0.0)
    assert metrics(m, p.data)["residual"] == pytest.approx(10.0, abs=1e-10)
    assert metrics(m, p.data)["avg_neg_log_likelihood"] == pytest.approx(100 / 64, abs=1e-10)


@pytest.mark.parametrize("link", ["logit", "probit"])
@pytest.mark.parametrize("seed", [0, 5])
def test_synth_binary(link, seed):
    p = synth_binary(link=link, seed=seed)
    A = p.data.A
    assert np.linalg.norm(p.w) == pytest.approx(1.0, abs=1e-12)
    for j in range(10):
        assert np.linalg.norm(A[2 * j] - A[2 * j + 1]) == pytest.approx(0.04, abs=1e-12)
        assert A[2 * j] @ p.w == pytest.approx(0.02, abs=1e-12)
        assert A[2 * j + 1] @ p.w == pytest.approx(-0.02, abs=1e-12)
    assert metrics(GlmModel(link, p.w, 0.0), p.data)["accuracy"] == 1.0


def test_synth_poisson():
    above = []
    for seed in range(40):
        p = synth_poisson(seed=seed)
        assert np.linalg.norm(p.w) == pytest.approx(10.0, abs=1e-12)
        t = p.data.t
        assert np.all(t >= 0) and np.all(t == np.round(t))
        assert p.c == 3.0
        above.append(np.mean(t > 20))
    assert 0.4 <= np.mean(above) <= 0.6


def test_synth_validation():
    with pytest.raises(InvalidArgument):
        synth_binary(link="log")
    with pytest.raises(InvalidArgument):
        synth_binary(m=10)


# --------------------------------------------------------------------------
# metrics and log-likelihoods

def test_uniform_multinomial_loss():
    for k in (2, 3, 7):
        data = Dataset(np.ones((5, 2)), np.arange(5) % k)
        m = GlmModel.zeros("multinomial", 2, k)
        assert metrics(m, data)["avg_neg_log_likelihood"] == pytest.approx(math.log(k), rel=1e-15)


def test_log_likelihoods_against_scipy():
    rng = RandomSource(11)
    A = rng.normal((30, 3))
    w = rng.normal(3) * 0.5
    theta = A @ w + 0.2
    y = (rng.random(30) < 0.5).astype(float)
    cnt = np.round(rng.random(30) * 9)
    cls = np.floor(rng.random(30) * 3)
    assert log_likelihood(GlmModel("logit", w, 0.2), Dataset(A, y)) == pytest.approx(
        np.mean(stats.bernoulli.logpmf(y, special.expit(theta))), rel=1e-12)
    assert log_likelihood(GlmModel("probit", w, 0.2), Dataset(A, y)) == pytest.approx(
        np.mean(stats.bernoulli.logpmf(y, special.ndtr(theta))), rel=1e-12)
    assert log_likelihood(GlmModel("log", w, 0.2), Dataset(A, cnt)) == pytest.approx(
        np.mean(stats.poisson.logpmf(cnt, np.exp(theta))), rel=1e-12)
    W = rng.normal((3, 3))
    P = special.softmax(A @ W, axis=1)
    assert log_likelihood(GlmModel("multinomial", W, np.zeros(3)), Dataset(A, cls)) == pytest.approx(
        np.mean(np.log(P[np.arange(30), cls.astype(int)])), rel=1e-12)


def test_discrepancy():
    assert discrepancy([2.0, 0.0], [5.0, 0.0]) == 0.0
    assert discrepancy([1.0, 0.0], [0.0, 3.0]) == pytest.approx(math.sqrt(2))
    assert math.isnan(discrepancy([0.0, 0.0], [1.0, 0.0]))


# --------------------------------------------------------------------------
# model objects

def test_model_shapes_and_checkpoint(tmp_path):
    m = GlmModel("multinomial", np.arange(6.0).reshape(3, 2), [0.5, -0.5])
    cfg_ = TrainConfig.for_link("multinomial")
    m.save(tmp_path / "m.json", cfg_, [1.0, 0.5])
    back = GlmModel.load(tmp_path / "m.json")
    assert_array_equal(back.w, m.w)
    assert_array_equal(back.c, m.c)
    assert back.link == "multinomial"
    with pytest.raises(ShapeError):
        GlmModel("identity", np.ones(3), [1.0, 2.0])
    with pytest.raises(InvalidArgument):
        GlmModel.zeros("logit", 3, 2)
    with pytest.raises(ShapeError):
        Dataset(np.ones((3, 2)), np.ones(4))


def test_config_validation():
    assert TrainConfig.for_link("multinomial").weight_decay == 1e-3
    assert TrainConfig.for_link("log").learning_rate == 3e-3
    for kw in (dict(learning_rate=0), dict(learning_rate=1, minibatch=0), dict(learning_rate=1, weight_decay=-1),
               dict(learning_rate=1, mode="both"), dict(learning_rate=1, gamma=1.0)):
        with pytest.raises(InvalidArgument):
            TrainConfig(**kw)


@given(st.integers(1, 50), st.integers(1, 10), st.integers(0, 30), st.integers(0, 2**32))
@settings(max_examples=30)
def test_minibatches_sweep_permutations(m, size, iters, seed):
    b = minibatch_indices(m, size, iters, seed)
    assert b.shape == (iters, size)
    flat = b.ravel()
    for e in range(len(flat) // m):
        assert sorted(flat[e * m:(e + 1) * m]) == list(range(m))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_history_and_divergence():
    p = synth_linear()
    res = train(GlmModel.zeros("identity", 8), p.data, cfg("identity", iterations=300))
    assert len(res.loss_history) == 4
    assert res.loss_history[0] == pytest.approx(np.mean(p.data.t ** 2))
    assert res.loss_history[-1] < res.loss_history[0]
    with pytest.raises(TrainingDiverged):
        train(GlmModel.zeros("identity", 8), p.data, cfg("identity", learning_rate=1e3, iterations=2000))
    with pytest.raises(TrainingDiverged):
        train(GlmModel.zeros("identity", 2), Dataset(np.zeros((0, 2)), np.zeros(0)), cfg("identity"))


# --------------------------------------------------------------------------
# public and private modes agree

def test_single_private_logistic_step():
    rng = RandomSource(21)
    R = rng.normal((8, 5)) * 0.4
    s = (rng.random(8) < 0.5).astype(float)
    model = GlmModel("logit", rng.normal(5) * 0.5, 0.1)
    data = Dataset(R, s)
    out = {}
    for mode in ("public", "private"):
        c = cfg("logit", iterations=1, minibatch=8, mode=mode)
        out[mode] = train(model, data, c).model
    assert np.max(np.abs(out["public"].w - out["private"].w)) <= 1e-4
    assert np.max(np.abs(out["public"].c - out["private"].c)) <= 1e-4


@pytest.mark.parametrize("link,k", [("identity", 1), ("logit", 1), ("probit", 1), ("log", 1), ("multinomial", 2)])
def test_200_steps_agree(link, k):
    if link == "identity":
        p = synth_linear()
    elif link == "log":
        p = synth_poisson()
    else:
        p = synth_binary(link="probit" if link == "probit" else "logit")
    model = GlmModel.zeros(link, 8, k)
    w = {}
    for mode in ("public", "private"):
        r = train(model, p.data, cfg(link, iterations=200, mode=mode))
        w[mode] = np.concatenate([r.model.w.ravel(), r.model.c.ravel()])
    assert np.linalg.norm(w["public"] - w["private"]) <= 1e-3
