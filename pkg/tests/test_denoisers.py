"""The analytic GMM denoiser (exactness against the closed-form marginal)
and the trainable conv stack."""

import numpy as np
import pytest
import scipy.special

from gradfill.denoisers import (AnalyticGMMDenoiser, ConvDenoiser, GMMPrior,
                                gmm_eps, load_model, save_model,
                                train_denoiser)
from gradfill.schedule import make_linear_schedule
from gradfill.tensor import Tape, Tensor, backward, tsum


def small_prior(seed=0, K=3, shape=(4, 4, 1), s=0.5):
    rng = np.random.default_rng(seed)
    w = rng.random(K) + 0.5
    w = w / w.sum()
    means = rng.standard_normal((K,) + shape)
    return GMMPrior(w, means, s)


def log_marginal(prior, x, abar):
    """Closed-form log p_t(x) for the noised mixture."""
    var = abar * prior.s ** 2 + (1.0 - abar)
    d = x.size
    quad = ((x[None] - np.sqrt(abar) * prior.means) ** 2).sum(axis=(1, 2, 3))
    comps = np.log(prior.weights) - 0.5 * d * np.log(2.0 * np.pi * var) \
        - quad / (2.0 * var)
    return float(scipy.special.logsumexp(comps))


def fd_score(prior, x, abar, eps=1e-6):
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = log_marginal(prior, x, abar)
        flat[i] = orig - eps
        lo = log_marginal(prior, x, abar)
        flat[i] = orig
        gf[i] = (hi - lo) / (2.0 * eps)
    return g


def test_gmm_prior_validation():
    means = np.zeros((2, 2, 2, 1))
    with pytest.raises(ValueError, match="weights \\(K,\\) and means"):
        GMMPrior(np.array([[0.5, 0.5]]), means, 1.0)
    with pytest.raises(ValueError, match="must be positive"):
        GMMPrior(np.array([1.5, -0.5]), means, 1.0)
    with pytest.raises(ValueError, match="sum to"):
        GMMPrior(np.array([0.7, 0.7]), means, 1.0)
    with pytest.raises(ValueError, match="s must be positive"):
        GMMPrior(np.array([0.5, 0.5]), means, 0.0)
    with pytest.raises(ValueError, match="non-finite"):
        GMMPrior(np.array([0.5, 0.5]), means + np.inf, 1.0)


def test_component_extraction():
    prior = small_prior()
    one = prior.component(1)
    assert one.K == 1
    assert one.weights[0] == 1.0
    np.testing.assert_array_equal(one.means[0], prior.means[1])


def test_eps_matches_score_of_closed_form_marginal():
    # eps(x, t) must equal -sqrt(1 - abar_t) * grad log p_t(x)
    sched = make_linear_schedule(50)
    rng = np.random.default_rng(1)
    for trial in range(10):
        prior = small_prior(seed=trial, K=2 + trial % 3)
        t = int(rng.integers(1, 51))
        x = rng.standard_normal(prior.image_shape)
        abar = sched.alpha_bar[t]
        got = gmm_eps(prior, x, t, sched).data
        want = -np.sqrt(1.0 - abar) * fd_score(prior, x, abar)
        scale = max(np.max(np.abs(want)), 1e-8)
        assert np.max(np.abs(got - want)) / scale < 1e-5


def test_single_gaussian_closed_form():
    # K=1, zero mean: eps = sqrt(1-abar)/(abar s^2 + 1 - abar) * x
    sched = make_linear_schedule(20)
    prior = GMMPrior(np.ones(1), np.zeros((1, 3, 3, 1)), 0.7)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 3, 1))
    t = 11
    abar = sched.alpha_bar[t]
    coef = np.sqrt(1.0 - abar) / (abar * 0.49 + 1.0 - abar)
    np.testing.assert_allclose(gmm_eps(prior, x, t, sched).data, coef * x,
                               rtol=1e-14)


def test_cond_equals_component_prior():
    sched = make_linear_schedule(30)
    prior = small_prior(seed=3, K=3)
    rng = np.random.default_rng(4)
    x = rng.standard_normal(prior.image_shape)
    for k in range(3):
        a = gmm_eps(prior, x, 9, sched, cond=k).data
        b = gmm_eps(prior.component(k), x, 9, sched).data
        np.testing.assert_array_equal(a, b)


def test_gmm_eps_validation():
    sched = make_linear_schedule(10)
    prior = small_prior()
    x = np.zeros(prior.image_shape)
    with pytest.raises(ValueError, match="outside 1..10"):
        gmm_eps(prior, x, 0, sched)
    with pytest.raises(ValueError, match="outside 1..10"):
        gmm_eps(prior, x, 11, sched)
    with pytest.raises(ValueError, match="does not match prior images"):
        gmm_eps(prior, np.zeros((2, 2, 1)), 5, sched)
    with pytest.raises(ValueError, match="cond=5 outside"):
        gmm_eps(prior, x, 5, sched, cond=5)


def test_gmm_eps_is_differentiable():
    sched = make_linear_schedule(25)
    prior = small_prior(seed=5, K=2)
    rng = np.random.default_rng(6)
    x = rng.standard_normal(prior.image_shape)
    t = 13
    tape = Tape()
    tx = tape.leaf(x)
    out = tsum(gmm_eps(prior, tx, t, sched))
    got = backward(out)[tx]
    eps = 1e-6
    want = np.zeros_like(x)
    flat = x.reshape(-1)
    wf = want.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(np.sum(gmm_eps(prior, x, t, sched).data))
        flat[i] = orig - eps
        lo = float(np.sum(gmm_eps(prior, x, t, sched).data))
        flat[i] = orig
        wf[i] = (hi - lo) / (2.0 * eps)
    scale = max(np.max(np.abs(want)), 1e-8)
    assert np.max(np.abs(got - want)) / scale < 1e-5


def test_analytic_denoiser_wrapper():
    sched = make_linear_schedule(15)
    prior = small_prior(seed=7)
    den = AnalyticGMMDenoiser(prior, sched)
    rng = np.random.default_rng(8)
    x = rng.standard_normal(prior.image_shape)
    np.testing.assert_array_equal(den(x, 7).data,
                                  gmm_eps(prior, x, 7, sched).data)
    assert den.image_shape == prior.image_shape


def test_conv_denoiser_untrained_predicts_zero():
    model = ConvDenoiser(channels=1, hidden=8, layers=3, seed=0)
    rng = np.random.default_rng(9)
    x = rng.standard_normal((6, 5, 1))
    out = model(x, 17)
    np.testing.assert_array_equal(out.data, np.zeros((6, 5, 1)))


def test_conv_denoiser_shapes_and_validation():
    model = ConvDenoiser(channels=3, hidden=4, layers=2, seed=1)
    x = np.zeros((5, 5, 3))
    assert model(x, 1).data.shape == (5, 5, 3)
    with pytest.raises(ValueError, match="does not match 3 channels"):
        model(np.zeros((5, 5, 1)), 1)
    with pytest.raises(ValueError, match="at least two"):
        ConvDenoiser(layers=1)
    with pytest.raises(ValueError, match="must be even"):
        ConvDenoiser(emb_dim=5)


def test_embedding_properties():
    model = ConvDenoiser(emb_dim=8)
    e1 = model.embedding(3)
    e2 = model.embedding(4)
    assert e1.shape == (8,)
    assert np.all(np.abs(e1) <= 1.0)
    assert not np.array_equal(e1, e2)


def test_conv_gradient_wrt_input_matches_fd():
    model = ConvDenoiser(channels=1, hidden=4, layers=2, seed=2)
    # give the zero-initialized head real weights so gradients flow
    rng = np.random.default_rng(3)
    model.params["k1"] = rng.standard_normal(model.params["k1"].shape) * 0.3
    x = rng.standard_normal((5, 5, 1))
    t = 4
    tape = Tape()
    tx = tape.leaf(x)
    got = backward(tsum(model(tx, t)))[tx]
    eps = 1e-6
    want = np.zeros_like(x)
    flat = x.reshape(-1)
    wf = want.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(np.sum(model(x, t).data))
        flat[i] = orig - eps
        lo = float(np.sum(model(x, t).data))
        flat[i] = orig
        wf[i] = (hi - lo) / (2.0 * eps)
    scale = max(np.max(np.abs(want)), 1e-8)
    assert np.max(np.abs(got - want)) / scale < 1e-5


def test_training_beats_zero_predictor():
    sched = make_linear_schedule(10)
    rng_data = np.random.default_rng(10)
    base = rng_data.standard_normal((4, 4, 1))

    def sample_x0(rng):
        return base + 0.1 * rng.standard_normal((4, 4, 1))

    model = ConvDenoiser(channels=1, hidden=6, layers=2, seed=4)
    model, losses = train_denoiser(model, sample_x0, sched,
                                   steps=300, lr=0.02, seed=5, momentum=0.9)
    assert len(losses) == 300
    # the constant-zero predictor scores exactly 1.0 in expectation
    assert np.mean(losses[-50:]) < 0.75


def test_training_is_deterministic():
    sched = make_linear_schedule(8)

    def sample_x0(rng):
        return rng.standard_normal((3, 3, 1))

    runs = []
    for _ in range(2):
        model = ConvDenoiser(channels=1, hidden=4, layers=2, seed=6)
        model, losses = train_denoiser(model, sample_x0, sched,
                                       steps=40, lr=0.01, seed=7)
        runs.append((losses, {k: v.copy() for k, v in model.params.items()}))
    assert runs[0][0] == runs[1][0]
    for k in runs[0][1]:
        np.testing.assert_array_equal(runs[0][1][k], runs[1][1][k])


def test_save_load_round_trip(tmp_path):
    model = ConvDenoiser(channels=1, hidden=4, layers=3, emb_dim=6, seed=8)
    rng = np.random.default_rng(11)
    for k in model.params:
        model.params[k] = rng.standard_normal(model.params[k].shape)
    d1 = str(tmp_path / "m1")
    d2 = str(tmp_path / "m2")
    save_model(model, d1)
    back = load_model(d1)
    assert (back.channels, back.hidden, back.layers, back.emb_dim, back.kernel) \
        == (1, 4, 3, 6, 3)
    for k, v in model.params.items():
        np.testing.assert_array_equal(back.params[k],
                                      v.astype(np.float32).astype(np.float64))
    # a second save of the loaded model is byte-identical file by file
    save_model(back, d2)
    import os
    for name in sorted(os.listdir(d1)):
        assert open(os.path.join(d1, name), "rb").read() == \
            open(os.path.join(d2, name), "rb").read(), name


def test_load_model_rejects_other_manifests(tmp_path):
    import json
    import os
    d = str(tmp_path / "bad")
    os.makedirs(d)
    with open(os.path.join(d, "manifest.json"), "w") as fh:
        json.dump({"format": "something-else"}, fh)
    with pytest.raises(ValueError, match="not a conv-denoiser manifest"):
        load_model(d)
