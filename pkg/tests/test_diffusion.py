"""Noise schedule, forward mixing, loss, and reverse-chain sampling."""

import numpy as np
import pytest

from ssdi.blocks import BlockConfig
from ssdi.denoiser import Denoiser, DenoiserConfig
from ssdi.diffusion import (
    QUANTILE_LEVELS,
    forward_noise,
    impute,
    make_schedule,
    sample,
    schedule_from_dict,
    training_step,
)
from ssdi.errors import DegenerateBatchError, DomainError
from ssdi.numerics import Tensor


class AffinePredictor:
    """Deterministic stand-in model with a closed form the tests can re-derive."""

    def __call__(self, x_t, x_cond, cond_mask, t):
        return x_t * 0.25 + x_cond * 0.5 + cond_mask * (-0.1)


class ZeroPredictor:
    def __call__(self, x_t, x_cond, cond_mask, t):
        return x_t * 0.0


def tiny_denoiser(K=2, L=8, T=4, seed=0):
    cfg = DenoiserConfig(seq_dim=6, diffusion_embed_dim=8,
                         block=BlockConfig(d_state=4, conv_width=3, inner=6))
    return Denoiser(cfg, n_channels=K, seq_len=L, max_t=T,
                    rng=np.random.default_rng(seed))


# --------------------------------------------------------------- schedule

def test_constant_beta_schedule_example():
    sched = make_schedule(2, 0.5, 0.5, "linear")
    np.testing.assert_array_equal(sched.beta, [0.5, 0.5])
    np.testing.assert_array_equal(sched.alpha, [0.5, 0.5])
    np.testing.assert_array_equal(sched.alpha_bar, [0.5, 0.25])


def test_quadratic_schedule_spaces_sqrt_beta_evenly():
    sched = make_schedule(50, 1e-4, 0.5, "quadratic")
    roots = np.sqrt(sched.beta)
    np.testing.assert_allclose(np.diff(roots), np.diff(roots)[0], rtol=1e-12)
    assert abs(sched.beta[0] - 1e-4) < 1e-18
    assert abs(sched.beta[-1] - 0.5) < 1e-15
    assert np.all(np.diff(sched.beta) > 0)
    assert np.all(np.diff(sched.alpha_bar) < 0)


def test_linear_schedule_spaces_beta_evenly():
    sched = make_schedule(10, 0.01, 0.2, "linear")
    np.testing.assert_allclose(np.diff(sched.beta), np.diff(sched.beta)[0],
                               rtol=1e-12)
    assert sched.beta[0] == 0.01
    assert sched.beta[-1] == 0.2


def test_schedule_validation():
    with pytest.raises(DomainError):
        make_schedule(0)
    with pytest.raises(DomainError):
        make_schedule(5, beta_start=0.0)
    with pytest.raises(DomainError):
        make_schedule(5, beta_end=1.0)
    with pytest.raises(DomainError):
        make_schedule(5, beta_start=0.4, beta_end=0.3)
    with pytest.raises(DomainError):
        make_schedule(5, kind="cosine")


def test_alpha_bar_before_and_sigma2():
    sched = make_schedule(3, 0.1, 0.3, "linear")
    assert sched.alpha_bar_before(1) == 1.0
    assert sched.alpha_bar_before(2) == sched.alpha_bar[0]
    assert sched.alpha_bar_before(3) == sched.alpha_bar[1]
    assert sched.sigma2(1) == 0.0
    expect = (1 - sched.alpha_bar[1]) / (1 - sched.alpha_bar[2]) * sched.beta[2]
    assert abs(sched.sigma2(3) - expect) < 1e-16
    with pytest.raises(DomainError):
        sched.alpha_bar_at(0)
    with pytest.raises(DomainError):
        sched.alpha_bar_at(4)


def test_schedule_dict_roundtrip():
    sched = make_schedule(7, 2e-4, 0.4, "quadratic")
    back = schedule_from_dict(sched.to_dict())
    np.testing.assert_array_equal(back.beta, sched.beta)
    assert back.kind == sched.kind


# ---------------------------------------------------------- forward noise

def test_forward_noise_matches_hand_formula():
    sched = make_schedule(5, 0.05, 0.3, "linear")
    r = np.random.default_rng(3)
    x0 = r.standard_normal((2, 3, 4))
    eps = r.standard_normal((2, 3, 4))
    got = forward_noise(sched, x0, 2, eps)
    ab = sched.alpha_bar[1]
    np.testing.assert_array_equal(got, np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps)


def test_forward_noise_per_sample_steps():
    sched = make_schedule(5, 0.05, 0.3, "linear")
    r = np.random.default_rng(4)
    x0 = r.standard_normal((3, 2, 4))
    eps = r.standard_normal((3, 2, 4))
    got = forward_noise(sched, x0, np.array([1, 3, 5]), eps)
    for b, t in enumerate([1, 3, 5]):
        np.testing.assert_array_equal(got[b], forward_noise(sched, x0[b], t, eps[b]))


def test_forward_noise_monte_carlo_moments():
    sched = make_schedule(50, 1e-4, 0.5, "quadratic")
    r = np.random.default_rng(9)
    n = 100_000
    x0 = np.full(n, 0.7)
    for t in (1, 25, 50):
        ab = sched.alpha_bar_at(t)
        xt = forward_noise(sched, x0, t, r.standard_normal(n))
        assert abs(xt.mean() - np.sqrt(ab) * 0.7) < 0.02
        assert abs(xt.var() - (1 - ab)) < 0.02


def test_forward_noise_validation():
    sched = make_schedule(3, 0.1, 0.3, "linear")
    x0 = np.zeros((2, 2))
    with pytest.raises(DomainError):
        forward_noise(sched, x0, 1, np.zeros((2, 3)))
    with pytest.raises(DomainError):
        forward_noise(sched, x0, 0, np.zeros((2, 2)))
    with pytest.raises(DomainError):
        forward_noise(sched, x0, 4, np.zeros((2, 2)))


# ------------------------------------------------------------- training

def test_zero_predictor_loss_is_unit_variance():
    sched = make_schedule(50, 1e-4, 0.5, "quadratic")
    r = np.random.default_rng(21)
    B, K, L = 64, 4, 20
    x0 = r.standard_normal((B, K, L))
    observed = np.ones((B, K, L))
    cond = (r.random((B, K, L)) < 0.5).astype(float)
    loss = training_step(ZeroPredictor(), sched, x0, observed, cond,
                         np.random.default_rng(5))
    assert abs(float(loss.data) - 1.0) < 0.1


def test_training_step_matches_manual_composition():
    sched = make_schedule(4, 0.05, 0.4, "quadratic")
    model = tiny_denoiser(T=4)
    r = np.random.default_rng(8)
    B, K, L = 3, 2, 8
    x0 = r.standard_normal((B, K, L))
    observed = (r.random((B, K, L)) < 0.9).astype(float)
    cond = observed * (r.random((B, K, L)) < 0.5)
    x0 = np.where(observed > 0, x0, np.nan)   # missing entries arrive as NaN

    loss = training_step(model, sched, x0, observed, cond,
                         np.random.default_rng(33))

    rr = np.random.default_rng(33)            # replay the documented draw order
    t = rr.integers(1, 5, size=B)
    eps = rr.standard_normal((B, K, L))
    x0f = np.where(observed > 0, x0, 0.0)
    ab = sched.alpha_bar[t - 1][:, None, None]
    x_noisy = np.sqrt(ab) * x0f + np.sqrt(1 - ab) * eps
    eps_hat = model(Tensor((1 - cond) * x_noisy), Tensor(cond * x0f),
                    Tensor(cond), t).data
    target = observed * (1 - cond)
    expect = np.sum(((eps_hat - eps) * target) ** 2) / target.sum()
    assert abs(float(loss.data) - expect) < 1e-12
    assert np.isfinite(float(loss.data))


def test_training_step_rejects_empty_target():
    sched = make_schedule(4, 0.05, 0.4, "quadratic")
    x0 = np.zeros((2, 2, 8))
    observed = np.ones_like(x0)
    with pytest.raises(DegenerateBatchError):
        training_step(ZeroPredictor(), sched, x0, observed, observed,
                      np.random.default_rng(0))


def test_training_loss_is_differentiable():
    sched = make_schedule(4, 0.05, 0.4, "quadratic")
    model = tiny_denoiser(T=4)
    r = np.random.default_rng(14)
    x0 = r.standard_normal((2, 2, 8))
    observed = np.ones_like(x0)
    cond = (r.random(x0.shape) < 0.5).astype(float)
    loss = training_step(model, sched, x0, observed, cond,
                         np.random.default_rng(1))
    loss.backward()
    grads = [p.grad for _, p in model.named_parameters()]
    assert any(g is not None and np.any(g != 0) for g in grads)


# -------------------------------------------------------------- sampling

def test_sample_pins_observed_entries_bit_exact():
    sched = make_schedule(5, 0.05, 0.4, "quadratic")
    model = tiny_denoiser(T=5)
    r = np.random.default_rng(2)
    x_obs = r.standard_normal((2, 2, 8))
    cond = (r.random((2, 2, 8)) < 0.5).astype(float)
    x_obs = np.where(cond > 0, x_obs, np.nan)  # unobserved arrives as NaN
    out = sample(model, sched, x_obs, cond, np.random.default_rng(6), n_samples=2)
    assert out.shape == (2, 2, 2, 8)
    assert np.all(np.isfinite(out))
    for s in range(2):
        np.testing.assert_array_equal(out[s][cond == 1], x_obs[cond == 1])
    assert np.max(np.abs(out[0] - out[1])) > 1e-6   # distinct draws


def test_sample_streams_are_independent_of_sample_count():
    sched = make_schedule(5, 0.05, 0.4, "quadratic")
    model = tiny_denoiser(T=5)
    r = np.random.default_rng(12)
    x_obs = r.standard_normal((2, 8))
    cond = (r.random((2, 8)) < 0.5).astype(float)
    one = sample(model, sched, x_obs, cond, np.random.default_rng(7), n_samples=1)
    three = sample(model, sched, x_obs, cond, np.random.default_rng(7), n_samples=3)
    np.testing.assert_array_equal(one[0], three[0])


def test_single_step_chain_matches_hand_composition():
    b = 0.3
    sched = make_schedule(1, b, b, "linear")
    model = AffinePredictor()
    r = np.random.default_rng(17)
    x_obs = r.standard_normal((2, 6))
    cond = (r.random((2, 6)) < 0.5).astype(float)

    got = sample(model, sched, x_obs, cond, np.random.default_rng(11), n_samples=1)[0]

    stream = np.random.default_rng(11).spawn(1)[0]
    free = 1.0 - cond
    xo = np.where(cond > 0, x_obs, 0.0)
    x = free * stream.standard_normal((1, 2, 6))
    eps_hat = 0.25 * (free * x) + 0.5 * xo[None] + (-0.1) * cond[None]
    coef = b / np.sqrt(1.0 - (1.0 - b))       # alpha_bar_1 = 1 - b
    x = (x - coef * eps_hat) / np.sqrt(1.0 - b)
    expect = (cond * xo + free * (free * x))[0]
    np.testing.assert_allclose(got, expect, rtol=0, atol=1e-12)


def test_sample_validation():
    sched = make_schedule(2, 0.1, 0.2, "linear")
    x = np.zeros((2, 4))
    with pytest.raises(DomainError):
        sample(AffinePredictor(), sched, x, np.zeros((2, 5)),
               np.random.default_rng(0))
    with pytest.raises(DomainError):
        sample(AffinePredictor(), sched, x, np.zeros((2, 4)),
               np.random.default_rng(0), n_samples=0)


# --------------------------------------------------------------- impute

def test_impute_summaries():
    sched = make_schedule(3, 0.05, 0.3, "quadratic")
    r = np.random.default_rng(19)
    x_obs = r.standard_normal((2, 6))
    cond = (r.random((2, 6)) < 0.5).astype(float)
    res = impute(AffinePredictor(), sched, x_obs, cond,
                 np.random.default_rng(23), n_samples=7)
    assert res.samples.shape == (7, 2, 6)
    assert res.quantiles.shape == (19, 2, 6)
    np.testing.assert_array_equal(res.mean, res.samples.mean(axis=0))
    np.testing.assert_array_equal(
        res.quantiles, np.quantile(res.samples, QUANTILE_LEVELS, axis=0))
    assert res.levels[9] == 0.5
    np.testing.assert_array_equal(res.median,
                                  np.quantile(res.samples, 0.5, axis=0))
    assert np.all(np.diff(res.quantiles, axis=0) >= 0)


def test_impute_fully_observed_is_a_copy():
    sched = make_schedule(3, 0.05, 0.3, "quadratic")
    x_obs = np.random.default_rng(1).standard_normal((3, 5))
    rng = np.random.default_rng(2)
    before = rng.bit_generator.state["state"]["state"]
    res = impute(AffinePredictor(), sched, x_obs, np.ones_like(x_obs), rng,
                 n_samples=4)
    after = rng.bit_generator.state["state"]["state"]
    assert before == after                     # no draws consumed
    for s in range(4):
        np.testing.assert_array_equal(res.samples[s], x_obs)
    np.testing.assert_array_equal(res.mean, x_obs)
    for q in range(19):
        np.testing.assert_array_equal(res.quantiles[q], x_obs)
