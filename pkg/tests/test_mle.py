import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hfnoise.core import ReturnSeries
from hfnoise.errors import DegenerateInput, InsufficientData, MalformedInput
from hfnoise.mle import (Ma1Params, MleFitOptions, avar_normal, avar_true, cum4_from_moments,
                         fit_mle, from_ma1, loglik, profile_gamma2, profile_loglik, to_ma1)

from oracles import dense_ma1_loglik, recursive_ma1_loglik


def ma1_sample(n, sigma2, a2, delta, rng):
    x = np.cumsum(rng.normal(0, math.sqrt(sigma2 * delta), n + 1))
    y = x + rng.normal(0, math.sqrt(a2), n + 1)
    return ReturnSeries.regular(np.diff(y), delta)


def test_to_ma1_no_noise():
    p = to_ma1(5.0, 0.0, 1.0)
    assert p.gamma2 == 5.0 and p.eta == 0.0


def test_to_ma1_worked_example():
    p = to_ma1(2.0, 1.0, 1.0)
    assert p.eta == pytest.approx(-(2 - math.sqrt(3)), rel=1e-12)
    assert p.gamma2 == pytest.approx(2 + math.sqrt(3), rel=1e-12)
    assert p.gamma2 * (1 + p.eta**2) == pytest.approx(4.0, rel=1e-12)
    assert p.gamma2 * p.eta == pytest.approx(-1.0, rel=1e-12)


def test_to_ma1_degenerate():
    with pytest.raises(DegenerateInput):
        to_ma1(0.0, 0.0, 1.0)
    with pytest.raises(DegenerateInput):
        to_ma1(0.0, 1.0, 1.0)


def test_from_ma1_examples():
    s2, a2 = from_ma1(Ma1Params(2 + math.sqrt(3), -(2 - math.sqrt(3))), 1.0)
    assert s2 == pytest.approx(2.0, rel=1e-12) and a2 == pytest.approx(1.0, rel=1e-12)
    s2, a2 = from_ma1(Ma1Params(3.0, 0.0), 0.5)
    assert a2 == 0.0 and s2 == 6.0
    s2, a2 = from_ma1(Ma1Params(2.0, -0.5), 1.0)
    assert a2 == 1.0 and s2 == pytest.approx(0.5)


@settings(max_examples=200, deadline=None)
@given(s=st.floats(1e-9, 10.0), a2=st.floats(0.0, 10.0), delta=st.floats(1e-7, 1.0))
def test_ma1_roundtrip(s, a2, delta):
    sigma2 = s / delta
    back = from_ma1(to_ma1(sigma2, a2, delta), delta)
    assert back[0] == pytest.approx(sigma2, rel=1e-10)
    assert back[1] == pytest.approx(a2, rel=1e-10, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(g2=st.floats(1e-6, 10.0), eta=st.floats(-0.999, 0.0))
def test_ma1_roundtrip_inverse(g2, eta):
    sigma2, a2 = from_ma1(Ma1Params(g2, eta), 1.0)
    if a2 == 0 and sigma2 == 0:
        return
    p = to_ma1(sigma2, a2, 1.0)
    assert p.gamma2 == pytest.approx(g2, rel=1e-9)
    assert p.eta == pytest.approx(eta, rel=1e-9, abs=1e-12)


def test_loglik_single_observation():
    r, g2, eta = 0.013, 2e-4, -0.4
    v = g2 * (1 + eta**2)
    expect = -0.5 * math.log(2 * math.pi * v) - r * r / (2 * v)
    assert loglik([r], Ma1Params(g2, eta)) == pytest.approx(expect, rel=1e-13)


def test_loglik_iid_case():
    R = np.array([0.1, -0.3, 0.2, 0.05])
    g2 = 0.04
    expect = float(np.sum(-0.5 * np.log(2 * np.pi * g2) - R**2 / (2 * g2)))
    assert loglik(R, Ma1Params(g2, 0.0)) == pytest.approx(expect, rel=1e-13)


def test_loglik_three_point_dense():
    R = [0.01, -0.02, 0.015]
    assert loglik(R, Ma1Params(1e-4, -0.3)) == pytest.approx(
        dense_ma1_loglik(R, 1e-4, -0.3), rel=1e-12)


def test_loglik_matches_elementwise_recursion():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(1, 3000))
        eta = -rng.uniform(0, 0.9999)
        R = rng.normal(size=n)
        assert loglik(R, Ma1Params(1.3, eta)) == pytest.approx(
            recursive_ma1_loglik(R, 1.3, eta), rel=1e-10)


def test_loglik_rejects_nonfinite():
    with pytest.raises(MalformedInput):
        loglik([0.1, np.inf], Ma1Params(1.0, -0.1))


def test_profile_gamma2_cases():
    R = np.array([0.2, -0.1, 0.3])
    assert profile_gamma2(R, 0.0) == pytest.approx(np.mean(R**2))
    assert profile_gamma2([0.5], -0.3) == pytest.approx(0.25 / 1.09)


def test_profile_gamma2_grid_oracle():
    rng = np.random.default_rng(11)
    R = rng.normal(size=50)
    g = profile_gamma2(R, -0.4)
    grid = g * np.linspace(0.9, 1.1, 20001)
    vals = [loglik(R, Ma1Params(x, -0.4)) for x in grid]
    assert grid[int(np.argmax(vals))] == pytest.approx(g, rel=1e-5)
    assert profile_loglik(R, -0.4) == pytest.approx(loglik(R, Ma1Params(g, -0.4)), rel=1e-12)


def test_fit_mle_recovers_parameters():
    rng = np.random.default_rng(5)
    delta = 1 / 23_400 / 252
    r = ma1_sample(100_000, 0.1, 1e-6, delta, rng)
    e = fit_mle(r)
    assert e.converged and e.estimator_tag == "MLE"
    assert e.a2 == pytest.approx(1e-6, rel=0.03)
    assert e.sigma2 == pytest.approx(0.1, rel=0.1)
    assert 0 <= e.nsr <= 1
    assert np.allclose(e.avar, e.avar.T)


def test_fit_mle_no_noise_data():
    rng = np.random.default_rng(8)
    r = ReturnSeries.regular(rng.normal(0, 0.01, 20_000), 1.0)
    e = fit_mle(r)
    assert e.a2 < 1e-6
    assert e.sigma2 == pytest.approx(1e-4, rel=0.03)


def test_fit_mle_reversal_invariance():
    rng = np.random.default_rng(9)
    r = ma1_sample(2000, 0.1, 1e-6, 1e-6, rng)
    e1 = fit_mle(r)
    e2 = fit_mle(ReturnSeries(r.returns[::-1].copy(), r.gaps[::-1].copy()))
    assert e1.a2 == pytest.approx(e2.a2, rel=1e-7)
    assert e1.sigma2 == pytest.approx(e2.sigma2, rel=1e-7)


def test_fit_mle_local_max_certificate():
    rng = np.random.default_rng(10)
    r = ma1_sample(3000, 0.1, 1e-6, 1e-6, rng)
    opts = MleFitOptions()
    e = fit_mle(r, opts)
    eta = e.diagnostics["eta"]
    best = profile_loglik(r, eta)
    for d in (opts.eta_tol, -opts.eta_tol):
        if -1 < eta + d <= 0:
            assert best >= profile_loglik(r, eta + d) - 1e-9 * abs(best)


def test_fit_mle_consistency():
    rng = np.random.default_rng(12)
    delta = 1e-6
    rmse = []
    for n in (1_000, 10_000, 100_000):
        errs = [fit_mle(ma1_sample(n, 0.1, 1e-6, delta, rng)).a2 - 1e-6 for _ in range(8)]
        rmse.append(math.sqrt(np.mean(np.square(errs))))
    assert rmse[0] > rmse[1] > rmse[2]


def test_fit_mle_errors():
    with pytest.raises(InsufficientData):
        fit_mle(ReturnSeries.regular(np.ones(5), 1.0))
    with pytest.raises(DegenerateInput):
        fit_mle(ReturnSeries.regular(np.zeros(50), 1.0))


def test_avar_normal_no_noise():
    sigma2, delta = 0.2, 0.01
    out = avar_normal(sigma2, 0.0, delta)
    assert out[0, 0] == pytest.approx(6 * sigma2**2 * delta, rel=1e-12)


def test_avar_normal_no_signal():
    a2, delta = 1e-6, 0.5
    out = avar_normal(0.0, a2, delta)
    assert out[1, 1] == pytest.approx(0.5 * delta * 2 * a2 * 2 * a2, rel=1e-12)
    assert out[0, 1] == 0.0


@settings(max_examples=100, deadline=None)
@given(s2=st.floats(1e-4, 1.0), a2=st.floats(0.0, 1e-4), d=st.floats(1e-8, 1e-3))
def test_avar_psd(s2, a2, d):
    v = avar_normal(s2, a2, d)
    assert np.array_equal(v, v.T)
    assert v[0, 0] >= 0 and v[1, 1] >= 0
    assert np.linalg.eigvalsh(v).min() >= -1e-12 * np.abs(v).max()


def test_avar_true_shift():
    base = avar_normal(0.1, 1e-6, 1e-5)
    assert np.array_equal(avar_true(0.1, 1e-6, 1e-5, 0.0), base)
    diff = avar_true(0.1, 1e-6, 1e-5, 3e-12) - base
    np.testing.assert_allclose(diff, [[0, 0], [0, 3e-12 * 1e-5]], rtol=1e-12, atol=0)
    a = 1e-3
    reduced = avar_true(0.1, a * a, 1e-5, cum4_from_moments(a * a, a**4))
    assert base[1, 1] - reduced[1, 1] == pytest.approx(2 * a**4 * 1e-5, rel=1e-9)


def test_cum4_examples():
    assert cum4_from_moments(2.0, 12.0) == 0.0
    a, b = 0.3, 1.7
    assert cum4_from_moments(a * a, a**4) == pytest.approx(-2 * a**4)
    assert cum4_from_moments(b * b / 3, b**4 / 5) == pytest.approx(-2 * b**4 / 15)
    with pytest.raises(MalformedInput):
        cum4_from_moments(1.0, 0.5)
