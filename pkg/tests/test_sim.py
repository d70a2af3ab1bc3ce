import math
from dataclasses import replace

import numpy as np
import pytest

from hfnoise.core import log_returns
from hfnoise.sim import (PathStreams, SimConfig, observe_with_noise, sample_times, simulate_path,
                         simulate_sv, simulate_svj, stationary_v0)
from hfnoise.errors import MalformedInput


def test_sample_times_properties():
    g = np.random.default_rng(0)
    t = sample_times(1.0, 1 / 252, rng=g)
    assert t[0] == 0.0 and np.all(np.diff(t) > 0) and t[-1] <= 23_400


def test_sample_times_mean_count():
    counts = [len(sample_times(1.0, 1 / 252, rng=PathStreams(1, 0, i).rng("times"))) - 1
              for i in range(1000)]
    assert np.mean(counts) == pytest.approx(23_400, rel=0.02)


def test_sample_times_huge_interval():
    t = sample_times(1e9, 1 / 252, rng=np.random.default_rng(1))
    assert len(t) == 1


def test_sample_times_deterministic():
    a = sample_times(5.0, 1 / 252, rng=PathStreams(3, 1, 2).rng("times"))
    b = sample_times(5.0, 1 / 252, rng=PathStreams(3, 1, 2).rng("times"))
    assert np.array_equal(a, b)
    with pytest.raises(MalformedInput):
        sample_times(0.0, 1 / 252)


def test_constant_variance_brownian():
    cfg = SimConfig(s=0.0, v0=0.1, a=0.0, delta_bar_seconds=1.0)
    pooled, gaps = [], []
    for i in range(45):
        p = simulate_path(cfg, 0, i)
        assert np.all(p.v_path == 0.1)
        r = log_returns(p.ticks)
        pooled.append(r.returns)
        gaps.append(r.gaps)
    z = np.concatenate(pooled) ** 2 / np.concatenate(gaps)
    assert len(z) > 1e6
    assert np.mean(z) == pytest.approx(0.1, rel=0.03)


def test_stationary_v0_moments():
    cfg = SimConfig()
    g = np.random.default_rng(2)
    v = np.array([stationary_v0(cfg, g) for _ in range(100_000)])
    assert np.mean(v) == pytest.approx(0.1, rel=0.01)
    assert np.var(v) == pytest.approx(0.1 * 0.25 / 10, rel=0.05)


def test_variance_nonnegative_and_qv():
    cfg = SimConfig(s=1.5, delta_bar_seconds=30.0)
    for i in range(20):
        p = simulate_path(cfg, 0, i)
        assert np.all(p.v_path >= 0)
        assert p.realized_qv >= 0
        assert np.all(np.diff(p.qv_cum) >= 0)


def test_noise_overlay():
    x = np.zeros(1_000_000)
    g = np.random.default_rng(3)
    assert np.array_equal(observe_with_noise(x, 0.0, g), x)
    y = observe_with_noise(x, 1e-3, np.random.default_rng(4))
    assert np.var(y) == pytest.approx(1e-6, rel=0.01)
    y2 = observe_with_noise(x, 1e-3, np.random.default_rng(4))
    assert np.array_equal(y, y2)


def test_observed_equals_truth_plus_noise():
    p = simulate_path(SimConfig(a=0.0), 0, 0)
    assert np.array_equal(p.ticks.log_prices, p.x_true)


def test_no_jump_reduction():
    cfg = replace(SimConfig(delta_bar_seconds=10.0), lam=0.0)
    times = sample_times(10.0, 1 / 252, rng=np.random.default_rng(5))
    a = simulate_svj(cfg, times, PathStreams(9, 0, 0))
    b = simulate_sv(replace(cfg, lam=50.0), times, PathStreams(9, 0, 0))
    assert np.array_equal(a.x_true, b.x_true) and np.array_equal(a.v_path, b.v_path)


def test_jump_counts():
    cfg = SimConfig(lam=252.0, delta_bar_seconds=300.0)
    counts = [len(simulate_path(cfg, 0, i).jump_times_x) for i in range(10_000)]
    assert np.mean(counts) == pytest.approx(1.0, rel=0.05)


def test_jumps_enter_price_not_qv():
    cfg = SimConfig(lam=0.0, a=0.0, delta_bar_seconds=10.0, seed=4)
    base = simulate_path(cfg, 0, 1)
    jumped = simulate_path(replace(cfg, lam=2000.0, jump_v_logmean=-50.0), 0, 1)
    assert len(jumped.jump_times_x) > 0
    assert np.allclose(jumped.v_path, base.v_path, rtol=1e-12)
    assert jumped.realized_qv == pytest.approx(base.realized_qv, rel=1e-9)
    assert not np.array_equal(jumped.x_true, base.x_true)


def test_path_determinism_independent_of_order():
    cfg = SimConfig(delta_bar_seconds=30.0, lam=52.0, seed=77)
    forward = [simulate_path(cfg, 2, i).ticks for i in range(5)]
    backward = [simulate_path(cfg, 2, i).ticks for i in reversed(range(5))][::-1]
    assert all(a == b for a, b in zip(forward, backward))


def test_config_validation():
    with pytest.raises(MalformedInput):
        SimConfig(kappa=0.0)
    with pytest.raises(MalformedInput):
        SimConfig(a=-1.0)
