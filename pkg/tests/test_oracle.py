"""Closed-form posterior means and reference integration."""

import numpy as np
import pytest

from gctm import flow_ode as fo
from gctm import oracle


def test_flow_posterior_mean_at_t_one_is_prior_mean():
    spec = oracle.standard_spec(2)
    x = np.random.default_rng(0).standard_normal((8, 2)) * 5
    out = oracle.fm_posterior_mean(x, 1.0, spec)
    np.testing.assert_allclose(out, 0.0, atol=1e-15)


def test_flow_posterior_mean_near_point_mass_data():
    spec = oracle.GaussianSpec(
        np.array([2.0, -1.0]), np.zeros(2), np.full(2, 1e-10), np.ones(2)
    )
    x = np.random.default_rng(1).standard_normal((4, 2)) * 3
    out = oracle.fm_posterior_mean(x, 0.5, spec)
    np.testing.assert_allclose(out, np.tile(spec.mu0, (4, 1)), atol=1e-8)


def test_flow_posterior_mean_standard_case():
    spec = oracle.standard_spec(1)
    out = oracle.fm_posterior_mean(np.array([[1.0]]), 0.5, spec)
    assert out[0, 0] == pytest.approx(1.0, rel=1e-14)


def test_flow_posterior_mean_rejects_time_zero():
    with pytest.raises(ValueError):
        oracle.fm_posterior_mean(np.ones((1, 1)), 0.0, oracle.standard_spec(1))


def test_diffusion_posterior_mean_limits_and_value():
    out = oracle.diffusion_posterior_mean(np.array([[5.0]]), 1e6, np.array([0.7]), np.array([1.3]))
    assert out[0, 0] == pytest.approx(0.7, abs=1e-9)
    out = oracle.diffusion_posterior_mean(np.array([[2.0]]), 1.0, 0.0, 1.0)
    assert out[0, 0] == pytest.approx(1.0)


def test_posterior_means_agree_under_change_of_variables():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        mu0 = rng.normal(size=d)
        var0 = rng.uniform(0.2, 2.0, d)
        spec = oracle.GaussianSpec(mu0, np.zeros(d), var0, np.ones(d))
        t = float(rng.uniform(1e-3, 50.0))
        x = rng.normal(scale=1.0 + t, size=(1, d))
        lhs = oracle.diffusion_posterior_mean(x, t, mu0, var0)
        xbar, tp = fo.ctm_to_gctm(x, t)
        rhs = oracle.fm_posterior_mean(xbar, tp, spec)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    assert worst < 1e-12


def test_velocity_identity_via_both_posterior_means():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        spec = oracle.GaussianSpec(
            rng.normal(size=d),
            rng.normal(size=d),
            rng.uniform(0.2, 2.0, d),
            rng.uniform(0.2, 2.0, d),
        )
        t = float(rng.uniform(1e-3, 1.0))
        x = rng.normal(scale=2.0, size=(1, d))
        e0 = oracle.fm_posterior_mean(x, t, spec)
        e1 = oracle.fm_posterior_mean_x1(x, t, spec)
        worst = max(worst, float(np.abs((e1 - e0) - (x - e0) / t).max()))
    assert worst < 1e-10


def test_reference_trajectory_preserves_matched_gaussian_marginal():
    # equal variances and zero means on both ends keep the marginal law fixed
    rng = np.random.default_rng(4)
    v = 1.7
    spec = oracle.GaussianSpec(np.zeros(1), np.zeros(1), np.array([v]), np.array([v]))
    x1 = spec.sample_x1(100_000, rng)
    _, path = oracle.reference_trajectory(x1, spec, steps=512)
    end_var = float(np.var(path[-1]))
    assert abs(end_var - v) / v < 0.02


def test_reference_trajectory_collapses_to_data_mean_for_tiny_variance():
    spec = oracle.GaussianSpec(
        np.array([1.0, -2.0]), np.zeros(2), np.full(2, 1e-6), np.ones(2)
    )
    rng = np.random.default_rng(5)
    x1 = spec.sample_x1(64, rng)
    _, path = oracle.reference_trajectory(x1, spec, steps=512)
    assert np.abs(path[-1] - spec.mu0).max() < 1e-2


def test_reference_trajectory_richardson_behavior():
    spec = oracle.GaussianSpec(
        np.array([1.5, -0.5]), np.zeros(2), np.array([0.7, 1.3]), np.ones(2)
    )
    rng = np.random.default_rng(6)
    x1 = spec.sample_x1(16, rng)
    ends = {}
    for steps in (256, 512, 1024):
        _, path = oracle.reference_trajectory(x1, spec, steps=steps)
        ends[steps] = path[-1]
    d1 = np.abs(ends[256] - ends[512]).max()
    d2 = np.abs(ends[512] - ends[1024]).max()
    # order-2: each halving shrinks the endpoint delta by a factor near 4
    assert d2 < d1
    assert 2.0 < d1 / d2 < 8.0


def test_reference_trajectory_rejects_coarse_steps():
    with pytest.raises(ValueError):
        oracle.reference_trajectory(np.ones((1, 1)), oracle.standard_spec(1), steps=16)


def test_oracle_jump_matches_reference_endpoint():
    spec = oracle.GaussianSpec(
        np.array([0.5, -0.25]), np.zeros(2), np.array([0.8, 0.5]), np.ones(2)
    )
    stub = oracle.OracleJump(spec, steps=512)
    rng = np.random.default_rng(7)
    x = spec.sample_x1(8, rng)
    _, path = oracle.reference_trajectory(x, spec, steps=4096)
    got = stub.jump(x, 1.0, 0.0)
    assert np.abs(got - path[-1]).max() < 1e-4


def test_oracle_jump_anchor_consistency():
    # jump == (s/t) x + (1 - s/t) anchor by construction
    spec = oracle.standard_spec(2)
    stub = oracle.OracleJump(spec, steps=256)
    rng = np.random.default_rng(8)
    x = rng.standard_normal((4, 2))
    t = np.full(4, 0.8)
    s = np.full(4, 0.3)
    jump = stub.jump(x, t, s)
    anchor = stub.anchor(x, t, s)
    rebuilt = (s / t)[:, None] * x + (1 - s / t)[:, None] * anchor
    np.testing.assert_allclose(rebuilt, jump, rtol=1e-10, atol=1e-12)


def test_gaussian_spec_validation():
    with pytest.raises(ValueError):
        oracle.GaussianSpec(np.zeros(2), np.zeros(2), np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        oracle.GaussianSpec(np.zeros(2), np.zeros(3), np.ones(2), np.ones(3))
