"""Velocity, jump wrapper, grid integration, and the change of variables."""

import numpy as np
import pytest

from gctm import flow_ode as fo
from gctm import oracle
from gctm.schedule import edm_time_grid


class ConstantMeanField:
    def __init__(self, value):
        self.value = value

    def posterior_mean(self, x, t):
        return np.full_like(x, self.value) if np.isscalar(self.value) else self.value


class IdentityMeanField:
    def posterior_mean(self, x, t):
        return x


def test_velocity_zero_when_mean_equals_state():
    x = np.random.default_rng(0).standard_normal((4, 2))
    v = fo.velocity(x, 0.5, IdentityMeanField())
    np.testing.assert_array_equal(v, np.zeros_like(x))


def test_velocity_formula_with_zero_mean():
    x = np.array([[3.0, -2.0]])
    v = fo.velocity(x, 1.0, ConstantMeanField(0.0))
    np.testing.assert_array_equal(v, x)


def test_velocity_gaussian_case_zero():
    # standard normals both sides, t = 1/2, x = 1: posterior mean equals x
    spec = oracle.standard_spec(1)
    field = oracle.GaussianFlowField(spec)
    v = fo.velocity(np.array([[1.0]]), 0.5, field)
    np.testing.assert_allclose(v, 0.0, atol=1e-15)


def test_velocity_rejects_time_zero():
    with pytest.raises(ValueError):
        fo.velocity(np.ones((1, 1)), 0.0, IdentityMeanField())


def test_jump_boundary_identities():
    x = np.array([[2.0, -1.0]])
    g = np.array([[0.5, 0.5]])
    np.testing.assert_array_equal(fo.solution_jump(x, 0.7, 0.7, g), x)
    np.testing.assert_array_equal(fo.solution_jump(x, 0.7, 0.0, g), g)


def test_jump_arithmetic():
    out = fo.solution_jump(np.array([[2.0]]), 1.0, 0.25, np.array([[0.0]]))
    assert out[0, 0] == pytest.approx(0.5)


def test_jump_rejects_bad_times():
    x = np.ones((1, 1))
    with pytest.raises(ValueError):
        fo.solution_jump(x, 0.0, 0.0, x)
    with pytest.raises(ValueError):
        fo.solution_jump(x, 0.5, 0.7, x)


def test_integrate_noop_when_endpoints_equal():
    grid = edm_time_grid(4)
    x = np.random.default_rng(0).standard_normal((3, 2))
    req = fo.TraversalRequest(x, grid.t[2], grid.t[2], grid)
    np.testing.assert_array_equal(fo.integrate(req, IdentityMeanField()), x)


def test_single_euler_step_linear_field():
    # velocity(x, t) = x at t = 1 (zero posterior mean); explicit Euler: 1 - h
    h = 0.25
    out = fo.integrate_times(
        np.array([[1.0]]), np.array([1.0, 1.0 - h]), ConstantMeanField(0.0), solver="euler"
    )
    assert out[0, 0] == pytest.approx(1.0 - h)


def test_integrate_requires_decreasing_times():
    with pytest.raises(ValueError):
        fo.integrate_times(np.ones((1, 1)), np.array([0.5, 0.7]), IdentityMeanField())


def test_integrate_rejects_off_grid_times():
    grid = edm_time_grid(4)
    req = fo.TraversalRequest(np.ones((1, 2)), 0.123456, 0.0, grid)
    with pytest.raises(ValueError):
        fo.integrate(req, IdentityMeanField())


def test_heun_order_on_gaussian_oracle():
    rng = np.random.default_rng(1)
    spec = oracle.GaussianSpec(
        np.array([1.5, -0.5]), np.zeros(2), np.array([0.7, 1.3]), np.ones(2)
    )
    field = oracle.GaussianFlowField(spec)
    x1 = spec.sample_x1(32, rng)
    _, ref = oracle.reference_trajectory(x1, spec, steps=4096)
    errs = []
    ns = [8, 16, 32, 64]
    for n in ns:
        end = fo.integrate_times(x1, np.linspace(1.0, 0.0, n + 1), field)
        errs.append(np.abs(end - ref[-1]).max())
    slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert slope >= 1.9


def test_semigroup_composition():
    rng = np.random.default_rng(2)
    spec = oracle.GaussianSpec(
        np.array([0.5, -1.0]), np.zeros(2), np.array([0.5, 1.5]), np.ones(2)
    )
    field = oracle.GaussianFlowField(spec)
    x = spec.sample_x1(16, rng)
    times = np.linspace(1.0, 0.2, 17)
    mid = 8
    one = fo.integrate_times(x, times, field)
    two = fo.integrate_times(fo.integrate_times(x, times[: mid + 1], field), times[mid:], field)
    ref = oracle.reference_endpoint(x, 1.0, 0.2, spec, steps=4096)
    trunc = np.abs(one - ref).max()
    assert np.abs(two - one).max() <= 2.0 * trunc + 1e-12


def test_change_of_variables_values():
    xbar, tp = fo.ctm_to_gctm(np.array([[2.0]]), 1.0)
    assert tp == pytest.approx(0.5)
    assert xbar[0, 0] == pytest.approx(1.0)
    _, tp80 = fo.ctm_to_gctm(np.array([[1.0]]), 80.0)
    assert tp80 == pytest.approx(80.0 / 81.0, rel=1e-15)


def test_change_of_variables_round_trip():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 2))
    t = 7.25
    xbar, tp = fo.ctm_to_gctm(x, t)
    back_x, back_t = fo.gctm_to_ctm(xbar, tp)
    np.testing.assert_allclose(back_x, x, rtol=1e-14)
    assert back_t == pytest.approx(t, rel=1e-14)


def test_inverse_rejects_unit_time():
    with pytest.raises(ValueError):
        fo.gctm_to_ctm(np.ones((1, 1)), 1.0)


def test_pfode_velocity_trivials():
    x = np.random.default_rng(4).standard_normal((3, 2))
    v = fo.pfode_velocity(x, 2.0, lambda xx, tt: xx)
    np.testing.assert_array_equal(v, np.zeros_like(x))
    # standard normal data at t = 1: posterior mean x/2, velocity x/2
    v = fo.pfode_velocity(x, 1.0, lambda xx, tt: oracle.diffusion_posterior_mean(xx, tt, 0.0, 1.0))
    np.testing.assert_allclose(v, x / 2.0, rtol=1e-14)


def test_pfode_velocity_matches_flow_velocity_after_change_of_variables():
    # scale-covariant check of the two parametrizations on Gaussian data
    rng = np.random.default_rng(5)
    mu0 = np.array([0.3, -0.8])
    var0 = np.array([0.6, 1.4])
    spec = oracle.GaussianSpec(mu0, np.zeros(2), var0, np.ones(2))
    for _ in range(100):
        t = float(rng.uniform(0.05, 20.0))
        x = rng.normal(scale=1.0 + t, size=(1, 2))
        pf = fo.pfode_velocity(
            x, t, lambda xx, tt: oracle.diffusion_posterior_mean(xx, tt, mu0, var0)
        )
        xbar, tp = fo.ctm_to_gctm(x, t)
        fv = fo.velocity(xbar, tp, oracle.GaussianFlowField(spec))
        # chain rule: d xbar/dt' = [pf/(1+t) - x/(1+t)^2] * (1+t)^2
        want = pf * (1.0 + t) - x
        np.testing.assert_allclose(fv, want, rtol=1e-9, atol=1e-12)
