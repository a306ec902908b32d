"""Sampling, guided restoration, editing, and latent control."""

import numpy as np
import pytest

from gctm import inference as inf
from gctm import nn, oracle
from gctm.couplings import CorruptionOperator
from gctm.model import TrajectoryModel
from gctm.schedule import TimeGrid, edm_time_grid


def _zero_model(dim=2):
    p = nn.init_params(dim, hidden=(8, 8), seed=0)
    p.weights[:] = 0.0
    p.ema_weights[:] = 0.0
    return TrajectoryModel(p)


def _random_model(dim=2, seed=3):
    p = nn.init_params(dim, hidden=(16, 16), seed=seed)
    return TrajectoryModel(p)


@pytest.fixture(scope="module")
def gauss_stub():
    spec = oracle.GaussianSpec(
        np.array([0.5, -0.25]), np.zeros(2), np.array([0.8, 0.5]), np.ones(2)
    )
    return spec, oracle.OracleJump(spec, steps=512)


def test_one_step_zero_network_outputs_zero():
    model = _zero_model()
    out = inf.one_step_sample(model, np.random.default_rng(0).standard_normal((6, 2)))
    np.testing.assert_array_equal(out, np.zeros_like(out))


def test_one_step_deterministic():
    model = _random_model()
    x1 = np.random.default_rng(1).standard_normal((5, 2))
    assert np.array_equal(inf.one_step_sample(model, x1), inf.one_step_sample(model, x1))


def test_one_step_matches_reference_on_oracle_stub(gauss_stub):
    spec, stub = gauss_stub
    rng = np.random.default_rng(2)
    x1 = spec.sample_x1(8, rng)
    _, path = oracle.reference_trajectory(x1, spec, steps=4096)
    out = inf.one_step_sample(stub, x1)
    assert np.abs(out - path[-1]).max() < 1e-3


def test_multistep_single_interval_equals_one_step():
    model = _random_model()
    x1 = np.random.default_rng(3).standard_normal((4, 2))
    grid1 = edm_time_grid(1)
    np.testing.assert_array_equal(
        inf.multistep_sample(model, x1, grid1), inf.one_step_sample(model, x1)
    )
    # an explicit {0, 1} grid is the same thing
    grid01 = TimeGrid(1, 0.002, 80.0, 7.0, np.array([0.0, 1.0]))
    np.testing.assert_array_equal(
        inf.multistep_sample(model, x1, grid01), inf.one_step_sample(model, x1)
    )


def test_multistep_beats_one_step_on_oracle_stub(gauss_stub):
    spec, stub = gauss_stub
    rng = np.random.default_rng(4)
    x1 = spec.sample_x1(16, rng)
    _, path = oracle.reference_trajectory(x1, spec, steps=4096)
    ref = path[-1]
    e1 = np.linalg.norm(inf.one_step_sample(stub, x1) - ref, axis=1).mean()
    e32 = np.linalg.norm(inf.multistep_sample(stub, x1, edm_time_grid(32)) - ref, axis=1).mean()
    assert e32 <= e1 + 1e-9


def test_jump_identity_structural():
    model = _random_model()
    rng = np.random.default_rng(5)
    x = rng.normal(scale=3.0, size=(10_000, 2))
    t = rng.uniform(0.0, 1.0, 10_000)
    out = model.jump(x, t, t)
    assert np.array_equal(out, x)


def test_restore_lambda_zero_ignores_measurement():
    model = _random_model()
    op = CorruptionOperator(kind="coordinate_mask", mask_indices=(1,))
    grid = edm_time_grid(8)
    # lam tiny stands in for "no guidance"; identical noise must give
    # measurement-independent outputs
    gcfg = inf.GuidanceConfig(operator=op, grid=grid, method="gctm", lam=1e-300, adaptive=False)
    m1 = np.array([[2.0, 0.0]])
    m2 = np.array([[-5.0, 0.0]])
    a = inf.restore(model, m1, gcfg, np.random.default_rng(11), n_samples=4)
    b = inf.restore(model, m2, gcfg, np.random.default_rng(11), n_samples=4)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_restore_deterministic_given_seed():
    model = _random_model()
    op = CorruptionOperator()
    gcfg = inf.GuidanceConfig(operator=op, grid=edm_time_grid(4), method="dps", lam=0.5)
    meas = np.array([[0.5, -0.5]])
    a = inf.restore(model, meas, gcfg, np.random.default_rng(7), n_samples=3)
    b = inf.restore(model, meas, gcfg, np.random.default_rng(7), n_samples=3)
    assert np.array_equal(a, b)


def test_restore_dps_and_gctm_agree_when_anchor_ignores_s():
    # zero network: anchor(x,t,t) == anchor(x,t,0) == 0, so the re-noising
    # statistics coincide and identical seeds give identical chains
    model = _zero_model()
    op = CorruptionOperator(kind="coordinate_mask", mask_indices=(1,))
    gcfg_d = inf.GuidanceConfig(operator=op, grid=edm_time_grid(6), method="dps", lam=1.0)
    gcfg_g = inf.GuidanceConfig(operator=op, grid=edm_time_grid(6), method="gctm", lam=1.0)
    meas = np.array([[1.0, 0.0]])
    a = inf.restore(model, meas, gcfg_d, np.random.default_rng(13), n_samples=5)
    b = inf.restore(model, meas, gcfg_g, np.random.default_rng(13), n_samples=5)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_guidance_config_validation():
    op = CorruptionOperator()
    grid = edm_time_grid(4)
    with pytest.raises(ValueError):
        inf.GuidanceConfig(operator=op, grid=grid, method="nope")
    with pytest.raises(ValueError):
        inf.GuidanceConfig(operator=op, grid=grid, lam=0.0)
    assert inf.GuidanceConfig(operator=op, grid=grid).steps == 4


def test_edit_at_time_one_ignores_the_edit():
    model = _random_model()
    rng = np.random.default_rng(6)
    x0 = rng.standard_normal((4, 2))
    x1 = rng.standard_normal((4, 2))
    a = inf.edit(model, x0, x1, 1.0, lambda p: p + 100.0)
    b = inf.edit(model, x0, x1, 1.0, lambda p: p)
    np.testing.assert_array_equal(a, b)


def test_edit_time_defaults():
    assert inf.EDIT_T_SUPERVISED == 0.95
    assert inf.EDIT_T_INDEPENDENT == 0.4


def test_edit_rejects_bad_time():
    model = _zero_model()
    x = np.zeros((1, 2))
    with pytest.raises(ValueError):
        inf.edit(model, x, x, 0.0, lambda p: p)


def test_latent_manip_gamma_zero_equals_one_step():
    model = _random_model()
    rng = np.random.default_rng(8)
    x1 = rng.standard_normal((6, 2))
    eps = rng.standard_normal((6, 2))
    np.testing.assert_array_equal(
        inf.latent_manip(model, x1, eps, 0.0), inf.one_step_sample(model, x1)
    )


def test_latent_manip_distinct_offsets_differ():
    model = _random_model()
    rng = np.random.default_rng(9)
    x1 = rng.standard_normal((1, 2))
    e1 = rng.standard_normal((1, 2))
    e2 = rng.standard_normal((1, 2))
    a = inf.latent_manip(model, x1, e1, 0.05)
    b = inf.latent_manip(model, x1, e2, 0.05)
    assert np.linalg.norm(a - b) > 0.0


def test_latent_manip_continuous_in_gamma():
    model = _random_model()
    rng = np.random.default_rng(10)
    x1 = rng.standard_normal((1, 2))
    eps = rng.standard_normal((1, 2))
    # empirical Lipschitz bound of the jump map near x1
    probes = x1 + 0.05 * rng.standard_normal((64, 2))
    outs = model.jump(probes, 1.0, 0.0)
    base = model.jump(x1, 1.0, 0.0)
    lip = max(
        np.linalg.norm(o - base) / np.linalg.norm(p - x1) for o, p in zip(outs, probes)
    )
    d = 1e-3
    slope = (
        np.linalg.norm(
            inf.latent_manip(model, x1, eps, 0.02 + d) - inf.latent_manip(model, x1, eps, 0.02)
        )
        / d
    )
    assert slope <= 2.0 * lip * np.linalg.norm(eps) + 1e-6
