"""Sampling and guided inference on a trained trajectory model: one-step
and grid-walking generation, measurement-guided restoration in three
variants, point-edit translation, and latent-perturbation control.
"""

from dataclasses import dataclass

import numpy as np


def one_step_sample(model, x1_batch):
    """Single-evaluation generation: jump(x1, 1, 0)."""
    x1 = np.atleast_2d(np.asarray(x1_batch, dtype=np.float64))
    return model.jump(x1, 1.0, 0.0)


def multistep_sample(model, x1_batch, grid):
    """Walk the grid: x <- jump(x, t_i, t_{i-1}) for i = N..1; NFE = N."""
    x = np.atleast_2d(np.asarray(x1_batch, dtype=np.float64))
    for i in range(grid.N, 0, -1):
        x = model.jump(x, grid.t[i], grid.t[i - 1])
    return x


@dataclass(frozen=True)
class GuidanceConfig:
    """Settings for measurement-guided restoration.

    ``lam`` is the guidance strength; with ``adaptive`` True the applied
    step is lam / (||residual|| + 1e-8) per row. ``steps`` mirrors grid.N.
    """

    operator: object
    grid: object
    method: str = "gctm"
    lam: float = 1.0
    adaptive: bool = True
    steps: int = 0

    def __post_init__(self):
        if self.method not in ("dps", "cm", "gctm"):
            raise ValueError(f"unknown restoration method {self.method!r}")
        if self.lam <= 0:
            raise ValueError("guidance strength must be positive")
        object.__setattr__(self, "steps", self.grid.N)


def restore(model, measurement, gcfg, rng, n_samples=None, log=None):
    """Measurement-guided generation from noise.

    Per step i = N..1 at time t = t_i: estimate the clean point (anchor
    limit for 'dps', endpoint jump for 'cm', both in parallel for 'gctm'),
    re-noise to t_{i-1} with fresh Gaussian noise around the re-noising
    estimate, then subtract the guidance gradient of ||x1 - H xhat||^2
    taken with respect to the step's input state. Non-finite guidance
    gradients skip the subtraction for the affected rows.
    """
    meas = np.atleast_2d(np.asarray(measurement, dtype=np.float64))
    if n_samples is not None and meas.shape[0] == 1:
        meas = np.repeat(meas, n_samples, axis=0)
    m, d = meas.shape
    op = gcfg.operator
    t_grid = gcfg.grid.t
    x = rng.standard_normal((m, d))
    for i in range(gcfg.grid.N, 0, -1):
        t_i, t_prev = t_grid[i], t_grid[i - 1]
        eps = rng.standard_normal((m, d))
        if gcfg.method == "dps":
            xhat = model.posterior_mean(x, t_i)
            renoise = xhat
            grad = _residual_grad_anchor(model, x, t_i, meas, op)
        elif gcfg.method == "cm":
            xhat = model.jump(x, t_i, 0.0)
            renoise = xhat
            grad = _residual_grad_jump(model, x, t_i, meas, op)
        else:
            renoise = model.posterior_mean(x, t_i)
            xhat = model.jump(x, t_i, 0.0)
            grad = _residual_grad_jump(model, x, t_i, meas, op)
        lam = _effective_lambda(gcfg, meas, xhat, op)
        x_next = (1.0 - t_prev) * renoise + t_prev * eps
        finite = np.all(np.isfinite(grad), axis=1)
        if not np.all(finite) and log is not None:
            log(f"step {i}: skipped guidance on {int((~finite).sum())} rows")
        x_next[finite] -= lam[finite] * grad[finite]
        x = x_next
    return x


def _effective_lambda(gcfg, meas, xhat, op):
    if not gcfg.adaptive:
        return np.full((meas.shape[0], 1), gcfg.lam)
    res = np.linalg.norm(meas - op.apply_deterministic(xhat), axis=1, keepdims=True)
    return gcfg.lam / (res + 1e-8)


def _residual_cotangent(meas, xhat, op):
    # d/dxhat ||x1 - H xhat||^2 = -2 H^T (x1 - H xhat)
    return -2.0 * op.adjoint(meas - op.apply_deterministic(xhat))


def _residual_grad_anchor(model, x, t, meas, op):
    xhat = model.posterior_mean(x, t)
    t_arr = np.full(x.shape[0], t)
    return model.anchor_vjp_x(x, t_arr, t_arr, _residual_cotangent(meas, xhat, op))


def _residual_grad_jump(model, x, t, meas, op):
    xhat = model.jump(x, t, 0.0)
    t_arr = np.full(x.shape[0], t)
    s_arr = np.zeros(x.shape[0])
    return model.jump_vjp_x(x, t_arr, s_arr, _residual_cotangent(meas, xhat, op))


def edit(model, x0, x1, t_edit, edit_fn):
    """Anchor an edited point on the interpolation path and jump home:
    returns jump((1-t) Edit(x0) + t x1, t_edit, 0)."""
    if not 0.0 < t_edit <= 1.0:
        raise ValueError("edit time must lie in (0, 1]")
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    edited = np.atleast_2d(np.asarray(edit_fn(x0), dtype=np.float64))
    x_t = (1.0 - t_edit) * edited + t_edit * x1
    return model.jump(x_t, t_edit, 0.0)


EDIT_T_SUPERVISED = 0.95
EDIT_T_INDEPENDENT = 0.4


def latent_manip(model, x1, epsilon, gamma):
    """One-step generation with a controlled latent offset: jump(x1 + gamma*eps, 1, 0)."""
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    eps = np.broadcast_to(np.asarray(epsilon, dtype=np.float64), x1.shape)
    return model.jump(x1 + gamma * eps, 1.0, 0.0)
