"""Closed-form posterior means and reference trajectories for diagonal
Gaussian endpoints under the independent coupling.

These are the ground truth for the identity checks, the solver-order tests,
and the regression-convergence tests: everything here is computable without
a trained network.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianSpec:
    """Diagonal-Gaussian endpoint pair; closed forms require independence."""

    mu0: np.ndarray
    mu1: np.ndarray
    var0: np.ndarray
    var1: np.ndarray

    def __post_init__(self):
        for name in ("mu0", "mu1", "var0", "var1"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        if not (self.mu0.shape == self.mu1.shape == self.var0.shape == self.var1.shape):
            raise ValueError("all fields must share one dimension")
        if np.any(self.var0 <= 0) or np.any(self.var1 <= 0):
            raise ValueError("variances must be strictly positive")

    @property
    def dim(self):
        return self.mu0.shape[0]

    def sample_x0(self, n, rng):
        return self.mu0 + np.sqrt(self.var0) * rng.standard_normal((n, self.dim))

    def sample_x1(self, n, rng):
        return self.mu1 + np.sqrt(self.var1) * rng.standard_normal((n, self.dim))


def standard_spec(dim=1):
    """Standard normals on both ends."""
    z = np.zeros(dim)
    o = np.ones(dim)
    return GaussianSpec(z, z, o, o)


def fm_posterior_mean(x, t, spec):
    """E[x0 | x_t = x] along the linear interpolation path, per coordinate:

        m_t = (1-t) mu0 + t mu1,  v_t = (1-t)^2 var0 + t^2 var1,
        E[x0 | x] = mu0 + (1-t) var0 / v_t * (x - m_t).
    """
    t = float(t)
    if not 0.0 < t <= 1.0:
        raise ValueError("posterior mean defined for t in (0, 1]")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mt = (1.0 - t) * spec.mu0 + t * spec.mu1
    vt = (1.0 - t) ** 2 * spec.var0 + t**2 * spec.var1
    return spec.mu0 + (1.0 - t) * spec.var0 / vt * (x - mt)


def fm_posterior_mean_x1(x, t, spec):
    """E[x1 | x_t = x]; companion used by the velocity-identity check."""
    t = float(t)
    if not 0.0 < t <= 1.0:
        raise ValueError("posterior mean defined for t in (0, 1]")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mt = (1.0 - t) * spec.mu0 + t * spec.mu1
    vt = (1.0 - t) ** 2 * spec.var0 + t**2 * spec.var1
    return spec.mu1 + t * spec.var1 / vt * (x - mt)


def diffusion_posterior_mean(x, t, mu0, var0):
    """E[x0 | x_t = x] under the variance-exploding kernel N(x0, t^2 I)."""
    t = float(t)
    if t <= 0:
        raise ValueError("requires t > 0")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=np.float64))
    var0 = np.atleast_1d(np.asarray(var0, dtype=np.float64))
    return mu0 + var0 / (var0 + t * t) * (x - mu0)


class GaussianFlowField:
    """Velocity field of the interpolation ODE backed by the closed form."""

    def __init__(self, spec):
        self.spec = spec

    def posterior_mean(self, x, t):
        return fm_posterior_mean(x, t, self.spec)


class GaussianDiffusionField:
    """Velocity field of the noise-scale ODE backed by the closed form."""

    def __init__(self, mu0, var0):
        self.mu0 = mu0
        self.var0 = var0

    def posterior_mean(self, x, t):
        return diffusion_posterior_mean(x, t, self.mu0, self.var0)


def reference_trajectory(x1_batch, spec, steps=4096):
    """Fine uniform Heun integration of the flow ODE from t=1 to t=0.

    Returns (times, path) where path[k] is the state at times[k]; the final
    hop into t=0 applies the exact posterior mean at the smallest positive
    time. path[-1] is the endpoint used as the test baseline.
    """
    if steps < 64:
        raise ValueError("reference integration needs steps >= 64")
    from .flow_ode import integrate_times

    times = np.linspace(1.0, 0.0, steps + 1)
    field = GaussianFlowField(spec)
    path = integrate_times(np.atleast_2d(x1_batch), times, field, keep_path=True)
    return times, path


def reference_endpoint(x_batch, t_from, t_to, spec, steps=4096):
    """Fine-step Heun solution map from t_from down to t_to."""
    from .flow_ode import integrate_times

    if t_to > t_from:
        raise ValueError("reference integration runs backward in time")
    times = np.linspace(t_from, t_to, steps + 1)
    field = GaussianFlowField(spec)
    return integrate_times(np.atleast_2d(x_batch), times, field)


class OracleJump:
    """Drop-in stand-in for a perfectly trained network on a Gaussian spec.

    ``jump`` integrates the oracle field at fine resolution; ``anchor``
    inverts the boundary-exact wrapper so the pair behaves exactly like the
    (g, G) of a network model.
    """

    def __init__(self, spec, steps=1024):
        self.spec = spec
        self.steps = steps

    def jump(self, x, t, s):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        s = np.broadcast_to(np.asarray(s, dtype=np.float64), (x.shape[0],))
        out = np.empty_like(x)
        for ti, si in {(float(a), float(b)) for a, b in zip(t, s)}:
            rows = (t == ti) & (s == si)
            if si == ti:
                out[rows] = x[rows]
            else:
                out[rows] = reference_endpoint(x[rows], ti, si, self.spec, steps=self.steps)
        return out

    def anchor(self, x, t, s):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],)).astype(np.float64)
        s = np.broadcast_to(np.asarray(s, dtype=np.float64), (x.shape[0],)).astype(np.float64)
        out = np.empty_like(x)
        same = s == t
        if np.any(same):
            for ti in np.unique(t[same]):
                rows = same & (t == ti)
                out[rows] = fm_posterior_mean(x[rows], ti, self.spec)
        rest = ~same
        if np.any(rest):
            g = self.jump(x[rest], t[rest], s[rest])
            ratio = (s[rest] / t[rest])[:, None]
            out[rest] = (g - ratio * x[rest]) / (1.0 - ratio)
        return out

    def posterior_mean(self, x, t):
        return fm_posterior_mean(x, t, self.spec)
