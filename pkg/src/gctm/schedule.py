"""Time discretization: the EDM sigma ladder, its map onto the unit flow
interval, and the training-time samplers for t-hat and (t, u, s) triplets.
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_SIGMA_MIN = 0.002
DEFAULT_SIGMA_MAX = 80.0
DEFAULT_RHO = 7.0


@dataclass(frozen=True)
class TimeGrid:
    """Monotone discretization {t_n} of [0, 1] with t_0 = 0 and t_N = 1."""

    N: int
    sigma_min: float
    sigma_max: float
    rho: float
    t: np.ndarray

    def __post_init__(self):
        if self.t.shape != (self.N + 1,):
            raise ValueError("time array must have N + 1 entries")
        if self.t[0] != 0.0 or self.t[-1] != 1.0 or np.any(np.diff(self.t) <= 0):
            raise ValueError("grid must increase strictly from 0 to 1")


def edm_sigmas(n, sigma_min=DEFAULT_SIGMA_MIN, sigma_max=DEFAULT_SIGMA_MAX, rho=DEFAULT_RHO):
    """Noise ladder sigma_k = (smin^(1/rho) + (k/n)(smax^(1/rho) - smin^(1/rho)))^rho."""
    if not 0.0 < sigma_min < sigma_max:
        raise ValueError("need 0 < sigma_min < sigma_max")
    if rho <= 0 or n < 1:
        raise ValueError("rho must be positive and n >= 1")
    k = np.arange(n + 1, dtype=np.float64)
    lo, hi = sigma_min ** (1.0 / rho), sigma_max ** (1.0 / rho)
    return (lo + (k / n) * (hi - lo)) ** rho


def fm_grid(sigmas, rho=DEFAULT_RHO):
    """Map a sigma ladder onto the unit interval via t = sigma / (1 + sigma).

    Interior points use the map; the endpoints are pinned to exactly 0 and 1.
    """
    sig = np.asarray(sigmas, dtype=np.float64)
    t = sig / (1.0 + sig)
    t[0] = 0.0
    t[-1] = 1.0
    n = len(sig) - 1
    return TimeGrid(n, float(sig[0]), float(sig[-1]), float(rho), t)


def edm_time_grid(n, sigma_min=DEFAULT_SIGMA_MIN, sigma_max=DEFAULT_SIGMA_MAX, rho=DEFAULT_RHO):
    """Convenience composition of edm_sigmas and fm_grid."""
    return fm_grid(edm_sigmas(n, sigma_min, sigma_max, rho), rho)


def sample_that(mode, rng, size=None):
    """Draw regression times t-hat in (0, 1).

    'unconditional': t = sigma/(1+sigma) with log sigma ~ N(-1.2, 1.2^2).
    'i2i':           t ~ Beta(3, 1).
    """
    if mode == "unconditional":
        sigma = np.exp(rng.normal(-1.2, 1.2, size=size))
        vals = sigma / (1.0 + sigma)
    elif mode == "i2i":
        vals = rng.beta(3.0, 1.0, size=size)
    else:
        raise ValueError(f"unknown t-hat mode {mode!r}")
    # beta draws can land exactly on an endpoint in float
    return np.clip(vals, 1e-12, 1.0 - 1e-12)


def sample_triplet(grid, rng):
    """One (t, u, s) with s <= u < t: t a uniform positive grid point, u the
    grid point adjacent below t, s uniform over grid points <= u."""
    i = int(rng.integers(1, grid.N + 1))
    j = int(rng.integers(0, i))
    return grid.t[i], grid.t[i - 1], grid.t[j]


def sample_triplets(grid, m, rng):
    """Vectorized batch of (t, u, s) rows; same law as sample_triplet."""
    i = rng.integers(1, grid.N + 1, size=m)
    j = rng.integers(0, i)
    t = grid.t[i]
    u = grid.t[i - 1]
    s = grid.t[j]
    return t, u, s


def n_at_iteration(iteration, total_iters, n_start=4, doublings=4):
    """Grid size for a training iteration under the doubling schedule.

    The run splits into ``doublings`` equal phases; N starts at ``n_start``
    and doubles at each phase boundary (e.g. 4, 8, 16, 32 for four phases).
    """
    if doublings < 1:
        raise ValueError("doublings must be >= 1")
    if total_iters <= 0:
        return n_start
    phase_len = max(1, total_iters // doublings)
    phase = min(iteration // phase_len, doublings - 1)
    return n_start * (2**phase)
