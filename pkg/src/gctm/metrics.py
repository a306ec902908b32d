"""Two-sample metrics for desk-scale evaluation.

Energy distance plays the sample-quality role, sliced Wasserstein the
distributional-agreement role, and the small helpers below rate pairwise
faithfulness and measurement consistency.
"""

from dataclasses import dataclass

import numpy as np

_CHUNK = 1024


@dataclass(frozen=True)
class MetricReport:
    name: str
    value: float
    n_samples: int
    seed: int = 0

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("metric values are non-negative")


def _mean_cross_distance(a, b):
    """Exact mean of ||a_i - b_j|| over all pairs, chunked."""
    total = 0.0
    for i in range(0, a.shape[0], _CHUNK):
        blk = a[i : i + _CHUNK]
        diff = blk[:, None, :] - b[None, :, :]
        total += np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).sum()
    return total / (a.shape[0] * b.shape[0])


def _mean_within_distance(a):
    """Mean of ||a_i - a_j|| over all ordered pairs (the empirical-measure
    convention: zero diagonal included)."""
    return _mean_cross_distance(a, a)


def energy_distance(a, b):
    """2 E||a-b|| - E||a-a'|| - E||b-b'|| over full pair averages.

    This is the energy distance between the two empirical measures, so it is
    non-negative and exactly zero iff the multisets coincide.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("energy distance needs at least two samples per side")
    return 2.0 * _mean_cross_distance(a, b) - _mean_within_distance(a) - _mean_within_distance(b)


def _w2_sorted(u, v):
    """1D Wasserstein-2 between equal-weight samples via matched quantiles."""
    su, sv = np.sort(u), np.sort(v)
    if su.shape == sv.shape:
        return float(np.sqrt(np.mean((su - sv) ** 2)))
    k = min(su.size, sv.size)
    q = (np.arange(k) + 0.5) / k
    qu = np.quantile(su, q)
    qv = np.quantile(sv, q)
    return float(np.sqrt(np.mean((qu - qv) ** 2)))


def sliced_wasserstein(a, b, n_projections=128, seed=0):
    """Mean 1D Wasserstein-2 over random unit projection directions."""
    if n_projections < 1:
        raise ValueError("need at least one projection")
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    d = a.shape[1]
    if d == 1:
        return _w2_sorted(a[:, 0], b[:, 0])
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_projections, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = [_w2_sorted(a @ u, b @ u) for u in dirs]
    return float(np.mean(vals))


def mse_to_pairs(outputs, targets):
    """Mean squared error between aligned output/target rows."""
    outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    return float(np.mean((outputs - targets) ** 2))


def measurement_residual(measurement, estimate, operator):
    """Mean ||x1 - H xhat|| over rows."""
    r = np.atleast_2d(measurement) - operator.apply_deterministic(estimate)
    return float(np.mean(np.linalg.norm(r, axis=1)))
