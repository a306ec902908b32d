"""Deterministic toy dataset samplers (2D suites plus Gaussian and file-backed
sources) and the standard-normal prior."""

import numpy as np

from .oracle import GaussianSpec

_EIGHT_CENTERS = np.array(
    [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (np.sqrt(0.5), np.sqrt(0.5)),
        (np.sqrt(0.5), -np.sqrt(0.5)),
        (-np.sqrt(0.5), np.sqrt(0.5)),
        (-np.sqrt(0.5), -np.sqrt(0.5)),
    ]
) * 4.0


def eight_gaussians(n, rng):
    """Classic ring of eight modes, overall scale ~2.8."""
    idx = rng.integers(0, 8, size=n)
    pts = _EIGHT_CENTERS[idx] + 0.5 * rng.standard_normal((n, 2))
    return pts / 1.414


def two_moons(n, rng, noise=0.1):
    """Two interleaved half circles."""
    phi = rng.uniform(0.0, np.pi, size=n)
    branch = rng.integers(0, 2, size=n)
    x = np.where(branch == 0, np.cos(phi), 1.0 - np.cos(phi))
    y = np.where(branch == 0, np.sin(phi), 0.5 - np.sin(phi))
    return np.stack([x, y], axis=1) + noise * rng.standard_normal((n, 2))


def checkerboard(n, rng):
    """Uniform mass on alternating squares of an 8x8-unit board."""
    x1 = rng.uniform(-2.0, 2.0, size=n)
    x2 = rng.uniform(0.0, 1.0, size=n) - rng.integers(0, 2, size=n) * 2.0
    x2 = x2 + np.floor(x1) % 2
    return np.stack([x1, x2], axis=1) * 2.0


def normal_prior(dim):
    """Standard normal sampler of the given dimension."""

    def sample(n, rng):
        return rng.standard_normal((n, dim))

    return sample


def make_sampler(kind, dim=2, gaussian_spec=None, path=None):
    """Resolve a dataset name to a ``sample(n, rng) -> (n, d)`` callable.

    Returns (sampler, dim). ``gaussian`` draws the x0 side of a
    GaussianSpec; ``file`` loads plain-text rows once and resamples them.
    """
    if kind == "eight_gaussians":
        return eight_gaussians, 2
    if kind == "two_moons":
        return two_moons, 2
    if kind == "checkerboard":
        return checkerboard, 2
    if kind == "normal":
        return normal_prior(dim), dim
    if kind == "gaussian":
        spec = gaussian_spec if gaussian_spec is not None else GaussianSpec(
            np.zeros(dim), np.zeros(dim), np.ones(dim), np.ones(dim)
        )
        return (lambda n, rng: spec.sample_x0(n, rng)), spec.dim
    if kind == "file":
        rows = np.atleast_2d(np.loadtxt(path, dtype=np.float64))

        def sample(n, rng):
            return rows[rng.integers(0, rows.shape[0], size=n)].copy()

        return sample, rows.shape[1]
    raise ValueError(f"unknown dataset kind {kind!r}")
