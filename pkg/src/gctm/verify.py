"""Fast self-verification suite: closed-form identity checks, solver order,
transport exactness, gradient integrity, and structural identities.

Everything here runs on a fresh checkout in seconds; the training-scale
acceptance measurements live in the test suite.
"""

import itertools
import time
from dataclasses import dataclass

import numpy as np

from . import flow_ode, nn, oracle
from .couplings import cost_matrix, sinkhorn_plan
from .model import TrajectoryModel


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    seconds: float

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name}: value={self.value:.3e} "
            f"threshold={self.threshold:.3e} ({self.seconds:.2f}s)"
        )


def _timed(fn):
    t0 = time.perf_counter()
    value, threshold = fn()
    return value, threshold, time.perf_counter() - t0


def check_velocity_identity(seed=0, n=1000):
    """Conditional-displacement velocity equals (x - posterior mean)/t."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 4))
        spec = oracle.GaussianSpec(
            rng.normal(size=d), rng.normal(size=d), rng.uniform(0.2, 2.0, d), rng.uniform(0.2, 2.0, d)
        )
        t = float(rng.uniform(1e-3, 1.0))
        x = rng.normal(scale=2.0, size=(1, d))
        lhs = oracle.fm_posterior_mean_x1(x, t, spec) - oracle.fm_posterior_mean(x, t, spec)
        rhs = (x - oracle.fm_posterior_mean(x, t, spec)) / t
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst, 1e-10


def check_score_identity(seed=0, n=1000):
    """Noise-scale posterior mean equals the flow posterior mean after the
    change of variables, with a standard-normal x1 side."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 4))
        mu0 = rng.normal(size=d)
        var0 = rng.uniform(0.2, 2.0, d)
        spec = oracle.GaussianSpec(mu0, np.zeros(d), var0, np.ones(d))
        t = float(rng.uniform(1e-3, 50.0))
        x = rng.normal(scale=1.0 + t, size=(1, d))
        lhs = oracle.diffusion_posterior_mean(x, t, mu0, var0)
        xbar, tp = flow_ode.ctm_to_gctm(x, t)
        rhs = oracle.fm_posterior_mean(xbar, tp, spec)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst, 1e-12


def check_trajectory_equivalence(seed=0, steps=4096, sigma_lo=0.002, sigma_hi=80.0):
    """Noise-scale trajectory equals the (1+s)-scaled flow trajectory at a
    matched discretization."""
    rng = np.random.default_rng(seed)
    mu0 = np.array([1.5, -0.5])
    var0 = np.array([0.7, 1.3])
    spec = oracle.GaussianSpec(mu0, np.zeros(2), var0, np.ones(2))
    dfield = oracle.GaussianDiffusionField(mu0, var0)
    ffield = oracle.GaussianFlowField(spec)
    sig = np.linspace(sigma_hi, sigma_lo, steps + 1)
    x_init = mu0 + np.sqrt(var0 + sigma_hi**2) * rng.standard_normal((8, 2))
    path_d = flow_ode.integrate_times(x_init, sig, dfield, keep_path=True)
    xbar0, _ = flow_ode.ctm_to_gctm(x_init, sigma_hi)
    path_f = flow_ode.integrate_times(xbar0, sig / (1.0 + sig), ffield, keep_path=True)
    worst = max(
        float(np.abs(path_d[k] - (1.0 + sig[k]) * path_f[k]).max()) for k in range(len(sig))
    )
    return worst, 1e-3


def exact_assignment_cost(x0, x1):
    """Brute-force optimal transport cost over permutations (M <= ~8)."""
    c = cost_matrix(x0, x1)
    m = c.shape[0]
    best = np.inf
    for perm in itertools.permutations(range(m)):
        best = min(best, sum(c[i, perm[i]] for i in range(m)) / m)
    return best


def check_sinkhorn_exact(seed=0, trials=5, m=6):
    """Near-zero-entropy plan cost within 1% of brute-force assignment, and
    marginals within 1e-6."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x0 = rng.normal(size=(m, 2))
        x1 = rng.normal(size=(m, 2))
        c = cost_matrix(x0, x1)
        # near-zero entropy needs far more sweeps than the default cap
        plan = sinkhorn_plan(x0, x1, 1e-3 * c.max(), max_iter=1_000_000)
        if plan.max_violation >= 1e-6:
            return float(plan.max_violation), 1e-6
        cost = float((plan.P * c).sum())
        exact = exact_assignment_cost(x0, x1)
        worst = max(worst, abs(cost - exact) / exact)
    return worst, 0.01


def check_heun_order(seed=0):
    """Endpoint error versus a 4096-step reference decays with slope ~2."""
    rng = np.random.default_rng(seed)
    spec = oracle.GaussianSpec(
        np.array([1.5, -0.5]), np.zeros(2), np.array([0.7, 1.3]), np.ones(2)
    )
    field = oracle.GaussianFlowField(spec)
    x1 = spec.sample_x1(64, rng)
    _, ref = oracle.reference_trajectory(x1, spec, steps=4096)
    ns = np.array([8, 16, 32, 64])
    errs = []
    for n in ns:
        end = flow_ode.integrate_times(x1, np.linspace(1.0, 0.0, n + 1), field)
        errs.append(np.abs(end - ref[-1]).max())
    slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    passed_value = abs(slope - 2.0)
    return float(passed_value), 0.2


def gradient_relative_errors(seed=0, configs=100, h=1e-3):
    """Max relative error of backward vs central differences per config."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(configs):
        d = int(rng.integers(1, 4))
        depth = int(rng.integers(1, 4))
        hidden = tuple(int(rng.integers(4, 11)) for _ in range(depth))
        emb = nn.TimeEmbedding(num_frequencies=int(rng.integers(2, 5)))
        params = nn.init_params(d, hidden=hidden, embedding=emb, seed=int(rng.integers(1 << 30)))
        m = int(rng.integers(1, 4))
        x = rng.normal(size=(m, d))
        t = rng.uniform(0.0, 1.0, m)
        s = rng.uniform(0.0, 1.0, m)
        cot = rng.normal(size=(m, d))
        grad, _ = nn.backward(params, x, t, s, cot)
        w64 = params.weights.astype(np.float64)
        h_in = nn._assemble_input(x, t, s, params.embedding)
        fd = np.empty_like(grad)
        for i in range(grad.size):
            e = np.zeros(grad.size)
            e[i] = h
            yp, _ = nn._forward_views(nn.layer_views(params.layer_dims, w64 + e), h_in)
            ym, _ = nn._forward_views(nn.layer_views(params.layer_dims, w64 - e), h_in)
            fd[i] = float(((yp - ym) * cot).sum()) / (2.0 * h)
        # coordinates far below the gradient scale sit under the h^2 floor of
        # central differences; hold them to a norm-scaled denominator instead
        floor = 0.02 * max(np.abs(grad).max(), np.abs(fd).max(), 1e-12)
        rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), floor)
        worst = max(worst, float(rel.max()))
    return worst


def check_gradient_integrity(seed=0, configs=100):
    return gradient_relative_errors(seed=seed, configs=configs), 1e-4


def check_boundary_identity(seed=0, n=10_000):
    """jump(x, t, t) == x bit-exactly through the wrapper."""
    rng = np.random.default_rng(seed)
    params = nn.init_params(2, hidden=(16, 16), seed=1)
    model = TrajectoryModel(params, use_ema=False)
    x = rng.normal(scale=3.0, size=(n, 2))
    t = rng.uniform(0.0, 1.0, n)
    out = model.jump(x, t, t)
    mismatches = float(np.count_nonzero(out != x))
    return mismatches, 0.5


def check_semigroup(seed=0):
    """Two-leg grid integration matches one-shot within twice the one-leg
    truncation error."""
    rng = np.random.default_rng(seed)
    spec = oracle.GaussianSpec(
        np.array([0.5, -1.0]), np.zeros(2), np.array([0.5, 1.5]), np.ones(2)
    )
    field = oracle.GaussianFlowField(spec)
    x = spec.sample_x1(32, rng)
    times = np.linspace(1.0, 0.25, 13)
    mid = 6
    one = flow_ode.integrate_times(x, times, field)
    two = flow_ode.integrate_times(
        flow_ode.integrate_times(x, times[: mid + 1], field), times[mid:], field
    )
    ref = oracle.reference_endpoint(x, 1.0, 0.25, spec, steps=4096)
    trunc = float(np.abs(one - ref).max())
    gap = float(np.abs(two - one).max())
    return gap, 2.0 * trunc + 1e-12


ALL_CHECKS = [
    ("velocity-identity", check_velocity_identity),
    ("score-identity", check_score_identity),
    ("trajectory-equivalence", check_trajectory_equivalence),
    ("sinkhorn-exact-ot", check_sinkhorn_exact),
    ("heun-order", check_heun_order),
    ("gradient-integrity", check_gradient_integrity),
    ("boundary-identity", check_boundary_identity),
    ("semigroup", check_semigroup),
]


def run_all(emit=print):
    """Run every check; returns the list of CheckResults."""
    results = []
    for name, fn in ALL_CHECKS:
        value, threshold, seconds = _timed(fn)
        res = CheckResult(name, value <= threshold, value, threshold, seconds)
        results.append(res)
        if emit is not None:
            emit(res.line())
    return results
