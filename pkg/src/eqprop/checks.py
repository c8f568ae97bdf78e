"""Seeded verification suites behind the gradcheck and stochastic-check commands.

Each check runs the relevant oracle comparisons over freshly sampled
interior instances and reports the worst observed value against its
threshold. The acceptance tests call these same functions, so the CLI table
and the test suite cannot drift apart.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import model, relaxation, stochastic
from .oracles import (
    eqprop_grad,
    fd_objective_grad,
    lemma1_check,
    prop1_check,
    rbp_grad,
    rel_l2_error,
    sample_interior_instance,
    stdp_integral_check,
)
from .stochastic import LangevinConfig, QuadratureGrid


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str
    seconds: float

    def row(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}  {self.name:<28s} worst {self.value:10.3e}  "
            f"limit {self.threshold:8.1e}  {self.detail} [{self.seconds:.1f}s]"
        )


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def theorem1_suite(seed=0, n_instances=50, topology=(6, 5, 4), beta=1e-4, fd_delta=1e-6):
    """Contrastive estimator vs objective finite differences vs costate solve.

    Returns three CheckResults: the two-phase estimator against brute-force
    differentiation (95% of instances under 1e-3 relative), and the costate
    route against both (all instances under 1e-5 / 1e-4).
    """
    rng = np.random.default_rng(seed)
    ep_fd, rbp_fd, rbp_ep = [], [], []

    def run():
        for _ in range(n_instances):
            params, x, y_target, s0 = sample_interior_instance(topology, rng)
            fd = fd_objective_grad(params, x, y_target, delta=fd_delta, state0=s0)
            ep = eqprop_grad(params, x, y_target, beta, mode="central", state0=s0)
            rb = rbp_grad(params, x, y_target, state0=s0)
            ep_fd.append(rel_l2_error(ep, fd))
            rbp_fd.append(rel_l2_error(rb, fd))
            rbp_ep.append(rel_l2_error(rb, ep))

    _, seconds = _timed(run)
    ep_fd_arr = np.array(ep_fd)
    frac_ok = float(np.mean(ep_fd_arr < 1e-3))
    results = [
        CheckResult(
            name="theorem1_eqprop_vs_fd",
            passed=frac_ok >= 0.95,
            value=float(np.quantile(ep_fd_arr, 0.95)),
            threshold=1e-3,
            detail=f"{int(frac_ok * n_instances)}/{n_instances} instances under limit",
            seconds=seconds,
        ),
        CheckResult(
            name="rbp_vs_fd",
            passed=max(rbp_fd) < 1e-5,
            value=max(rbp_fd),
            threshold=1e-5,
            detail=f"max over {n_instances} instances",
            seconds=0.0,
        ),
        CheckResult(
            name="rbp_vs_eqprop",
            passed=max(rbp_ep) < 1e-4,
            value=max(rbp_ep),
            threshold=1e-4,
            detail=f"max over {n_instances} instances",
            seconds=0.0,
        ),
    ]
    return results


def prop1_suite(seed=0, n_instances=100, topology=(6, 5, 4), beta=1e-3, tol=1e-9):
    """Nudging with small positive beta never worsens the settled cost."""
    rng = np.random.default_rng(seed)

    def run():
        worst = -np.inf
        for _ in range(n_instances):
            params, x, y_target, s0 = sample_interior_instance(topology, rng)
            c_free, c_nudged = prop1_check(params, x, y_target, beta, state0=s0)
            worst = max(worst, c_nudged - c_free)
        return worst

    worst, seconds = _timed(run)
    return [
        CheckResult(
            name="prop1_cost_improvement",
            passed=worst <= tol,
            value=worst,
            threshold=tol,
            detail=f"max cost increase over {n_instances} instances",
            seconds=seconds,
        )
    ]


def lemma1_suite(seed=0, n_instances=20, topology=(6, 5, 4), step=1e-4, tol=1e-4):
    """Cross-derivative symmetry of the settled total energy."""
    rng = np.random.default_rng(seed)

    def run():
        worst = 0.0
        for _ in range(n_instances):
            params, x, y_target, s0 = sample_interior_instance(topology, rng)
            worst = max(
                worst,
                lemma1_check(
                    params, x, y_target, theta_step=step, beta_step=step, state0=s0
                ),
            )
        return worst

    worst, seconds = _timed(run)
    return [
        CheckResult(
            name="lemma1_symmetry",
            passed=worst < tol,
            value=worst,
            threshold=tol,
            detail=f"max asymmetry over {n_instances} instances",
            seconds=seconds,
        )
    ]


def _smooth_trajectory(n_steps, topology=(2, 3, 2)):
    """Analytic trajectory with smoothly varying interior units."""
    topo = model.Topology(topology)
    t = np.linspace(0.0, 1.0, n_steps + 1)
    states = []
    for ti in t:
        layers = []
        for k, d in enumerate(topo.state_sizes):
            idx = np.arange(d)
            layers.append(0.5 + 0.3 * np.sin(1.5 * ti + idx + k) * np.cos(0.7 * ti))
        states.append(layers)
    return states, np.full(topo.input_size, 0.5)


def stdp_suite(seed=0, n_instances=5, topology=(6, 5, 4), tol=1e-12):
    """Path-integral telescoping on real nudged trajectories, plus the
    left-point scheme's first-order convergence on a smooth trajectory."""
    rng = np.random.default_rng(seed)

    def run():
        worst = 0.0
        for _ in range(n_instances):
            params, x, y_target, s0 = sample_interior_instance(topology, rng)
            traj = relaxation.record_trajectory(
                s0, params, x, beta=1.0, y_target=y_target, epsilon=0.5, n_steps=20
            )
            integral, endpoint = stdp_integral_check(traj, x, scheme="midpoint")
            for got, want in zip(integral, endpoint):
                worst = max(worst, float(np.max(np.abs(got - want))))
        return worst

    worst, seconds = _timed(run)
    results = [
        CheckResult(
            name="stdp_telescoping",
            passed=worst <= tol,
            value=worst,
            threshold=tol,
            detail=f"max |integral - endpoint| over {n_instances} trajectories",
            seconds=seconds,
        )
    ]

    def left_errors():
        errs = []
        for n_steps in (4, 16, 64):
            states, x = _smooth_trajectory(n_steps)
            integral, endpoint = stdp_integral_check(states, x, scheme="left")
            errs.append(
                max(float(np.max(np.abs(g - w))) for g, w in zip(integral, endpoint))
            )
        return errs

    errs, seconds = _timed(left_errors)
    monotone = errs[0] > errs[1] > errs[2]
    results.append(
        CheckResult(
            name="stdp_leftpoint_convergence",
            passed=monotone,
            value=errs[-1],
            threshold=errs[0],
            detail=f"errors at T=4,16,64: {errs[0]:.2e} > {errs[1]:.2e} > {errs[2]:.2e}",
            seconds=seconds,
        )
    )
    return results


def gradient_checks(seed=0, scale=1.0):
    """Full gradcheck table. scale < 1 shrinks instance counts for smoke runs."""
    n1 = max(int(50 * scale), 3)
    n3 = max(int(100 * scale), 3)
    n4 = max(int(20 * scale), 3)
    results = []
    results += theorem1_suite(seed=seed, n_instances=n1)
    results += prop1_suite(seed=seed + 1, n_instances=n3)
    results += lemma1_suite(seed=seed + 2, n_instances=n4)
    results += stdp_suite(seed=seed + 3)
    return results


def _toy_stochastic_instance(seed, topology=(1, 1, 1)):
    """Small-weight toy whose Boltzmann law is comfortably covered by [-4, 5]."""
    rng = np.random.default_rng(seed)
    params, x, y_target, _ = sample_interior_instance(
        topology, rng, coupling_radius=(0.3, 0.5)
    )
    return params, x, y_target


def theorem2_suite(seed=0, beta=1e-3, points=401, tol=1e-2):
    """Stochastic gradient identity on a two-unit toy, by quadrature."""
    params, x, y_target = _toy_stochastic_instance(seed)
    grid = QuadratureGrid.uniform(params.topology.state_dim, points=points)

    def run():
        (lhs_w, lhs_b), (rhs_w, rhs_b) = stochastic.theorem2_check(
            params, x, y_target, beta, grid, theta_delta=1e-4
        )
        lhs = stochastic._flat(lhs_w, lhs_b)
        rhs = stochastic._flat(rhs_w, rhs_b)
        return float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-12)))

    worst, seconds = _timed(run)
    return [
        CheckResult(
            name="theorem2_quadrature",
            passed=worst < tol,
            value=worst,
            threshold=tol,
            detail="max relative mismatch over parameter entries",
            seconds=seconds,
        )
    ]


def prop2_suite(seed=0, points=401, tol=1e-3):
    """d/dbeta of the expected cost equals minus the free cost variance."""
    params, x, y_target = _toy_stochastic_instance(seed + 10)
    grid = QuadratureGrid.uniform(params.topology.state_dim, points=points)

    def run():
        lhs, rhs = stochastic.prop2_check(params, x, y_target, grid)
        rel = abs(lhs - rhs) / max(abs(rhs), 1e-12)
        return lhs, rhs, rel

    (lhs, rhs, rel), seconds = _timed(run)
    passed = rel < tol and lhs <= tol and rhs <= 0.0
    return [
        CheckResult(
            name="prop2_variance_identity",
            passed=passed,
            value=rel,
            threshold=tol,
            detail=f"lhs {lhs:.6e}, rhs {rhs:.6e}",
            seconds=seconds,
        )
    ]


def normalization_suite(seed=0, points=201, tol=1e-12):
    params, x, y_target = _toy_stochastic_instance(seed + 20)
    grid = QuadratureGrid.uniform(params.topology.state_dim, points=points)
    val, seconds = _timed(
        lambda: stochastic.boltzmann_expectation(None, params, x, 0.5, y_target, grid)
    )
    return [
        CheckResult(
            name="boltzmann_normalization",
            passed=abs(val - 1.0) <= tol,
            value=abs(val - 1.0),
            threshold=tol,
            detail="|E[1] - 1|",
            seconds=seconds,
        )
    ]


def langevin_suite(seed=0, tol_sigmas=3.0):
    """Monte Carlo moments of the Langevin chain against quadrature moments.

    Single-unit toy; many short chains run as one batch. The comparison
    allows three standard errors plus the known O(dt) integrator bias.
    """
    rng = np.random.default_rng(seed + 30)
    params, x, y_target, _ = sample_interior_instance((1, 1), rng, coupling_radius=(0.3, 0.5))
    grid = QuadratureGrid.uniform(1, points=801)
    cfg = LangevinConfig(dt=0.002, n_steps=40_000, rng_seed=seed + 31)
    n_chains, burn = 32, 10_000

    def run():
        quad_mean = stochastic.boltzmann_expectation(
            lambda p: p[:, 0], params, x, 0.0, y_target, grid
        )
        state0 = [np.full((n_chains, 1), 0.5)]
        traj = stochastic.langevin_trajectory(state0, params, x, 0.0, y_target, cfg)
        samples = np.concatenate([s[0][:, 0] for s in traj[burn:]])
        mc_mean = float(samples.mean())
        # effective sample size from the integrated autocorrelation time of one chain
        chain = np.stack([s[0][:, 0] for s in traj[burn:]], axis=0)
        var = float(samples.var())
        tau = _integrated_autocorr(chain[:, 0])
        n_eff = samples.size / max(tau, 1.0)
        se = np.sqrt(var / n_eff)
        bias_allowance = 2.0 * cfg.dt
        return abs(mc_mean - quad_mean), tol_sigmas * se + bias_allowance

    (gap, limit), seconds = _timed(run)
    return [
        CheckResult(
            name="langevin_vs_quadrature",
            passed=gap < limit,
            value=gap,
            threshold=limit,
            detail="mean gap vs 3 standard errors + O(dt) bias",
            seconds=seconds,
        )
    ]


def _integrated_autocorr(series, max_lag=2000):
    series = np.asarray(series, dtype=float)
    series = series - series.mean()
    denom = float(series @ series)
    if denom == 0.0:
        return 1.0
    tau = 1.0
    for lag in range(1, min(max_lag, series.size - 1)):
        rho = float(series[:-lag] @ series[lag:]) / denom
        if rho <= 0.0:
            break
        tau += 2.0 * rho
    return tau


def stochastic_checks(seed=0, scale=1.0):
    """Full stochastic-check table."""
    points = 401 if scale >= 1.0 else 101
    results = []
    results += normalization_suite(seed=seed)
    results += theorem2_suite(seed=seed, points=points)
    results += prop2_suite(seed=seed, points=points)
    results += langevin_suite(seed=seed)
    return results
