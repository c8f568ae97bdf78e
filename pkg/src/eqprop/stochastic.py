"""Stochastic counterpart of the deterministic dynamics.

Adding Gaussian noise to the descent turns the relaxation into Langevin
dynamics whose stationary law is the Boltzmann distribution of the total
energy. On nets with at most three state units that distribution can be
integrated by quadrature, which gives an exact oracle for the expectation
identities (the unbiased-estimator theorem and the variance form of the
cost-improvement property).

The Langevin state is NOT box-clipped: the quadratic leak keeps exp(-F)
integrable over all of space, and the Boltzmann analysis needs the
unconstrained energy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import model
from .exceptions import ConfigError, NumericError


class BoundaryMassWarning(UserWarning):
    """Quadrature bounds truncate a non-negligible amount of probability mass."""


@dataclass(frozen=True)
class LangevinConfig:
    """Euler-Maruyama integration settings. sigma = sqrt(2) gives unit temperature."""

    dt: float
    sigma: float = np.sqrt(2.0)
    n_steps: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.sigma <= 0.0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class QuadratureGrid:
    """Composite-Simpson grid: per-dimension [lo, hi] bounds and odd point counts."""

    bounds: tuple
    points: tuple

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        points = tuple(int(p) for p in self.points)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "points", points)
        if not 1 <= len(bounds) <= 3:
            raise ConfigError("quadrature supports 1 to 3 dimensions")
        if len(points) != len(bounds):
            raise ConfigError("need one point count per dimension")
        for (lo, hi), p in zip(bounds, points):
            if hi <= lo:
                raise ConfigError(f"bad bounds [{lo}, {hi}]")
            if p < 3 or p % 2 == 0:
                raise ConfigError(f"point counts must be odd and >= 3, got {p}")

    @classmethod
    def uniform(cls, dim, lo=-4.0, hi=5.0, points=401):
        return cls(bounds=((lo, hi),) * dim, points=(points,) * dim)

    @property
    def dim(self):
        return len(self.bounds)


def langevin_step(state, params, x, beta, y_target, cfg, rng=None):
    """One Euler-Maruyama step: s <- s + dt * force + sigma * sqrt(dt) * noise.

    The noiseless limit is one unclipped descent step with step size dt.
    A fresh generator seeded from cfg.rng_seed is used when rng is omitted.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    forces = model.force(params, x, state, beta, y_target)
    root = cfg.sigma * np.sqrt(cfg.dt)
    new = []
    for k, (s, f) in enumerate(zip(state, forces)):
        nxt = s + cfg.dt * f + root * rng.standard_normal(np.shape(s))
        if not np.isfinite(nxt).all():
            raise NumericError(f"langevin state overflow in layer {k}")
        new.append(nxt)
    return new


def langevin_trajectory(state, params, x, beta, y_target, cfg):
    """Integrate cfg.n_steps steps; returns every visited state, initial included.

    A leading batch axis on the state runs that many independent chains off
    one generator stream.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    out = [model.copy_state(state)]
    s = out[0]
    for _ in range(cfg.n_steps):
        s = langevin_step(s, params, x, beta, y_target, cfg, rng)
        out.append(s)
    return out


def _simpson_weights(lo, hi, n):
    h = (hi - lo) / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def _grid_arrays(grid):
    """Flattened mesh points (n, dim), quadrature weights (n,), boundary mask (n,)."""
    axes = [np.linspace(lo, hi, p) for (lo, hi), p in zip(grid.bounds, grid.points)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    w = _simpson_weights(*grid.bounds[0], grid.points[0])
    for (lo, hi), p in zip(grid.bounds[1:], grid.points[1:]):
        w = np.multiply.outer(w, _simpson_weights(lo, hi, p))
    edge = [np.zeros(p, dtype=bool) for p in grid.points]
    for e in edge:
        e[0] = e[-1] = True
    bmask = np.zeros(grid.points, dtype=bool)
    for d, e in enumerate(edge):
        shape = [1] * len(grid.points)
        shape[d] = -1
        bmask |= e.reshape(shape)
    return pts, w.ravel(), bmask.ravel()


def _grid_log_density(params, x, beta, y_target, grid):
    """Unnormalized log weights log(w_i) - F(s_i) over the grid, plus the points."""
    topo = params.topology
    if topo.state_dim != grid.dim:
        raise ConfigError(f"grid dimension {grid.dim} != state dimension {topo.state_dim}")
    pts, w, bmask = _grid_arrays(grid)
    states = model.unflatten_state(pts, topo)
    f_vals = np.asarray(model.total_energy(params, x, states, beta, y_target))
    f_min = f_vals.min()
    boundary_rel = np.exp(-(f_vals[bmask].min() - f_min))
    if boundary_rel > 1e-12:
        warnings.warn(
            f"density at the grid boundary is {boundary_rel:.2e} of the peak; "
            "widen the bounds for full mass coverage",
            BoundaryMassWarning,
            stacklevel=3,
        )
    return pts, np.log(w) - f_vals


def boltzmann_expectation(fn, params, x, beta, y_target, grid):
    """Expectation of fn(state) under the Boltzmann law exp(-F)/Z by Simpson quadrature.

    fn maps an (n, dim) batch of flattened states to n values; pass None for
    the constant 1 (returns exactly 1, the normalization sanity case).
    Log-sum-exp keeps the weights stable however deep the energy minimum is.
    """
    pts, logw = _grid_log_density(params, x, beta, y_target, grid)
    p = np.exp(logw - logw.max())
    den = p.sum()
    if fn is None:
        return float(den / den)
    vals = np.asarray(fn(pts), dtype=float)
    return float((vals * p).sum() / den)


def _expected_param_grads(params, x, beta, y_target, grid):
    """E[dF/dtheta] under the Boltzmann law, per parameter entry."""
    pts, logw = _grid_log_density(params, x, beta, y_target, grid)
    p = np.exp(logw - logw.max())
    p /= p.sum()
    states = model.unflatten_state(pts, params.topology)
    g = model.grad_theta(params, x, states)
    dW = [np.einsum("n,nab->ab", p, gw) for gw in g.dW]
    db = [np.einsum("n,na->a", p, gb) for gb in g.db]
    return dW, db


def _flat(dW, db):
    return np.concatenate([w.ravel() for w in dW] + [b.ravel() for b in db])


def theorem2_check(params, x, y_target, beta, grid, theta_delta):
    """Both sides of the stochastic gradient identity, per parameter entry.

    lhs: central finite difference (step theta_delta) through the parameters
    of the expected cost under the free Boltzmann law. rhs: the contrastive
    estimator (E_beta[dF/dtheta] - E_0[dF/dtheta]) / beta. Returns
    (lhs, rhs) as (dW, db) pairs; they agree up to O(beta) and quadrature
    error.
    """
    if beta == 0.0:
        raise ConfigError("theorem2_check needs beta != 0")
    if theta_delta <= 0.0:
        raise ConfigError(f"theta_delta must be positive, got {theta_delta}")

    def expected_cost(p):
        return boltzmann_expectation(
            lambda pts: _cost_of_points(pts, p.topology, y_target), p, x, 0.0, y_target, grid
        )

    work = params.copy()

    def central(arr, idx):
        saved = arr[idx]
        arr[idx] = saved + theta_delta
        hi = expected_cost(work)
        arr[idx] = saved - theta_delta
        lo = expected_cost(work)
        arr[idx] = saved
        return (hi - lo) / (2.0 * theta_delta)

    lhs_dW = []
    for w in work.weights:
        g = np.empty_like(w)
        for idx in np.ndindex(w.shape):
            g[idx] = central(w, idx)
        lhs_dW.append(g)
    lhs_db = []
    for b in work.biases:
        g = np.empty_like(b)
        for idx in np.ndindex(b.shape):
            g[idx] = central(b, idx)
        lhs_db.append(g)

    hi_dW, hi_db = _expected_param_grads(params, x, beta, y_target, grid)
    lo_dW, lo_db = _expected_param_grads(params, x, 0.0, y_target, grid)
    rhs_dW = [(h - l) / beta for h, l in zip(hi_dW, lo_dW)]
    rhs_db = [(h - l) / beta for h, l in zip(hi_db, lo_db)]
    return (lhs_dW, lhs_db), (rhs_dW, rhs_db)


def _cost_of_points(pts, topology, y_target):
    states = model.unflatten_state(pts, topology)
    return model.cost(states, y_target)


def prop2_check(params, x, y_target, grid, beta_delta=1e-3):
    """Derivative of the expected cost in beta at 0, against minus the cost variance.

    The first is a central difference of quadrature expectations; the second
    is computed directly under the free law. Both should agree and be
    non-positive.
    """
    topo = params.topology

    def cost_fn(pts):
        return _cost_of_points(pts, topo, y_target)

    hi = boltzmann_expectation(cost_fn, params, x, +beta_delta, y_target, grid)
    lo = boltzmann_expectation(cost_fn, params, x, -beta_delta, y_target, grid)
    lhs = (hi - lo) / (2.0 * beta_delta)
    mean = boltzmann_expectation(cost_fn, params, x, 0.0, y_target, grid)
    second = boltzmann_expectation(lambda p: cost_fn(p) ** 2, params, x, 0.0, y_target, grid)
    rhs = -(second - mean**2)
    return lhs, rhs
