"""Independent verification machinery for the two-phase gradient estimator.

Four routes to the same gradient live here: the contrastive two-phase
estimator itself, brute-force differentiation of the settled objective,
recurrent backprop via the costate linear system, and the fully clamped
contrastive Hebbian baseline. They share no code beyond the model
definitions, so pairwise agreement localizes bugs.

All routines run in float64 with tight relaxations; they are meant for
small nets (the recurrent-backprop route assembles the dense state Hessian).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model, relaxation
from .exceptions import BoundaryError, ConfigError, NumericError
from .model import LayeredParams, PhaseConfig, Topology


@dataclass
class GradEstimate:
    """Per-parameter gradient of the settled cost, with provenance.

    method is one of "eqprop", "fd_objective", "rbp", "chl"; beta_used
    records the nudging strength for estimators that have one.
    """

    dW: list
    db: list
    method: str
    beta_used: float = None

    def flat(self):
        return np.concatenate(
            [w.ravel() for w in self.dW] + [b.ravel() for b in self.db]
        )


def rel_l2_error(estimate, reference):
    """||a - b|| / ||b|| over all parameter entries."""
    a, b = estimate.flat(), reference.flat()
    denom = np.linalg.norm(b)
    if denom == 0.0:
        return float(np.linalg.norm(a))
    return float(np.linalg.norm(a - b) / denom)


def _free_phase(params, x, y_target, phase, state0):
    start = state0 if state0 is not None else model.zeros_state(params.topology)
    free = PhaseConfig(
        beta=0.0,
        epsilon=phase.epsilon,
        max_iters=phase.max_iters,
        residual_tol=phase.residual_tol,
    )
    return relaxation.settle(start, params, x, y_target, free)


def _nudged_phase(params, x, y_target, beta, phase, s0):
    nudged = PhaseConfig(
        beta=beta,
        epsilon=phase.epsilon,
        max_iters=phase.max_iters,
        residual_tol=phase.residual_tol,
    )
    return relaxation.settle(model.copy_state(s0), params, x, y_target, nudged)


def eqprop_grad(params, x, y_target, beta, mode="central", phase=None, state0=None):
    """Two-phase contrastive gradient estimate at nudging strength beta.

    one_sided: (dF/dtheta at the nudged point - dF/dtheta at the free point) / beta.
    central:   the same contrast between the +beta and -beta nudged points,
               divided by 2 beta; first-order bias cancels.

    Both nudged phases start from the free fixed point, which itself starts
    from state0 (resting state when omitted).
    """
    if beta == 0.0:
        raise ConfigError("eqprop estimator needs beta != 0")
    if mode not in ("one_sided", "central"):
        raise ConfigError(f"mode must be 'one_sided' or 'central', got {mode!r}")
    phase = phase or PhaseConfig.oracle()
    s0 = _free_phase(params, x, y_target, phase, state0).state
    if mode == "one_sided":
        g_lo = model.grad_theta(params, x, s0)
        sb = _nudged_phase(params, x, y_target, beta, phase, s0).state
        g_hi = model.grad_theta(params, x, sb)
        scale = 1.0 / beta
    else:
        sp = _nudged_phase(params, x, y_target, +beta, phase, s0).state
        sm = _nudged_phase(params, x, y_target, -beta, phase, s0).state
        g_hi = model.grad_theta(params, x, sp)
        g_lo = model.grad_theta(params, x, sm)
        scale = 1.0 / (2.0 * beta)
    dW = [scale * (h - l) for h, l in zip(g_hi.dW, g_lo.dW)]
    db = [scale * (h - l) for h, l in zip(g_hi.db, g_lo.db)]
    return GradEstimate(dW=dW, db=db, method="eqprop", beta_used=beta)


def fd_objective_grad(params, x, y_target, delta=1e-6, phase=None, state0=None):
    """Central finite differences of the settled cost through every parameter.

    Each perturbed evaluation re-relaxes the free phase to the oracle
    tolerance, warm-started from the unperturbed fixed point so that the
    perturbed relaxation stays in the same energy basin.
    """
    if delta <= 0.0:
        raise ConfigError(f"delta must be positive, got {delta}")
    phase = phase or PhaseConfig.oracle()
    s0 = _free_phase(params, x, y_target, phase, state0).state
    work = params.copy()

    def settled_cost():
        res = _free_phase(work, x, y_target, phase, s0)
        return float(model.cost(res.state, y_target))

    def central(arr, idx):
        saved = arr[idx]
        arr[idx] = saved + delta
        j_hi = settled_cost()
        arr[idx] = saved - delta
        j_lo = settled_cost()
        arr[idx] = saved
        return (j_hi - j_lo) / (2.0 * delta)

    dW = []
    for w in work.weights:
        g = np.empty_like(w)
        for idx in np.ndindex(w.shape):
            g[idx] = central(w, idx)
        dW.append(g)
    db = []
    for b in work.biases:
        g = np.empty_like(b)
        for idx in np.ndindex(b.shape):
            g[idx] = central(b, idx)
        db.append(g)
    return GradEstimate(dW=dW, db=db, method="fd_objective", beta_used=None)


def state_hessian(params, state):
    """Dense Hessian of the energy over the state units at a strictly interior point.

    In the interior the firing rate is the identity, so the Hessian is
    I minus the symmetric coupling matrix between adjacent state layers.
    """
    topo = params.topology
    flat = model.flatten_state(state)
    if flat.min() <= 0.0 or flat.max() >= 1.0:
        raise BoundaryError("state touches the box boundary; Hessian undefined there")
    return np.eye(topo.state_dim) - coupling_matrix(params)


def coupling_matrix(params):
    """Symmetric state-to-state weight matrix (input drive excluded)."""
    topo = params.topology
    n = topo.state_dim
    a = np.zeros((n, n))
    offsets = np.concatenate([[0], np.cumsum(topo.state_sizes)])
    for j in range(1, topo.n_layers):
        w = params.weights[j]
        a[offsets[j - 1] : offsets[j], offsets[j] : offsets[j + 1]] = w
        a[offsets[j] : offsets[j + 1], offsets[j - 1] : offsets[j]] = w.T
    return a


def rbp_costate(params, x, s0, y_target):
    """Costate vector: the sensitivity of the free fixed point to the nudging.

    Solves H lambda = -dC/ds at the free fixed point, where H is the state
    Hessian of the energy. Requires a strictly interior fixed point with H
    positive definite (a genuine isolated minimum).
    """
    h = state_hessian(params, s0)
    try:
        np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        raise NumericError("state Hessian is not positive definite at the fixed point")
    dc = np.zeros(params.topology.state_dim)
    out = params.topology.output_size
    dc[-out:] = np.asarray(s0[-1]) - np.asarray(y_target)
    return np.linalg.solve(h, -dc)


def rbp_grad(params, x, y_target, phase=None, state0=None):
    """Gradient of the settled cost via the costate linear system.

    Contracts the costate with the mixed state/parameter second derivatives
    of the energy at the free fixed point. The cost has no direct parameter
    dependence, so this contraction is the whole gradient.
    """
    phase = phase or PhaseConfig.oracle()
    s0 = _free_phase(params, x, y_target, phase, state0).state
    lam = rbp_costate(params, x, s0, y_target)
    topo = params.topology
    lam_blocks = model.unflatten_state(lam, topo)
    rho = model._rho_units(x, s0)
    dW, db = [], []
    for j in range(topo.n_layers):
        g = -np.outer(rho[j], lam_blocks[j])
        if j >= 1:
            g = g - np.outer(lam_blocks[j - 1], rho[j + 1])
        dW.append(g)
        db.append(-lam_blocks[j])
    return GradEstimate(dW=dW, db=db, method="rbp", beta_used=None)


def relax_clamped_outputs(params, x, y_value, state0, phase):
    """Relax the hidden layers with the outputs hard-fixed to y_value.

    The pinned outputs act as an extra clamped boundary, exactly like the
    inputs. Nets without hidden layers settle immediately.
    """
    s = model.copy_state(state0)
    s[-1] = np.array(y_value, dtype=float)
    if len(s) == 1:
        return s
    for _ in range(phase.max_iters):
        forces = model.force(params, x, s, 0.0, None)
        for k in range(len(s) - 1):
            s[k] = np.clip(s[k] + phase.epsilon * forces[k], 0.0, 1.0)
        if phase.residual_tol > 0.0:
            r = relaxation._projected(
                model.force(params, x, s, 0.0, None)[:-1], s[:-1]
            )
            if relaxation._residual_norm(r) <= phase.residual_tol:
                break
    return s


def _chl_states(params, x, y_target, phase, state0):
    s0 = _free_phase(params, x, y_target, phase, state0).state
    s_inf = relax_clamped_outputs(params, x, y_target, s0, phase)
    return s0, s_inf


def chl_update(params, x, y_target, phase=None, state0=None):
    """Contrastive Hebbian baseline: free phase against fully clamped phase.

    Returned with the gradient sign convention (descent is the negative), so
    it is directly comparable with the other estimators. Unlike those, this
    is not a gradient of the settled cost; the two phases may land in
    different energy valleys.
    """
    phase = phase or PhaseConfig.oracle()
    s0, s_inf = _chl_states(params, x, y_target, phase, state0)
    g_free = model.grad_theta(params, x, s0)
    g_clamped = model.grad_theta(params, x, s_inf)
    dW = [c - f for c, f in zip(g_clamped.dW, g_free.dW)]
    db = [c - f for c, f in zip(g_clamped.db, g_free.db)]
    return GradEstimate(dW=dW, db=db, method="chl", beta_used=None)


def chl_objective_gap(params, x, y_target, phase=None, state0=None):
    """E(clamped) - E(free): the contrastive objective, may be negative."""
    phase = phase or PhaseConfig.oracle()
    s0, s_inf = _chl_states(params, x, y_target, phase, state0)
    return float(model.energy(params, x, s_inf) - model.energy(params, x, s0))


def prop1_check(params, x, y_target, beta, phase=None, state0=None):
    """Costs at the free and the weakly nudged fixed points, in that order.

    For small beta > 0 nudging can only improve the settled cost; callers
    assert cost_nudged <= cost_free + tol.
    """
    if beta <= 0.0:
        raise ConfigError(f"beta must be positive, got {beta}")
    phase = phase or PhaseConfig.oracle()
    s0 = _free_phase(params, x, y_target, phase, state0).state
    sb = _nudged_phase(params, x, y_target, beta, phase, s0).state
    return float(model.cost(s0, y_target)), float(model.cost(sb, y_target))


def lemma1_check(params, x, y_target, theta_step=1e-4, beta_step=1e-4, phase=None, state0=None):
    """Cross-derivative symmetry at the fixed point, by finite differences.

    Differentiating the settled cost through the parameters must agree,
    entry by entry, with differentiating dF/dtheta at the nudged fixed point
    through the nudging strength. Returns the largest absolute mismatch.
    """
    a = fd_objective_grad(params, x, y_target, delta=theta_step, phase=phase, state0=state0)
    b = eqprop_grad(params, x, y_target, beta_step, mode="central", phase=phase, state0=state0)
    return float(np.max(np.abs(a.flat() - b.flat())))


def stdp_integral_check(trajectory, x, scheme="midpoint"):
    """Discrete path integral of the pairwise firing-product flow along a trajectory.

    For every connected pair the integrand is rho_i * d(rho_j) + rho_j * d(rho_i).
    With midpoint values for the undifferenced factors the sum telescopes and
    equals the endpoint product difference exactly; the left-point scheme has
    O(1/T) discretization error instead.

    Returns (integral, endpoint difference), each a list of weight-shaped
    matrices, one per layer pair.
    """
    if len(trajectory) < 2:
        raise ConfigError("trajectory must contain at least two states")
    if scheme not in ("midpoint", "left"):
        raise ConfigError(f"scheme must be 'midpoint' or 'left', got {scheme!r}")
    rhos = [model._rho_units(x, s) for s in trajectory]
    n_pairs = len(rhos[0]) - 1
    integral = [0.0] * n_pairs
    for t in range(len(rhos) - 1):
        cur, nxt = rhos[t], rhos[t + 1]
        for j in range(n_pairs):
            d_pre = nxt[j] - cur[j]
            d_post = nxt[j + 1] - cur[j + 1]
            if scheme == "midpoint":
                pre = 0.5 * (cur[j] + nxt[j])
                post = 0.5 * (cur[j + 1] + nxt[j + 1])
            else:
                pre, post = cur[j], cur[j + 1]
            integral[j] = integral[j] + np.outer(pre, d_post) + np.outer(d_pre, post)
    first, last = rhos[0], rhos[-1]
    endpoint = [
        np.outer(last[j], last[j + 1]) - np.outer(first[j], first[j + 1])
        for j in range(n_pairs)
    ]
    return integral, endpoint


def sample_interior_instance(topology, rng, margin=0.15, coupling_radius=(0.3, 0.6)):
    """Random instance whose free fixed point is strictly interior by construction.

    Weights start from a Glorot draw but are damped so the symmetric
    state-coupling matrix has spectral norm below one; at that scale the
    interior energy landscape is strictly convex, so an interior minimum
    exists and is unique. The biases are then solved so that the minimum sits
    at a uniformly drawn point away from the box boundary. (Undamped Glorot
    coupling has spectral norm near two at every layer width, which makes
    every interior stationary point a saddle - such instances have no
    interior fixed points to verify the theory at.)

    Returns (params, x, y_target, free_state) with free_state the exact
    constructed minimum, ready to warm-start oracle relaxations.
    """
    topo = topology if isinstance(topology, Topology) else Topology(tuple(topology))
    weights = []
    for a, b in zip(topo.layer_sizes[:-1], topo.layer_sizes[1:]):
        bound = np.sqrt(6.0 / (a + b))
        weights.append(rng.uniform(-bound, bound, size=(a, b)))
    params = LayeredParams(weights, [np.zeros(d) for d in topo.state_sizes])
    radius = float(np.linalg.norm(coupling_matrix(params), 2))
    target_radius = rng.uniform(*coupling_radius)
    if radius > 0.0:
        scale = target_radius / radius
        params = LayeredParams([w * scale for w in params.weights], params.biases)
    x = rng.uniform(0.0, 1.0, topo.input_size)
    y_target = rng.uniform(0.0, 1.0, topo.output_size)
    s_flat = rng.uniform(margin, 1.0 - margin, topo.state_dim)
    a = coupling_matrix(params)
    drive = np.zeros(topo.state_dim)
    drive[: topo.state_sizes[0]] = model.hard_sigmoid(x) @ params.weights[0]
    b_flat = s_flat - a @ s_flat - drive
    biases = [np.array(b) for b in model.unflatten_state(b_flat, topo)]
    params = LayeredParams(params.weights, biases)
    free_state = model.unflatten_state(s_flat, topo)
    free_state = [np.array(s) for s in free_state]
    return params, x, y_target, free_state
