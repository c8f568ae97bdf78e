"""Discrete-time relaxation of the state towards an energy minimum.

One step is clipped gradient descent on the total energy,

    s_i <- min(max(s_i - epsilon * dF/ds_i, 0), 1),

applied synchronously to every unit. Iterating it drives the state to a
(box-constrained) fixed point. Stationarity is measured by the projected
residual: the force, with components pointing out of the box at the boundary
zeroed, since the clipping absorbs those.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .exceptions import NumericError, RelaxationError


@dataclass
class FixedPointResult:
    """Final state of a relaxation plus convergence diagnostics.

    residual is the projected-force norm at the final state (over the whole
    batch, if the state is batched); energy and cost are evaluated there too.
    cost is NaN when the phase had no target.
    """

    state: list
    residual: float
    iterations: int
    energy: object
    cost: object


def _projected(forces, state):
    """Zero out force components the box clipping would absorb."""
    out = []
    for f, s in zip(forces, state):
        r = f.copy()
        at_lo = s == 0.0
        at_hi = s == 1.0
        np.maximum(r, 0.0, out=r, where=at_lo)
        np.minimum(r, 0.0, out=r, where=at_hi)
        out.append(r)
    return out


def _residual_norm(projected):
    return float(np.sqrt(sum(np.sum(np.square(r)) for r in projected)))


def projected_residual(state, params, x, beta=0.0, y_target=None):
    """Norm of the force with outward boundary components removed.

    Zero exactly at a fixed point of the clipped dynamics: interior units
    feel no force, and units parked on the boundary are only pushed further
    out.
    """
    f = model.force(params, x, state, beta, y_target)
    return _residual_norm(_projected(f, state))


def step(state, params, x, beta=0.0, y_target=None, epsilon=0.5):
    """One synchronous clipped-descent step on every unit."""
    forces = model.force(params, x, state, beta, y_target)
    new = []
    for k, (s, f) in enumerate(zip(state, forces)):
        if not np.isfinite(f).all():
            raise NumericError(f"non-finite force in state layer {k}")
        new.append(np.clip(s + epsilon * f, 0.0, 1.0))
    return new

def relax(state, params, x, y_target, phase):
    """Iterate the clipped step until the budget runs out or the residual is met.

    With residual_tol == 0 the loop always runs exactly max_iters steps
    (training mode). With residual_tol > 0 it stops as soon as the projected
    residual falls to the tolerance (oracle mode). Deterministic: identical
    inputs give bitwise-identical results.
    """
    s = model.copy_state(state)
    iterations = 0
    check = phase.residual_tol > 0.0
    forces = model.force(params, x, s, phase.beta, y_target)
    for _ in range(phase.max_iters):
        for k, f in enumerate(forces):
            if not np.isfinite(f).all():
                raise NumericError(f"non-finite force in state layer {k}")
        for k in range(len(s)):
            s[k] = np.clip(s[k] + phase.epsilon * forces[k], 0.0, 1.0)
        iterations += 1
        forces = model.force(params, x, s, phase.beta, y_target)
        if check:
            residual = _residual_norm(_projected(forces, s))
            if residual <= phase.residual_tol:
                break
    residual = _residual_norm(_projected(forces, s))
    e = model.energy(params, x, s)
    c = model.cost(s, y_target) if y_target is not None else np.nan
    return FixedPointResult(state=s, residual=residual, iterations=iterations, energy=e, cost=c)


def settle(state, params, x, y_target, phase):
    """relax(), but raise if the tolerance was requested and not reached."""
    result = relax(state, params, x, y_target, phase)
    if phase.residual_tol > 0.0 and result.residual > phase.residual_tol:
        raise RelaxationError(
            f"did not settle below {phase.residual_tol:g} within "
            f"{phase.max_iters} iterations (residual {result.residual:.3e})",
            residual=result.residual,
            iterations=result.iterations,
        )
    return result


def record_trajectory(state, params, x, beta, y_target, epsilon, n_steps):
    """Run n_steps clipped steps and return every visited state, initial included."""
    states = [model.copy_state(state)]
    s = states[0]
    for _ in range(n_steps):
        s = step(s, params, x, beta, y_target, epsilon)
        states.append(s)
    return states
