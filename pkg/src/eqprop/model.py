"""Continuous Hopfield-style energy model on a layered topology.

The network is a chain of layers x -> s_1 -> ... -> s_N with symmetric
connections (the feedback weight between two units is the transpose of the
feedforward one, stored once). The input x is always clamped; the state
consists of the remaining layers, the last of which is the output.

Everything here is a pure function of its arguments. States are plain lists
of numpy arrays, one per non-input layer; a leading batch axis is allowed
and broadcast consistently through every operation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DimensionError, NumericError


def hard_sigmoid(v):
    """Firing rate rho(v) = min(max(v, 0), 1)."""
    return np.clip(v, 0.0, 1.0)


def hard_sigmoid_prime(v):
    """Derivative of the hard sigmoid: 1 on the closed interval [0, 1], 0 outside.

    Including the endpoints matters: a unit clipped to the box boundary must
    still feel synaptic pressure pointing back inside, otherwise it could
    never re-enter (0, 1) and the resting state would be a spurious fixed
    point of the free dynamics.
    """
    v = np.asarray(v)
    return ((v >= 0.0) & (v <= 1.0)).astype(v.dtype if v.dtype.kind == "f" else np.float64)


@dataclass(frozen=True)
class Topology:
    """Layer sizes [d_0, ..., d_N]: input, hidden layers, output."""

    layer_sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(d) for d in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise DimensionError("topology needs at least an input and an output layer")
        if any(d < 1 for d in sizes):
            raise DimensionError(f"all layer sizes must be >= 1, got {sizes}")

    @property
    def n_layers(self):
        """Number of weight layers N (= number of non-input layers)."""
        return len(self.layer_sizes) - 1

    @property
    def input_size(self):
        return self.layer_sizes[0]

    @property
    def output_size(self):
        return self.layer_sizes[-1]

    @property
    def state_sizes(self):
        return self.layer_sizes[1:]

    @property
    def state_dim(self):
        return sum(self.layer_sizes[1:])


@dataclass
class LayeredParams:
    """Weight matrices W_k (shape d_{k-1} x d_k) and bias vectors b_k for k = 1..N.

    Symmetric connectivity is represented once: the same W_k serves the
    forward (k-1 -> k) and backward (k -> k-1, via transpose) influence.
    """

    weights: list
    biases: list

    def __post_init__(self):
        self.weights = [np.asarray(w) for w in self.weights]
        self.biases = [np.asarray(b) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("need one weight matrix and one bias vector per layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise DimensionError(f"layer {k}: W {w.shape} and b {b.shape} are inconsistent")
            if k > 0 and self.weights[k - 1].shape[1] != w.shape[0]:
                raise DimensionError(
                    f"layer {k}: W {w.shape} does not chain with previous {self.weights[k-1].shape}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"layer {k}: non-finite parameter entries")

    @property
    def topology(self):
        return Topology((self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights))

    @property
    def dtype(self):
        return self.weights[0].dtype

    def copy(self):
        return LayeredParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype):
        return LayeredParams(
            [w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases]
        )


@dataclass(frozen=True)
class PhaseConfig:
    """Settings for one relaxation phase.

    beta weighs the output-nudging potential (0 = free phase). epsilon is the
    step size of the clipped descent. The phase stops after max_iters steps,
    or earlier once the projected residual drops to residual_tol; a tolerance
    of 0 disables the early stop and always runs the full budget.
    """

    beta: float = 0.0
    epsilon: float = 0.5
    max_iters: int = 100
    residual_tol: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.residual_tol < 0.0:
            raise ConfigError(f"residual_tol must be >= 0, got {self.residual_tol}")

    @classmethod
    def oracle(cls, beta=0.0):
        """Tight settings used by the gradient oracles: settle essentially exactly."""
        return cls(beta=beta, epsilon=0.5, max_iters=10**6, residual_tol=1e-12)


@dataclass
class ParamGrads:
    """Partial derivatives of the total energy F with respect to the parameters.

    dW and db mirror the LayeredParams layout; dbeta is dF/dbeta, which equals
    the cost at the given state. Batched states give batched entries.
    """

    dW: list
    db: list
    dbeta: object = None


def zeros_state(topology, batch_shape=(), dtype=np.float64):
    """Resting state: every unit at 0."""
    shape = tuple(batch_shape) if not isinstance(batch_shape, int) else (batch_shape,)
    return [np.zeros(shape + (d,), dtype=dtype) for d in topology.state_sizes]


def copy_state(state):
    return [s.copy() for s in state]


def flatten_state(state):
    """Concatenate the layers of a single (unbatched) state into one vector."""
    return np.concatenate([np.asarray(s).ravel() for s in state])


def unflatten_state(vec, topology):
    """Split a flat vector (or batch of rows) back into per-layer arrays."""
    vec = np.asarray(vec)
    out, at = [], 0
    for d in topology.state_sizes:
        out.append(vec[..., at : at + d])
        at += d
    if at != vec.shape[-1]:
        raise DimensionError(f"flat state length {vec.shape[-1]} != state dim {at}")
    return out


def _check_args(params, x, state, y_target=None, beta=None):
    topo = params.topology
    x = np.asarray(x)
    if x.shape[-1] != topo.input_size:
        raise DimensionError(f"input size {x.shape[-1]} != topology input {topo.input_size}")
    if len(state) != topo.n_layers:
        raise DimensionError(f"state has {len(state)} layers, topology wants {topo.n_layers}")
    for k, (s, d) in enumerate(zip(state, topo.state_sizes)):
        if np.asarray(s).shape[-1] != d:
            raise DimensionError(f"state layer {k} has size {np.asarray(s).shape[-1]}, want {d}")
    if y_target is not None and np.asarray(y_target).shape[-1] != topo.output_size:
        raise DimensionError(
            f"target size {np.asarray(y_target).shape[-1]} != output {topo.output_size}"
        )
    if not np.isfinite(x).all():
        raise NumericError("non-finite input x")
    for k, s in enumerate(state):
        if not np.isfinite(s).all():
            raise NumericError(f"non-finite state in layer {k}")
    if y_target is not None and not np.isfinite(np.asarray(y_target)).all():
        raise NumericError("non-finite target")
    if beta is not None and not np.isfinite(np.asarray(beta)).all():
        raise NumericError("non-finite beta")


def _rho_units(x, state):
    """Firing rates for all layers u_0..u_N, with u_0 = x."""
    return [hard_sigmoid(np.asarray(x))] + [hard_sigmoid(s) for s in state]


def energy(params, x, state):
    """Hopfield energy E = 1/2 sum s_i^2 - sum_k rho(u_{k-1})' W_k rho(u_k) - sum_k b_k' rho(s_k).

    Terms that involve only the clamped input (its square and any input bias)
    are constant in both the state and the learned parameters, so they are
    dropped.
    """
    _check_args(params, x, state)
    rho = _rho_units(x, state)
    e = 0.0
    for s in state:
        e = e + 0.5 * np.sum(np.square(s), axis=-1)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        e = e - np.einsum("...i,ij,...j->...", rho[k], w, rho[k + 1])
        e = e - rho[k + 1] @ b
    return e


def cost(state, y_target):
    """Quadratic mismatch C = 1/2 ||y - y_target||^2 on the output layer."""
    y = np.asarray(state[-1])
    t = np.asarray(y_target)
    if y.shape[-1] != t.shape[-1]:
        raise DimensionError(f"output size {y.shape[-1]} != target size {t.shape[-1]}")
    d = y - t
    return 0.5 * np.sum(np.square(d), axis=-1)


def total_energy(params, x, state, beta, y_target):
    """Total energy F = E + beta * C."""
    if y_target is None:
        return energy(params, x, state)
    return energy(params, x, state) + np.asarray(beta) * cost(state, y_target)


def force(params, x, state, beta=0.0, y_target=None):
    """-dF/ds for every state unit, returned layer by layer.

    Each unit feels a leak -s_i plus, gated by rho'(s_i), the synaptic
    pressure from its neighbours and its bias; output units additionally feel
    beta * (target - y).
    """
    _check_args(params, x, state, y_target, beta)
    rho = _rho_units(x, state)
    n = len(state)
    out = []
    for k in range(n):
        pressure = rho[k] @ params.weights[k] + params.biases[k]
        if k + 1 < n:
            pressure = pressure + rho[k + 2] @ params.weights[k + 1].T
        f = hard_sigmoid_prime(state[k]) * pressure - state[k]
        out.append(f)
    if y_target is not None:
        b = np.asarray(beta)
        if b.ndim:
            b = b[..., None]
        out[-1] = out[-1] + b * (np.asarray(y_target) - state[-1])
    return out


def grad_theta(params, x, state, y_target=None):
    """dF/dtheta at a given state: dF/dW_k = -rho(u_{k-1}) rho(u_k)^T, dF/db_k = -rho(s_k).

    These do not depend on beta (the nudging potential is parameter-free);
    dF/dbeta equals the cost and is filled in when a target is supplied.
    """
    _check_args(params, x, state, y_target)
    rho = _rho_units(x, state)
    dW = [
        -np.einsum("...i,...j->...ij", rho[k], rho[k + 1])
        for k in range(len(params.weights))
    ]
    db = [-rho[k + 1] for k in range(len(params.biases))]
    dbeta = cost(state, y_target) if y_target is not None else None
    return ParamGrads(dW=dW, db=db, dbeta=dbeta)
