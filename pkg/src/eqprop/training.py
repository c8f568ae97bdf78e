"""Two-phase contrastive training loop.

Each update runs a free relaxation (no nudging) and a short nudged
relaxation started from the free fixed point, then moves every weight
proportionally to the change in the pairwise firing products between the
two fixed points, scaled by 1/beta. Free fixed points are cached per
training example ("persistent particles") and reused to warm-start the next
epoch's free phase; the nudging sign is drawn per example when enabled.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import mnist, model, relaxation
from .exceptions import ConfigError, DimensionError
from .model import LayeredParams, PhaseConfig, Topology

DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass
class TrainConfig:
    """Hyperparameters of the two-phase loop.

    learning_rates has one entry per weight layer. random_beta_sign flips the
    nudging direction per example per update; the 1/beta factor keeps the
    updates consistent either way.
    """

    beta_magnitude: float = 1.0
    random_beta_sign: bool = True
    epsilon: float = 0.5
    free_iters: int = 20
    clamped_iters: int = 4
    learning_rates: tuple = (0.1, 0.05)
    minibatch_size: int = 20
    epochs: int = 1
    rng_seed: int = 0
    precision: str = "f64"

    def __post_init__(self):
        if self.beta_magnitude <= 0.0:
            raise ConfigError(f"beta_magnitude must be positive, got {self.beta_magnitude}")
        if self.precision not in DTYPES:
            raise ConfigError(f"precision must be 'f32' or 'f64', got {self.precision!r}")
        if self.free_iters < 1 or self.clamped_iters < 1:
            raise ConfigError("iteration counts must be >= 1")
        if any(a <= 0 for a in self.learning_rates):
            raise ConfigError("learning rates must be positive")

    @property
    def dtype(self):
        return DTYPES[self.precision]


@dataclass
class MetricsRecord:
    """One epoch of training diagnostics."""

    epoch: int
    train_error_rate: float
    val_error_rate: float
    mean_energy: float
    mean_cost: float
    wall_seconds: float


class ParticleStore:
    """Cached free fixed points, one slot per training example index.

    Slots start at the resting state (all zeros) and are overwritten with the
    latest free-phase result after each visit. Batch reads/writes never alias
    because example indices within a minibatch are distinct.
    """

    def __init__(self, indices, topology, dtype=np.float64):
        self._index = np.sort(np.asarray(indices, dtype=np.int64))
        if self._index.size and np.any(np.diff(self._index) == 0):
            raise ConfigError("duplicate example indices in particle store")
        self._layers = [
            np.zeros((self._index.size, d), dtype=dtype) for d in topology.state_sizes
        ]
        self._visited = np.zeros(self._index.size, dtype=bool)

    def __len__(self):
        return int(self._visited.sum())

    def _rows(self, example_indices):
        rows = np.searchsorted(self._index, example_indices)
        if np.any(rows >= self._index.size) or np.any(self._index[rows] != example_indices):
            raise ConfigError("example index not covered by this store")
        return rows

    def get_batch(self, example_indices):
        rows = self._rows(np.asarray(example_indices))
        return [layer[rows].copy() for layer in self._layers]

    def put_batch(self, example_indices, state):
        rows = self._rows(np.asarray(example_indices))
        for layer, s in zip(self._layers, state):
            layer[rows] = s
        self._visited[rows] = True


def init_params(topology, rng_seed, dtype=np.float64):
    """Glorot-uniform weights, zero biases; bitwise reproducible per seed."""
    topo = topology if isinstance(topology, Topology) else Topology(tuple(topology))
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for a, b in zip(topo.layer_sizes[:-1], topo.layer_sizes[1:]):
        bound = np.sqrt(6.0 / (a + b))
        weights.append(rng.uniform(-bound, bound, size=(a, b)).astype(dtype))
        biases.append(np.zeros(b, dtype=dtype))
    return LayeredParams(weights, biases)


def _as_batch(arr, width):
    arr = np.asarray(arr)
    if arr.ndim == 1:
        if arr.shape[0] != width:
            raise DimensionError(f"expected width {width}, got {arr.shape[0]}")
        return arr[None, :], True
    return arr, False


def _two_phase(params, x, y_target, state0, beta, config):
    """Batched free + nudged phases; returns per-layer deltas and both results.

    beta is one signed value per example. Deltas already include the
    per-layer learning rates and the 1/beta factor, averaged over the batch.
    """
    n = len(params.weights)
    if len(config.learning_rates) != n:
        raise ConfigError(
            f"{len(config.learning_rates)} learning rates for {n} weight layers"
        )
    free_phase = PhaseConfig(
        beta=0.0, epsilon=config.epsilon, max_iters=config.free_iters, residual_tol=0.0
    )
    clamped_phase = PhaseConfig(
        beta=0.0, epsilon=config.epsilon, max_iters=config.clamped_iters, residual_tol=0.0
    )
    free = relaxation.relax(state0, params, x, y_target, free_phase)
    # PhaseConfig holds a scalar beta; the per-example vector goes to relax via
    # a dedicated nudged run below.
    nudged = _relax_vector_beta(free.state, params, x, y_target, beta, clamped_phase)

    rho_x = model.hard_sigmoid(x)
    rho_free = [rho_x] + [model.hard_sigmoid(s) for s in free.state]
    rho_nudged = [rho_x] + [model.hard_sigmoid(s) for s in nudged.state]
    inv_beta = (1.0 / beta).astype(x.dtype)
    batch = x.shape[0]
    d_w, d_b = [], []
    for k in range(n):
        alpha = config.learning_rates[k] / batch
        hi = (rho_nudged[k] * inv_beta[:, None]).T @ rho_nudged[k + 1]
        lo = (rho_free[k] * inv_beta[:, None]).T @ rho_free[k + 1]
        d_w.append(alpha * (hi - lo))
        d_b.append(alpha * (inv_beta @ (rho_nudged[k + 1] - rho_free[k + 1])))
    return d_w, d_b, free, nudged


def _relax_vector_beta(state, params, x, y_target, beta, phase):
    """relax() with a per-example beta vector (fixed budget, no early stop)."""
    s = model.copy_state(state)
    for _ in range(phase.max_iters):
        forces = model.force(params, x, s, beta, y_target)
        for k in range(len(s)):
            s[k] = np.clip(s[k] + phase.epsilon * forces[k], 0.0, 1.0)
    e = model.energy(params, x, s)
    c = model.cost(s, y_target)
    return relaxation.FixedPointResult(
        state=s, residual=float("nan"), iterations=phase.max_iters, energy=e, cost=c
    )


def eqprop_update(params, x, y_target, state0, config, rng=None, beta=None):
    """Deltas for one example (or one batch), without applying them.

    The free phase starts from state0; the nudged phase starts from the free
    fixed point with beta = +/- beta_magnitude, the sign drawn per example
    from rng when random_beta_sign is set. Pass beta explicitly to pin it.
    Returns ((dW, db), free_result, nudged_result).
    """
    x, single = _as_batch(x, params.topology.input_size)
    y_target, _ = _as_batch(y_target, params.topology.output_size)
    state0 = [np.asarray(s) for s in state0]
    state0 = [s[None, :] if s.ndim == 1 else s for s in state0]
    batch = x.shape[0]
    if beta is None:
        if config.random_beta_sign:
            if rng is None:
                rng = np.random.default_rng(config.rng_seed)
            sign = rng.integers(0, 2, size=batch) * 2.0 - 1.0
        else:
            sign = np.ones(batch)
        beta_vec = sign * config.beta_magnitude
    else:
        beta_vec = np.broadcast_to(np.asarray(beta, dtype=float), (batch,)).copy()
        if np.any(beta_vec == 0.0):
            raise ConfigError("beta must be nonzero")
    d_w, d_b, free, nudged = _two_phase(params, x, y_target, state0, beta_vec, config)
    if single:
        for res in (free, nudged):
            res.state = [s[0] for s in res.state]
            res.energy = float(res.energy)
            res.cost = float(res.cost)
    return (d_w, d_b), free, nudged


def train_minibatch(params, x_batch, y_batch, example_indices, store, config, rng=None):
    """One parameter update from a minibatch; mutates params in place.

    Free phases warm-start from the particle store (resting state on first
    visit); the mean delta is applied once, and each example's free fixed
    point is written back. Returns per-example free-phase diagnostics.
    """
    state0 = store.get_batch(example_indices)
    (d_w, d_b), free, _ = eqprop_update(params, x_batch, y_batch, state0, config, rng=rng)
    for k in range(len(params.weights)):
        params.weights[k] += d_w[k]
        params.biases[k] += d_b[k]
    store.put_batch(example_indices, free.state)
    return {"energy": np.asarray(free.energy), "cost": np.asarray(free.cost)}


def predict(params, x, config, state0=None):
    """Class index of the largest output after a free relaxation from rest.

    Ties break to the lowest index. Batched inputs give an index per row.
    """
    x = np.asarray(x)
    batched = x.ndim > 1
    topo = params.topology
    if state0 is None:
        state0 = model.zeros_state(topo, batch_shape=x.shape[:-1], dtype=x.dtype)
    phase = PhaseConfig(
        beta=0.0, epsilon=config.epsilon, max_iters=config.free_iters, residual_tol=0.0
    )
    res = relaxation.relax(state0, params, x, None, phase)
    out = np.argmax(res.state[-1], axis=-1)
    return out if batched else int(out)


def error_rate(params, images, labels, config, eval_batch=256):
    """Fraction of examples whose prediction differs from the label."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    wrong = 0
    for at in range(0, labels.size, eval_batch):
        chunk = images[at : at + eval_batch]
        pred = predict(params, chunk, config)
        wrong += int(np.sum(pred != labels[at : at + eval_batch]))
    return wrong / labels.size


def train(
    params,
    dataset,
    config,
    sink=None,
    train_indices=None,
    val_indices=None,
    checkpoint_fn=None,
    start_epoch=0,
):
    """Epoch loop over seeded shuffled minibatches.

    Emits one MetricsRecord per epoch to sink and to the returned history;
    checkpoint_fn(params, epoch) runs after each epoch when given. The free
    fixed-point energy/cost means are accumulated over the epoch's updates.
    Returns (params, history). Deterministic given config.rng_seed.
    """
    dtype = config.dtype
    params = params.astype(dtype)
    if train_indices is None:
        train_indices = dataset.train_indices
    train_indices = np.sort(np.asarray(train_indices, dtype=np.int64))
    if val_indices is None:
        val_indices = dataset.val_indices
    store = ParticleStore(train_indices, params.topology, dtype=dtype)
    images = dataset.images.astype(dtype, copy=False)
    targets = mnist.one_hot(dataset.labels, params.topology.output_size, dtype=dtype)
    history = []
    for epoch in range(start_epoch, config.epochs):
        t0 = time.perf_counter()
        sign_rng = np.random.default_rng([config.rng_seed & 0xFFFFFFFFFFFFFFFF, epoch, 1])
        energy_sum, cost_sum, seen = 0.0, 0.0, 0
        for batch_idx in mnist.minibatches(
            train_indices, config.minibatch_size, config.rng_seed, epoch
        ):
            diag = train_minibatch(
                params,
                images[batch_idx],
                targets[batch_idx],
                batch_idx,
                store,
                config,
                rng=sign_rng,
            )
            energy_sum += float(np.sum(diag["energy"]))
            cost_sum += float(np.sum(diag["cost"]))
            seen += batch_idx.size
        train_err = error_rate(params, images[train_indices], dataset.labels[train_indices], config)
        val_err = (
            error_rate(params, images[val_indices], dataset.labels[val_indices], config)
            if len(val_indices)
            else 0.0
        )
        record = MetricsRecord(
            epoch=epoch,
            train_error_rate=train_err,
            val_error_rate=val_err,
            mean_energy=energy_sum / max(seen, 1),
            mean_cost=cost_sum / max(seen, 1),
            wall_seconds=time.perf_counter() - t0,
        )
        history.append(record)
        if sink is not None:
            sink(record)
        if checkpoint_fn is not None:
            checkpoint_fn(params, epoch)
    return params, history
