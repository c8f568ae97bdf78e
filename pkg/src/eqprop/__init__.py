"""Equilibrium propagation for continuous Hopfield networks.

Core pieces: an energy model over a layered symmetric topology (model),
clipped relaxation to fixed points (relaxation), the two-phase contrastive
training loop (training), independent gradient oracles (oracles), a
Langevin/Boltzmann extension (stochastic), IDX data handling (mnist), and a
CLI harness (cli) with binary checkpoints (checkpoint).
"""

from .exceptions import (
    BoundaryError,
    ConfigError,
    DataError,
    DimensionError,
    EqPropError,
    FormatError,
    NumericError,
    RelaxationError,
)
from .model import (
    LayeredParams,
    ParamGrads,
    PhaseConfig,
    Topology,
    cost,
    energy,
    force,
    grad_theta,
    hard_sigmoid,
    hard_sigmoid_prime,
    total_energy,
    zeros_state,
)
from .oracles import (
    GradEstimate,
    chl_update,
    eqprop_grad,
    fd_objective_grad,
    lemma1_check,
    prop1_check,
    rbp_grad,
    sample_interior_instance,
    stdp_integral_check,
)
from .relaxation import FixedPointResult, projected_residual, relax, settle, step
from .stochastic import (
    LangevinConfig,
    QuadratureGrid,
    boltzmann_expectation,
    langevin_step,
    langevin_trajectory,
    prop2_check,
    theorem2_check,
)
from .training import (
    MetricsRecord,
    ParticleStore,
    TrainConfig,
    eqprop_update,
    error_rate,
    init_params,
    predict,
    train,
    train_minibatch,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
