import numpy as np
import numpy.testing as npt
import pytest

from eqprop import (
    LayeredParams,
    NumericError,
    PhaseConfig,
    RelaxationError,
    Topology,
    energy,
    projected_residual,
    relax,
    settle,
    step,
    zeros_state,
)
from eqprop.oracles import sample_interior_instance
from eqprop.relaxation import record_trajectory


def leak_only_params(sizes=(1, 1), bias=0.0):
    weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    if bias:
        biases[0] = biases[0] + bias
    return LayeredParams(weights, biases)


def random_net(rng, sizes=(3, 4, 2), scale=0.4):
    weights = [scale * rng.standard_normal((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [scale * rng.standard_normal(b) for b in sizes[1:]]
    return LayeredParams(weights, biases)


class TestStep:
    def test_negative_unit_clips_to_zero(self):
        # pure leak from -0.2: raw update -0.2 + 0.5*0.2 = -0.1, clipped to 0
        params = leak_only_params()
        new = step([np.array([-0.2])], params, np.array([0.0]), epsilon=0.5)
        assert new[0][0] == 0.0

    def test_clipping_beats_unclipped_stall(self):
        # the unclipped rule h <- (1 - eps) h keeps a negative unit negative;
        # the clipped rule must park it at the box edge instead
        h = -0.2
        eps = 0.5
        unclipped = (1 - eps) * h
        assert unclipped < 0.0
        params = leak_only_params()
        new = step([np.array([h])], params, np.array([0.0]), epsilon=eps)
        assert new[0][0] >= 0.0

    def test_exact_fixed_point_is_unchanged(self):
        params = leak_only_params(bias=-0.3)
        state = [np.array([0.0])]
        assert projected_residual(state, params, np.array([0.0])) == 0.0
        new = step(state, params, np.array([0.0]), epsilon=0.5)
        assert new[0][0] == state[0][0]

    def test_constructed_interior_fixed_point_is_stationary(self):
        rng = np.random.default_rng(0)
        params, x, _, s0 = sample_interior_instance((3, 4, 2), rng)
        new = step(s0, params, x, epsilon=0.5)
        for a, b in zip(new, s0):
            npt.assert_allclose(a, b, atol=1e-14)

    def test_state_stays_boxed(self):
        rng = np.random.default_rng(1)
        params = random_net(rng)
        topo = params.topology
        x = rng.uniform(0, 1, 3)
        s = [rng.uniform(-2, 3, d) for d in topo.state_sizes]
        for _ in range(30):
            s = step(s, params, x, epsilon=0.9)
            for layer in s:
                assert layer.min() >= 0.0 and layer.max() <= 1.0


class TestProjectedResidual:
    def test_outward_force_at_floor_ignored(self):
        params = leak_only_params(bias=-0.3)
        assert projected_residual([np.array([0.0])], params, np.array([0.0])) == 0.0

    def test_inward_force_at_floor_counts(self):
        params = leak_only_params(bias=0.3)
        r = projected_residual([np.array([0.0])], params, np.array([0.0]))
        assert r == pytest.approx(0.3, abs=1e-15)

    def test_outward_force_at_ceiling_ignored(self):
        params = leak_only_params(bias=2.5)
        # at s = 1: force = 2.5 - 1 = 1.5 outward -> absorbed
        assert projected_residual([np.array([1.0])], params, np.array([0.0])) == 0.0

    def test_interior_fixed_point_zero(self):
        rng = np.random.default_rng(2)
        params, x, _, s0 = sample_interior_instance((4, 3, 2), rng)
        assert projected_residual(s0, params, x) < 1e-13


class TestRelax:
    def test_pure_leak_decays_to_rest(self):
        params = leak_only_params(sizes=(1, 2, 1))
        phase = PhaseConfig(beta=0.0, epsilon=0.5, max_iters=200, residual_tol=1e-12)
        res = relax([np.array([0.8, 0.3]), np.array([0.6])], params, np.array([0.5]), None, phase)
        for layer in res.state:
            npt.assert_allclose(layer, 0.0, atol=1e-11)
        assert res.residual <= 1e-12
        assert res.iterations < 200

    def test_fixed_budget_runs_exactly_max_iters(self):
        rng = np.random.default_rng(3)
        params = random_net(rng)
        phase = PhaseConfig(beta=0.0, epsilon=0.5, max_iters=17, residual_tol=0.0)
        res = relax(zeros_state(params.topology), params, rng.uniform(0, 1, 3), None, phase)
        assert res.iterations == 17

    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(4)
        params = random_net(rng)
        x = rng.uniform(0, 1, 3)
        t = rng.uniform(0, 1, 2)
        phase = PhaseConfig(beta=0.7, epsilon=0.5, max_iters=50, residual_tol=0.0)
        s0 = [rng.uniform(0, 1, d) for d in params.topology.state_sizes]
        r1 = relax(s0, params, x, t, phase)
        r2 = relax(s0, params, x, t, phase)
        for a, b in zip(r1.state, r2.state):
            npt.assert_array_equal(a, b)
        assert r1.energy == r2.energy and r1.cost == r2.cost

    def test_relax_equals_iterated_step(self):
        rng = np.random.default_rng(5)
        params = random_net(rng)
        x = rng.uniform(0, 1, 3)
        t = rng.uniform(0, 1, 2)
        s = [rng.uniform(0, 1, d) for d in params.topology.state_sizes]
        phase = PhaseConfig(beta=0.3, epsilon=0.5, max_iters=9, residual_tol=0.0)
        res = relax(s, params, x, t, phase)
        manual = [v.copy() for v in s]
        for _ in range(9):
            manual = step(manual, params, x, 0.3, t, 0.5)
        for a, b in zip(res.state, manual):
            npt.assert_array_equal(a, b)

    def test_energy_non_increasing_on_interior_trajectories(self):
        rng = np.random.default_rng(6)
        kept = 0
        while kept < 5:
            params, x, _, s0 = sample_interior_instance((3, 3, 2), rng)
            s = [np.clip(v + rng.uniform(-0.1, 0.1, v.shape), 0.05, 0.95) for v in s0]
            energies = [energy(params, x, s)]
            interior = True
            for _ in range(40):
                s = step(s, params, x, epsilon=0.5)
                if min(v.min() for v in s) <= 0.0 or max(v.max() for v in s) >= 1.0:
                    interior = False
                    break
                energies.append(energy(params, x, s))
            if not interior:
                continue
            kept += 1
            diffs = np.diff(energies)
            assert (diffs <= 1e-12).all()

    def test_settle_raises_on_budget_exhaustion(self):
        rng = np.random.default_rng(7)
        params = random_net(rng)
        phase = PhaseConfig(beta=0.0, epsilon=0.5, max_iters=2, residual_tol=1e-14)
        with pytest.raises(RelaxationError) as info:
            settle(zeros_state(params.topology), params, rng.uniform(0, 1, 3), None, phase)
        assert info.value.residual > 1e-14

    def test_non_finite_state_raises(self):
        params = leak_only_params()
        phase = PhaseConfig(max_iters=3)
        with pytest.raises(NumericError):
            relax([np.array([np.nan])], params, np.array([0.2]), None, phase)


class TestRecordTrajectory:
    def test_length_and_start(self):
        rng = np.random.default_rng(8)
        params = random_net(rng)
        x = rng.uniform(0, 1, 3)
        s0 = [rng.uniform(0, 1, d) for d in params.topology.state_sizes]
        traj = record_trajectory(s0, params, x, 0.5, rng.uniform(0, 1, 2), 0.5, 7)
        assert len(traj) == 8
        for a, b in zip(traj[0], s0):
            npt.assert_array_equal(a, b)


class TestPhaseConfig:
    def test_oracle_defaults(self):
        phase = PhaseConfig.oracle(beta=-0.25)
        assert phase.beta == -0.25
        assert phase.epsilon == 0.5
        assert phase.max_iters == 10**6
        assert phase.residual_tol == 1e-12

    def test_validation(self):
        from eqprop import ConfigError

        with pytest.raises(ConfigError):
            PhaseConfig(epsilon=0.0)
        with pytest.raises(ConfigError):
            PhaseConfig(epsilon=1.5)
        with pytest.raises(ConfigError):
            PhaseConfig(max_iters=0)
        with pytest.raises(ConfigError):
            PhaseConfig(residual_tol=-1e-9)
