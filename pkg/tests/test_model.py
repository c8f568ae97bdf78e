import numpy as np
import numpy.testing as npt
import pytest

from eqprop import (
    DimensionError,
    LayeredParams,
    NumericError,
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


def tiny_params():
    # 1 input -> 1 output, W = 0.8, b = 0.1
    return LayeredParams([np.array([[0.8]])], [np.array([0.1])])


def random_net(rng, sizes=(3, 4, 2), scale=0.5):
    weights = [scale * rng.standard_normal((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [scale * rng.standard_normal(b) for b in sizes[1:]]
    return LayeredParams(weights, biases)


def random_state(rng, topo, lo=0.05, hi=0.95):
    return [rng.uniform(lo, hi, d) for d in topo.state_sizes]


class TestHardSigmoid:
    def test_values(self):
        v = np.array([-1.0, 0.0, 0.25, 1.0, 1.5])
        npt.assert_array_equal(hard_sigmoid(v), [0.0, 0.0, 0.25, 1.0, 1.0])

    def test_derivative_closed_interval(self):
        v = np.array([-0.1, 0.0, 0.5, 1.0, 1.1])
        npt.assert_array_equal(hard_sigmoid_prime(v), [0.0, 1.0, 1.0, 1.0, 0.0])


class TestEnergy:
    def test_zero_state_zero_bias_vanishes(self):
        rng = np.random.default_rng(0)
        params = LayeredParams(
            [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))],
            [np.zeros(4), np.zeros(2)],
        )
        topo = params.topology
        x = rng.uniform(0, 1, 3)
        assert energy(params, x, zeros_state(topo)) == 0.0

    def test_hand_computed_value(self):
        # 0.5*0.25 - 0.8*1.0*0.5 - 0.1*0.5
        e = energy(tiny_params(), np.array([1.0]), [np.array([0.5])])
        assert e == pytest.approx(-0.325, abs=1e-15)

    def test_affine_in_weights(self):
        rng = np.random.default_rng(1)
        params = random_net(rng)
        topo = params.topology
        x = rng.uniform(0, 1, 3)
        s = random_state(rng, topo)
        e1 = energy(params, x, s)
        for c in (2.0, -1.0, 0.5):
            scaled = LayeredParams([c * w for w in params.weights], params.biases)
            ec = energy(scaled, x, s)
            # E(cW) - E(W) = (c - 1) * (coupling term), and the coupling term
            # is E(W at zero bias, zero squared term)... simpler: affinity means
            # E(cW) = c*E(W) + (1-c)*E(0*W)
            e0 = energy(
                LayeredParams([0.0 * w for w in params.weights], params.biases), x, s
            )
            npt.assert_allclose(ec, c * e1 + (1 - c) * e0, rtol=1e-13, atol=1e-13)

    def test_shape_mismatch_raises(self):
        params = tiny_params()
        with pytest.raises(DimensionError):
            energy(params, np.array([1.0, 2.0]), [np.array([0.5])])
        with pytest.raises(DimensionError):
            energy(params, np.array([1.0]), [np.array([0.5, 0.5])])

    def test_non_finite_raises(self):
        params = tiny_params()
        with pytest.raises(NumericError):
            energy(params, np.array([np.nan]), [np.array([0.5])])
        with pytest.raises(NumericError):
            energy(params, np.array([1.0]), [np.array([np.inf])])


class TestCost:
    def test_identity_is_zero(self):
        s = [np.array([0.3, 0.9])]
        assert cost(s, np.array([0.3, 0.9])) == 0.0

    def test_unit_mismatch(self):
        assert cost([np.array([1.0, 0.0])], np.array([0.0, 1.0])) == pytest.approx(1.0)

    def test_hand_computed(self):
        c = cost([np.array([0.3, 0.7])], np.array([0.0, 1.0]))
        assert c == pytest.approx(0.09, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            cost([np.array([0.3, 0.7])], np.array([1.0]))


class TestTotalEnergy:
    def test_beta_zero_is_energy(self):
        rng = np.random.default_rng(2)
        params = random_net(rng)
        x = rng.uniform(0, 1, 3)
        s = random_state(rng, params.topology)
        t = rng.uniform(0, 1, 2)
        assert total_energy(params, x, s, 0.0, t) == energy(params, x, s)

    def test_hand_computed_composition(self):
        # [1, 2] net: E = 0.5*(0.25+0.49) - 0.8*1*0.5 - 0.1*0.5 = -0.08
        params = LayeredParams([np.array([[0.8, 0.0]])], [np.array([0.1, 0.0])])
        x = np.array([1.0])
        s = [np.array([0.5, 0.7])]
        t = np.array([0.0, 1.0])
        assert energy(params, x, s) == pytest.approx(-0.08, abs=1e-15)
        assert cost(s, t) == pytest.approx(0.17, abs=1e-15)
        assert total_energy(params, x, s, 1.0, t) == pytest.approx(0.09, abs=1e-15)

    def test_affine_in_beta(self):
        rng = np.random.default_rng(3)
        params = random_net(rng)
        x = rng.uniform(0, 1, 3)
        s = random_state(rng, params.topology)
        t = rng.uniform(0, 1, 2)
        c = cost(s, t)
        for b1, b2 in ((0.0, 1.0), (-0.5, 2.0), (1e-4, 3.0)):
            lhs = total_energy(params, x, s, b1, t) - total_energy(params, x, s, b2, t)
            npt.assert_allclose(lhs, (b1 - b2) * c, rtol=1e-12, atol=1e-14)


class TestForce:
    def test_saturated_unit_feels_pure_leak(self):
        rng = np.random.default_rng(4)
        params = random_net(rng)
        topo = params.topology
        x = rng.uniform(0, 1, 3)
        s = random_state(rng, topo)
        s[0][0] = 1.5
        f = force(params, x, s)
        assert f[0][0] == pytest.approx(-1.5, abs=1e-15)

    def test_negative_unit_leaks_back_towards_rest(self):
        # below zero the gate shuts and only the leak acts: force = -s = +0.2
        rng = np.random.default_rng(5)
        params = random_net(rng)
        x = rng.uniform(0, 1, 3)
        s = random_state(rng, params.topology)
        s[0][1] = -0.2
        f = force(params, x, s)
        assert f[0][1] == pytest.approx(0.2, abs=1e-15)

    def test_output_nudging_term(self):
        rng = np.random.default_rng(6)
        params = random_net(rng)
        x = rng.uniform(0, 1, 3)
        s = random_state(rng, params.topology)
        s[-1][0] = 0.4
        t = np.array([1.0, 0.3])
        free = force(params, x, s, 0.0, t)
        clamped = force(params, x, s, 1.0, t)
        npt.assert_allclose(clamped[-1] - free[-1], t - s[-1], atol=1e-15)
        assert clamped[-1][0] - free[-1][0] == pytest.approx(0.6, abs=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_difference_of_total_energy(self, seed):
        rng = np.random.default_rng(seed)
        params = random_net(rng)
        topo = params.topology
        x = rng.uniform(0, 1, 3)
        # include saturated and negative units, but keep away from the kinks
        s = [rng.uniform(-0.4, 1.4, d) for d in topo.state_sizes]
        for layer in s:
            layer[np.abs(layer) < 0.02] += 0.05
            layer[np.abs(layer - 1.0) < 0.02] += 0.05
        beta = rng.uniform(-1, 1)
        t = rng.uniform(0, 1, topo.output_size)
        f = force(params, x, s, beta, t)
        h = 1e-6
        for k in range(topo.n_layers):
            for i in range(topo.state_sizes[k]):
                sp = [v.copy() for v in s]
                sm = [v.copy() for v in s]
                sp[k][i] += h
                sm[k][i] -= h
                fd = (
                    total_energy(params, x, sp, beta, t)
                    - total_energy(params, x, sm, beta, t)
                ) / (2 * h)
                assert -fd == pytest.approx(f[k][i], abs=1e-6)

    def test_descent_direction(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            params = random_net(rng)
            topo = params.topology
            x = rng.uniform(0, 1, 3)
            s = random_state(rng, topo)
            beta = rng.uniform(0, 1)
            t = rng.uniform(0, 1, topo.output_size)
            f = force(params, x, s, beta, t)
            norm = np.sqrt(sum(np.sum(v**2) for v in f))
            if norm <= 1e-8:
                continue
            nudge = [v + 1e-5 * g for v, g in zip(s, f)]
            assert total_energy(params, x, nudge, beta, t) < total_energy(
                params, x, s, beta, t
            )


class TestGradTheta:
    def test_zero_state_gives_zero_grads(self):
        rng = np.random.default_rng(8)
        params = random_net(rng)
        topo = params.topology
        g = grad_theta(params, np.zeros(3), zeros_state(topo))
        for dw in g.dW:
            npt.assert_array_equal(dw, 0.0)
        for db in g.db:
            npt.assert_array_equal(db, 0.0)

    def test_outer_product_form(self):
        params = LayeredParams([np.zeros((2, 1))], [np.zeros(1)])
        g = grad_theta(params, np.array([1.0, 0.0]), [np.array([0.5])])
        npt.assert_array_equal(g.dW[0], [[-0.5], [0.0]])
        npt.assert_array_equal(g.db[0], [-0.5])

    def test_dbeta_equals_cost(self):
        rng = np.random.default_rng(9)
        params = random_net(rng)
        topo = params.topology
        x = rng.uniform(0, 1, 3)
        s = random_state(rng, topo)
        t = rng.uniform(0, 1, topo.output_size)
        g = grad_theta(params, x, s, t)
        assert g.dbeta == cost(s, t)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_finite_difference(self, seed):
        rng = np.random.default_rng(100 + seed)
        params = random_net(rng)
        topo = params.topology
        x = rng.uniform(0.05, 0.95, 3)
        s = random_state(rng, topo)
        beta = rng.uniform(-1, 1)
        t = rng.uniform(0, 1, topo.output_size)
        g = grad_theta(params, x, s, t)
        h = 1e-6
        for k, w in enumerate(params.weights):
            for idx in np.ndindex(w.shape):
                wp = [a.copy() for a in params.weights]
                wm = [a.copy() for a in params.weights]
                wp[k][idx] += h
                wm[k][idx] -= h
                fd = (
                    total_energy(LayeredParams(wp, params.biases), x, s, beta, t)
                    - total_energy(LayeredParams(wm, params.biases), x, s, beta, t)
                ) / (2 * h)
                assert fd == pytest.approx(g.dW[k][idx], abs=1e-6)
        for k, b in enumerate(params.biases):
            for idx in np.ndindex(b.shape):
                bp = [a.copy() for a in params.biases]
                bm = [a.copy() for a in params.biases]
                bp[k][idx] += h
                bm[k][idx] -= h
                fd = (
                    total_energy(LayeredParams(params.weights, bp), x, s, beta, t)
                    - total_energy(LayeredParams(params.weights, bm), x, s, beta, t)
                ) / (2 * h)
                assert fd == pytest.approx(g.db[k][idx], abs=1e-6)


class TestBatchedSemantics:
    def test_batched_matches_loop(self):
        rng = np.random.default_rng(11)
        params = random_net(rng)
        topo = params.topology
        xs = rng.uniform(0, 1, (4, 3))
        states = [rng.uniform(0, 1, (4, d)) for d in topo.state_sizes]
        ts = rng.uniform(0, 1, (4, topo.output_size))
        betas = rng.uniform(-1, 1, 4)
        e_batch = energy(params, xs, states)
        f_batch = force(params, xs, states, betas, ts)
        for i in range(4):
            s_i = [layer[i] for layer in states]
            npt.assert_allclose(e_batch[i], energy(params, xs[i], s_i), rtol=1e-14)
            f_i = force(params, xs[i], s_i, betas[i], ts[i])
            for k in range(topo.n_layers):
                npt.assert_allclose(f_batch[k][i], f_i[k], rtol=1e-13, atol=1e-15)


class TestTopologyAndParams:
    def test_topology_validation(self):
        with pytest.raises(DimensionError):
            Topology((5,))
        with pytest.raises(DimensionError):
            Topology((5, 0, 2))
        topo = Topology((6, 5, 4))
        assert topo.n_layers == 2
        assert topo.state_dim == 9

    def test_params_validation(self):
        with pytest.raises(DimensionError):
            LayeredParams([np.zeros((2, 3))], [np.zeros(2)])
        with pytest.raises(DimensionError):
            LayeredParams([np.zeros((2, 3)), np.zeros((4, 1))], [np.zeros(3), np.zeros(1)])
        with pytest.raises(NumericError):
            LayeredParams([np.array([[np.inf]])], [np.zeros(1)])

    def test_params_topology_round_trip(self):
        rng = np.random.default_rng(12)
        params = random_net(rng, sizes=(7, 3, 5))
        assert params.topology.layer_sizes == (7, 3, 5)
