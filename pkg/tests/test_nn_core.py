"""Layers, networks, optimizer and schedules."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from engine.errors import ConfigError, DimensionError, NumericError, StateError
from engine.nn_core.layers import LinearLayer
from engine.nn_core.network import MlpNetwork, Topology
from engine.nn_core.optim import SgdState, sgd_step
from engine.nn_core.schedules import constant_lr, cosine_lr, get_lr_schedule


def _weighted_output(net: MlpNetwork, x: np.ndarray, weights: np.ndarray) -> float:
    return float(np.mean(np.sum(net.forward(x, cache=False) * weights, axis=1)))


class TestLinearLayer:
    def test_forward_is_affine(self):
        layer = LinearLayer(np.array([[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]]), np.array([0.5, 0.0, -1.0]))
        out = layer.forward(np.array([[1.0, 1.0]]))
        assert_allclose(out, [[3.5, -1.0, 2.5]])

    def test_wrong_input_width(self):
        layer = LinearLayer.initialize(3, 2, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            layer.forward(np.zeros((4, 5)))

    def test_backward_before_forward(self):
        layer = LinearLayer.initialize(3, 2, np.random.default_rng(0))
        with pytest.raises(StateError):
            layer.backward(np.zeros((1, 2)))

    def test_weight_shape_is_fixed(self):
        layer = LinearLayer.initialize(3, 2, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            layer.weight = np.zeros((3, 3))


class TestMlpNetwork:
    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_gradients_match_finite_differences(self, activation):
        rng = np.random.default_rng(1)
        net = MlpNetwork.initialize(Topology((4, 6, 3), activation), rng)
        x = rng.standard_normal((5, 4))
        weights = rng.standard_normal((5, 3))

        net.forward(x)
        grads = net.backward(weights).params

        eps = 1e-6
        for key, param in net.named_parameters().items():
            numeric = np.zeros_like(param)
            for index in np.ndindex(param.shape):
                original = param[index]
                param[index] = original + eps
                up = _weighted_output(net, x, weights)
                param[index] = original - eps
                down = _weighted_output(net, x, weights)
                param[index] = original
                numeric[index] = (up - down) / (2 * eps)
            assert_allclose(grads[key], numeric, rtol=1e-5, atol=1e-8, err_msg=key)

    def test_input_gradient(self):
        rng = np.random.default_rng(2)
        net = MlpNetwork.initialize(Topology((3, 4, 2), "tanh"), rng)
        x = rng.standard_normal((1, 3))
        weights = rng.standard_normal((1, 2))
        net.forward(x)
        grad_input = net.backward(weights).grad_input
        eps = 1e-6
        for j in range(3):
            shift = np.zeros_like(x)
            shift[0, j] = eps
            numeric = (_weighted_output(net, x + shift, weights) - _weighted_output(net, x - shift, weights)) / (2 * eps)
            assert grad_input[0, j] == pytest.approx(numeric, rel=1e-5, abs=1e-9)

    def test_dimension_error_names_layer(self):
        net = MlpNetwork.initialize(Topology((4, 6, 3)), np.random.default_rng(0))
        with pytest.raises(DimensionError) as info:
            net.forward(np.zeros((2, 5)))
        assert info.value.layer_index == 0

    def test_backward_without_forward(self):
        net = MlpNetwork.initialize(Topology((4, 3)), np.random.default_rng(0))
        with pytest.raises(StateError):
            net.backward(np.zeros((1, 3)))

    def test_backward_shape_check(self):
        net = MlpNetwork.initialize(Topology((4, 3)), np.random.default_rng(0))
        net.forward(np.zeros((2, 4)))
        with pytest.raises(DimensionError):
            net.backward(np.zeros((3, 3)))

    def test_rebuild_from_parameters(self):
        topology = Topology((4, 6, 3), "relu")
        net = MlpNetwork.initialize(topology, np.random.default_rng(3))
        clone = MlpNetwork.from_parameters(topology, {k: v.copy() for k, v in net.named_parameters().items()})
        x = np.random.default_rng(4).standard_normal((3, 4))
        assert_allclose(clone.forward(x), net.forward(x))
        assert clone.parameter_hash() == net.parameter_hash()

    def test_topology_hash_tracks_widths(self):
        assert Topology((4, 6, 3)).topology_hash() == Topology((4, 6, 3)).topology_hash()
        assert Topology((4, 6, 3)).topology_hash() != Topology((4, 7, 3)).topology_hash()
        assert Topology((4, 6, 3)).topology_hash() != Topology((4, 6, 3), "tanh").topology_hash()

    def test_pass_counters(self):
        net = MlpNetwork.initialize(Topology((2, 3)), np.random.default_rng(0))
        net.forward(np.ones((1, 2)))
        net.backward(np.ones((1, 3)))
        net.forward(np.ones((1, 2)), cache=False)
        assert (net.forward_calls, net.backward_calls) == (2, 1)
        assert net.copy().forward_calls == 0


class TestSgd:
    def test_momentum_and_weight_decay_update(self):
        param = np.array([1.0, -2.0])
        grad = np.array([0.5, 0.5])
        state = SgdState(momentum=0.9, weight_decay=0.1)
        params = {"w": param}
        sgd_step(params, {"w": grad}, state, lr=0.1)
        first_buffer = grad + 0.1 * np.array([1.0, -2.0])
        assert_allclose(state.momentum_buffers["w"], first_buffer)
        expected = np.array([1.0, -2.0]) - 0.1 * first_buffer
        assert_allclose(param, expected)

        sgd_step(params, {"w": grad}, state, lr=0.1)
        second_buffer = 0.9 * first_buffer + grad + 0.1 * expected
        assert_allclose(param, expected - 0.1 * second_buffer)

    def test_zero_lr_leaves_parameters(self):
        param = np.array([1.0, 2.0])
        sgd_step({"w": param}, {"w": np.array([3.0, 4.0])}, SgdState(), lr=0.0)
        assert_allclose(param, [1.0, 2.0])

    def test_negative_lr(self):
        with pytest.raises(ConfigError):
            sgd_step({"w": np.zeros(2)}, {"w": np.zeros(2)}, SgdState(), lr=-1.0)

    def test_non_finite_gradient(self):
        with pytest.raises(NumericError):
            sgd_step({"w": np.zeros(2)}, {"w": np.array([np.nan, 0.0])}, SgdState(), lr=0.1)

    def test_invalid_momentum(self):
        with pytest.raises(ConfigError):
            SgdState(momentum=1.0)


class TestSchedules:
    def test_cosine_endpoints(self):
        assert cosine_lr(0, 100, 0.2) == pytest.approx(0.2)
        assert cosine_lr(50, 100, 0.2) == pytest.approx(0.1)
        assert cosine_lr(100, 100, 0.2) == pytest.approx(0.0, abs=1e-15)

    def test_cosine_warmup_holds_base(self):
        assert cosine_lr(5, 100, 0.2, warmup_steps=10) == 0.2
        assert cosine_lr(10, 100, 0.2, warmup_steps=10) == pytest.approx(0.2)

    def test_cosine_is_non_increasing(self):
        values = [cosine_lr(s, 40, 1.0, 4) for s in range(41)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_constant(self):
        assert constant_lr(7, 10, 0.3) == 0.3

    def test_registry(self):
        assert get_lr_schedule("cosine") is cosine_lr
        with pytest.raises(ConfigError):
            get_lr_schedule("step")

    def test_zero_total_steps(self):
        with pytest.raises(ConfigError):
            cosine_lr(0, 0, 0.1)
