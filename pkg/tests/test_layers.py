import numpy as np
import pytest

from imgcred.core.errors import ShapeError
from imgcred.schemas.model_schemas import (
    ConvLayer,
    ConvNetSpec,
    FullyConnectedLayer,
    MaxPoolLayer,
    ResponseNormLayer,
)
from imgcred.services import layers as ops
from imgcred.services.convnet_service import build_convnet, gradients
from tests.gradcheck import assert_gradients_match, numeric_gradient


class TestConvolution:
    def test_matches_direct_sum(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 2, 4, 4))
        weight = rng.standard_normal((3, 2, 3, 3))
        bias = rng.standard_normal(3)
        out, _ = ops.conv_forward(x, weight, bias, stride=1, padding=0)
        assert out.shape == (1, 3, 2, 2)
        for o in range(3):
            for i in range(2):
                for j in range(2):
                    expected = np.sum(x[0, :, i:i + 3, j:j + 3] * weight[o]) + bias[o]
                    assert out[0, o, i, j] == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (1, 2)])
    def test_backward_matches_finite_differences(self, stride, padding):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 2, 5, 5))
        weight = rng.standard_normal((3, 2, 3, 3))
        bias = rng.standard_normal(3)
        out, cache = ops.conv_forward(x, weight, bias, stride, padding)
        upstream = rng.standard_normal(out.shape)

        def loss():
            return float(np.sum(ops.conv_forward(x, weight, bias, stride, padding)[0] * upstream))

        dx, d_weight, d_bias = ops.conv_backward(upstream, cache)
        assert_gradients_match(dx, numeric_gradient(loss, x))
        assert_gradients_match(d_weight, numeric_gradient(loss, weight))
        assert_gradients_match(d_bias, numeric_gradient(loss, bias))


class TestMaxPool:
    def test_overlapping_windows_backward(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 3, 7, 7))
        out, cache = ops.maxpool_forward(x, kernel=3, stride=2)
        assert out.shape == (2, 3, 3, 3)
        upstream = rng.standard_normal(out.shape)

        def loss():
            return float(np.sum(ops.maxpool_forward(x, 3, 2)[0] * upstream))

        assert_gradients_match(ops.maxpool_backward(upstream, cache), numeric_gradient(loss, x))

    def test_tie_routes_gradient_to_first_position(self):
        x = np.ones((1, 1, 2, 2))
        out, cache = ops.maxpool_forward(x, kernel=2, stride=2)
        dx = ops.maxpool_backward(np.ones_like(out), cache)
        np.testing.assert_array_equal(dx[0, 0], [[1.0, 0.0], [0.0, 0.0]])


class TestResponseNorm:
    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 5, 3, 3))
        out, cache = ops.response_norm_forward(x, radius=1, alpha=1.0, beta=0.75, k=2.0)
        upstream = rng.standard_normal(out.shape)

        def loss():
            return float(np.sum(ops.response_norm_forward(x, 1, 1.0, 0.75, 2.0)[0] * upstream))

        assert_gradients_match(ops.response_norm_backward(upstream, cache), numeric_gradient(loss, x))

    def test_zero_alpha_divides_by_k_power(self):
        x = np.random.default_rng(4).standard_normal((1, 4, 2, 2))
        out, _ = ops.response_norm_forward(x, radius=2, alpha=0.0, beta=0.75, k=2.0)
        np.testing.assert_allclose(out, x / 2.0 ** 0.75, rtol=1e-14)


def _assert_network_gradients(net, batch, labels, weights, train_mode=False, seed=0):
    _, grads = gradients(net, batch, labels, weights, train_mode=train_mode, seed=seed)
    for index, params in enumerate(net.parameters):
        for name, value in params.items():
            def loss():
                return gradients(net, batch, labels, weights, train_mode=train_mode, seed=seed)[0]

            assert_gradients_match(grads[index][name], numeric_gradient(loss, value))


class TestNetworkGradients:
    def test_every_parameter_matches_finite_differences(self, tiny_net, tiny_batch):
        _assert_network_gradients(tiny_net, *tiny_batch)

    def test_dropout_and_response_norm_with_fixed_mask(self, tiny_batch):
        spec = ConvNetSpec(
            input_height=8,
            input_width=8,
            input_channels=1,
            layers=[
                ConvLayer(out_channels=3, kernel=3, padding=1),
                ResponseNormLayer(radius=1, alpha=0.5),
                MaxPoolLayer(kernel=2, stride=2),
                FullyConnectedLayer(out_dim=5, activation="relu", dropout_rate=0.5),
                FullyConnectedLayer(out_dim=2, activation="softmax"),
            ],
        )
        net = build_convnet(spec, seed=8, init_std=0.3)
        _assert_network_gradients(net, *tiny_batch, train_mode=True, seed=4)

    def test_zero_weights_give_zero_gradients(self, tiny_net, tiny_batch):
        batch, labels, _ = tiny_batch
        loss, grads = gradients(tiny_net, batch, labels, np.zeros(len(labels)))
        assert loss == 0.0
        for layer_grads in grads:
            for grad in layer_grads.values():
                assert not grad.any()

    def test_gradient_is_linear_in_instances_and_weights(self, tiny_net, tiny_batch):
        batch, labels, weights = tiny_batch
        _, both = gradients(tiny_net, batch[:2], labels[:2], weights[:2])
        _, first = gradients(tiny_net, batch[:1], labels[:1], weights[:1])
        _, second = gradients(tiny_net, batch[1:2], labels[1:2], weights[1:2])
        _, doubled = gradients(tiny_net, batch[:2], labels[:2], 2.0 * weights[:2])
        for index, params in enumerate(both):
            for name, grad in params.items():
                np.testing.assert_allclose(grad, first[index][name] + second[index][name], atol=1e-12)
                np.testing.assert_allclose(doubled[index][name], 2.0 * grad, rtol=1e-12, atol=1e-15)

    def test_length_mismatch_rejected(self, tiny_net, tiny_batch):
        batch, labels, weights = tiny_batch
        with pytest.raises(ShapeError):
            gradients(tiny_net, batch, labels[:-1], weights)
