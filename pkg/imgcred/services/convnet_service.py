import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from imgcred.core.config import NetworkConfig
from imgcred.core.errors import DataError, ShapeError
from imgcred.schemas.model_schemas import (
    ConvLayer,
    ConvNetSpec,
    FeatureLayer,
    FullyConnectedLayer,
    MaxPoolLayer,
    ResponseNormLayer,
)
from imgcred.services import layers as ops
from imgcred.services.image_service import ImageTensor

logger = logging.getLogger(__name__)

INIT_STD = 0.01
PROB_CLAMP = 1e-12


@dataclass
class ConvNet:
    """Layer spec plus per-layer parameters; parameter-free layers hold an empty dict."""

    spec: ConvNetSpec
    parameters: list[dict[str, np.ndarray]]
    rng_seed: int = 0
    loss_history: list[float] = field(default_factory=list)

    def copy(self) -> "ConvNet":
        return ConvNet(
            spec=self.spec.model_copy(deep=True),
            parameters=[{name: value.copy() for name, value in p.items()} for p in self.parameters],
            rng_seed=self.rng_seed,
            loss_history=list(self.loss_history),
        )

    @property
    def last_layer(self) -> int:
        return len(self.spec.layers) - 1


def desk_spec(input_size: int = 32, channels: int = 1, fc_dim: int = 64) -> ConvNetSpec:
    """Two conv blocks and two dense layers; 32x32 input gives a 16x6x6 pooled map."""
    return ConvNetSpec(
        input_height=input_size,
        input_width=input_size,
        input_channels=channels,
        layers=[
            ConvLayer(out_channels=8, kernel=5),
            MaxPoolLayer(kernel=2, stride=2),
            ConvLayer(out_channels=16, kernel=3),
            MaxPoolLayer(kernel=2, stride=2),
            FullyConnectedLayer(out_dim=fc_dim, activation="relu", dropout_rate=0.5),
            FullyConnectedLayer(out_dim=2, activation="softmax"),
        ],
    )


def alexnet_spec(channels: int = 3) -> ConvNetSpec:
    """Five conv layers (pool + norm after the 1st, 2nd and 5th), FC6/FC7 of 4096, 2-way output."""
    return ConvNetSpec(
        input_height=224,
        input_width=224,
        input_channels=channels,
        layers=[
            ConvLayer(out_channels=96, kernel=11, stride=4, padding=2),
            MaxPoolLayer(kernel=3, stride=2),
            ResponseNormLayer(),
            ConvLayer(out_channels=256, kernel=5, padding=2),
            MaxPoolLayer(kernel=3, stride=2),
            ResponseNormLayer(),
            ConvLayer(out_channels=384, kernel=3, padding=1),
            ConvLayer(out_channels=384, kernel=3, padding=1),
            ConvLayer(out_channels=256, kernel=3, padding=1),
            MaxPoolLayer(kernel=3, stride=2),
            ResponseNormLayer(),
            FullyConnectedLayer(out_dim=4096, activation="relu", dropout_rate=0.5),
            FullyConnectedLayer(out_dim=4096, activation="relu", dropout_rate=0.5),
            FullyConnectedLayer(out_dim=2, activation="softmax"),
        ],
    )


def parameter_shapes(spec: ConvNetSpec) -> list[dict[str, tuple[int, ...]]]:
    in_shapes = [(spec.input_channels, spec.input_height, spec.input_width)] + spec.output_shapes()[:-1]
    shapes = []
    for layer, in_shape in zip(spec.layers, in_shapes):
        if isinstance(layer, ConvLayer):
            kernel = (layer.out_channels, in_shape[0], layer.kernel, layer.kernel)
            shapes.append({"W": kernel, "b": (layer.out_channels,)})
        elif isinstance(layer, FullyConnectedLayer):
            shapes.append({"W": (int(np.prod(in_shape)), layer.out_dim), "b": (layer.out_dim,)})
        else:
            shapes.append({})
    return shapes


def build_convnet(spec: ConvNetSpec, seed: int = 0, init_std: float = INIT_STD) -> ConvNet:
    """Gaussian weights (std `init_std`), zero biases."""
    rng = np.random.default_rng(seed)
    parameters = [
        {"W": rng.normal(0.0, init_std, shapes["W"]), "b": np.zeros(shapes["b"])} if shapes else {}
        for shapes in parameter_shapes(spec)
    ]
    logger.debug("built network with %d layers (seed %d, init std %g)", len(spec.layers), seed, init_std)
    return ConvNet(spec=spec, parameters=parameters, rng_seed=seed)


def reinit_last_layer(net: ConvNet, seed: int, std: float = INIT_STD) -> ConvNet:
    out = net.copy()
    rng = np.random.default_rng(seed)
    last = out.parameters[-1]
    last["W"] = rng.normal(0.0, std, last["W"].shape)
    last["b"] = np.zeros_like(last["b"])
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = np.exp(x - x.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def _check_batch(net: ConvNet, batch: np.ndarray) -> np.ndarray:
    spec = net.spec
    expected = (spec.input_channels, spec.input_height, spec.input_width)
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[1:] != expected:
        raise ShapeError(f"expected batch of shape (N, {expected[0]}, {expected[1]}, {expected[2]}), got {batch.shape}")
    return batch


def forward_batch(net: ConvNet, batch: np.ndarray, train_mode: bool = False, seed: int = 0):
    """Returns (probs (N, 2), activations per layer, caches for backprop)."""
    x = _check_batch(net, batch)
    rng = np.random.default_rng(seed) if train_mode else None
    activations, caches = [], []
    for layer, params in zip(net.spec.layers, net.parameters):
        if isinstance(layer, ConvLayer):
            z, cache = ops.conv_forward(x, params["W"], params["b"], layer.stride, layer.padding)
            x = relu(z) if layer.activation == "relu" else z
            caches.append((cache, z))
        elif isinstance(layer, MaxPoolLayer):
            x, cache = ops.maxpool_forward(x, layer.kernel, layer.stride)
            caches.append(cache)
        elif isinstance(layer, ResponseNormLayer):
            x, cache = ops.response_norm_forward(x, layer.radius, layer.alpha, layer.beta, layer.k)
            caches.append(cache)
        else:
            z, cache = ops.fc_forward(x, params["W"], params["b"])
            if layer.activation == "softmax":
                x = softmax(z)
            elif layer.activation == "relu":
                x = relu(z)
            else:
                x = z
            mask = None
            if rng is not None and layer.dropout_rate > 0.0:
                keep = 1.0 - layer.dropout_rate
                mask = (rng.random(x.shape) < keep) / keep
                x = x * mask
            caches.append((cache, z, mask))
        activations.append(x)
    return x, activations, caches


def forward(net: ConvNet, img: ImageTensor, train_mode: bool = False, seed: int = 0):
    """Single image: (probs, per-layer activations with the batch axis dropped)."""
    if img.shape != net.spec.input_shape:
        raise ShapeError(f"image shape {img.shape} does not match network input {net.spec.input_shape}")
    batch = np.transpose(img.values, (2, 0, 1))[None]
    probs, activations, _ = forward_batch(net, batch, train_mode, seed)
    return probs[0], [a[0] for a in activations]


def weighted_loss(probs: np.ndarray, labels: Sequence[int], weights: Sequence[float]) -> float:
    """-sum_i w_i [y_i ln p_i(1) + (1 - y_i) ln p_i(0)], probabilities clamped away from 0 and 1."""
    probs = np.asarray(probs, dtype=np.float64).reshape(-1, 2)
    labels = np.asarray(labels, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if not probs.shape[0] == labels.shape[0] == weights.shape[0]:
        raise ShapeError(
            f"length mismatch: {probs.shape[0]} probs, {labels.shape[0]} labels, {weights.shape[0]} weights"
        )
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.sum(weights * (labels * np.log(p[:, 1]) + (1.0 - labels) * np.log(p[:, 0]))))


def _backward(net: ConvNet, probs: np.ndarray, caches, labels: np.ndarray, weights: np.ndarray):
    grads: list[dict[str, np.ndarray]] = [dict() for _ in net.spec.layers]
    onehot = np.stack([1.0 - labels, labels], axis=1)
    # softmax + weighted log loss
    dx = weights[:, None] * (probs - onehot)
    for index in range(len(net.spec.layers) - 1, -1, -1):
        layer, cache = net.spec.layers[index], caches[index]
        if isinstance(layer, FullyConnectedLayer):
            fc_cache, z, mask = cache
            dz = dx
            if layer.activation != "softmax":
                if mask is not None:
                    dz = dz * mask
                if layer.activation == "relu":
                    dz = dz * (z > 0.0)
            dx, grads[index]["W"], grads[index]["b"] = ops.fc_backward(dz, fc_cache)
        elif isinstance(layer, ConvLayer):
            conv_cache, z = cache
            dz = dx * (z > 0.0) if layer.activation == "relu" else dx
            dx, grads[index]["W"], grads[index]["b"] = ops.conv_backward(dz, conv_cache)
        elif isinstance(layer, MaxPoolLayer):
            dx = ops.maxpool_backward(dx, cache)
        else:
            dx = ops.response_norm_backward(dx, cache)
    return grads


def gradients(net: ConvNet, batch: np.ndarray, labels: Sequence[int], weights: Sequence[float],
              train_mode: bool = False, seed: int = 0) -> tuple[float, list[dict[str, np.ndarray]]]:
    """Weighted loss of the batch and its exact gradient per layer parameter."""
    labels = np.asarray(labels, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    batch = _check_batch(net, batch)
    if not batch.shape[0] == labels.shape[0] == weights.shape[0]:
        raise ShapeError("batch, labels and weights must have equal length")
    if train_mode and net.spec.layers[-1].dropout_rate > 0.0:
        raise ShapeError("dropout on the output layer is not supported")
    probs, _, caches = forward_batch(net, batch, train_mode, seed)
    return weighted_loss(probs, labels, weights), _backward(net, probs, caches, labels, weights)


def predict_batch(net: ConvNet, batch: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Eval-mode P(fake) for every row of an (N, C, H, W) batch."""
    batch = _check_batch(net, batch)
    if batch.shape[0] == 0:
        return np.zeros(0)
    return np.concatenate([
        forward_batch(net, batch[start:start + chunk])[0][:, 1]
        for start in range(0, batch.shape[0], chunk)
    ])


def resolve_feature_layer(spec: ConvNetSpec, layer: Union[FeatureLayer, str]) -> int:
    """Index of the layer whose output is the named feature."""
    layer = FeatureLayer(layer)
    hidden_fc = [i for i, l in enumerate(spec.layers[:-1]) if isinstance(l, FullyConnectedLayer)]
    if layer == FeatureLayer.C5_POOLED:
        convs = [i for i, l in enumerate(spec.layers) if isinstance(l, ConvLayer)]
        pools = [i for i, l in enumerate(spec.layers) if isinstance(l, MaxPoolLayer) and convs and i > convs[-1]]
        if not pools:
            raise DataError("network has no pooling layer after its last convolution")
        return pools[0]
    position = 0 if layer == FeatureLayer.FC6 else 1
    if len(hidden_fc) <= position:
        raise DataError(f"network has no {layer.value} layer")
    return hidden_fc[position]


def feature_dim(spec: ConvNetSpec, layer: Union[FeatureLayer, str]) -> int:
    return int(np.prod(spec.output_shapes()[resolve_feature_layer(spec, layer)]))


def extract_features(net: ConvNet, img: ImageTensor, layer: Union[FeatureLayer, str]) -> np.ndarray:
    index = resolve_feature_layer(net.spec, layer)
    _, activations = forward(net, img)
    return activations[index].ravel()


def extract_feature_matrix(net: ConvNet, batch: np.ndarray, layer: Union[FeatureLayer, str],
                           chunk: int = 256) -> np.ndarray:
    index = resolve_feature_layer(net.spec, layer)
    batch = _check_batch(net, batch)
    dim = feature_dim(net.spec, layer)
    if batch.shape[0] == 0:
        return np.zeros((0, dim))
    rows = []
    for start in range(0, batch.shape[0], chunk):
        _, activations, _ = forward_batch(net, batch[start:start + chunk])
        rows.append(activations[index].reshape(-1, dim))
    return np.vstack(rows)



def spec_from_config(network: NetworkConfig) -> ConvNetSpec:
    if network.shape == "alexnet":
        return alexnet_spec(channels=network.channels)
    return desk_spec(network.input_size, network.channels, network.fc_dim)
