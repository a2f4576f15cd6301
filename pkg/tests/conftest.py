import json

import numpy as np
import pytest

from imgcred.core.config import ShiftSpec, TrainConfig
from imgcred.schemas.model_schemas import ConvLayer, ConvNetSpec, FullyConnectedLayer, MaxPoolLayer
from imgcred.services.convnet_service import build_convnet
from imgcred.services.synth_service import synth_shift


@pytest.fixture
def tiny_spec() -> ConvNetSpec:
    # 8x8 -> conv3 6x6x2 -> pool 3x3x2 -> conv2 2x2x2 -> fc 4 -> fc 2
    return ConvNetSpec(
        input_height=8,
        input_width=8,
        input_channels=1,
        layers=[
            ConvLayer(out_channels=2, kernel=3),
            MaxPoolLayer(kernel=2, stride=2),
            ConvLayer(out_channels=2, kernel=2),
            FullyConnectedLayer(out_dim=4, activation="relu"),
            FullyConnectedLayer(out_dim=2, activation="softmax"),
        ],
    )


@pytest.fixture
def tiny_net(tiny_spec):
    return build_convnet(tiny_spec, seed=3, init_std=0.3)


@pytest.fixture
def tiny_batch():
    rng = np.random.default_rng(11)
    batch = rng.random((6, 1, 8, 8))
    labels = np.array([0, 1, 1, 0, 1, 0])
    weights = rng.uniform(0.2, 2.0, 6)
    return batch, labels, weights


@pytest.fixture
def quick_train() -> TrainConfig:
    return TrainConfig(learning_rate_schedule=[(0.05, 3)], batch_size=4, dropout=False, seed=5)


@pytest.fixture
def small_shift() -> ShiftSpec:
    return ShiftSpec(aux_size=200, target_train_size=40, test_size=200, dim=5, seed=7)


@pytest.fixture
def shift_data(small_shift):
    return synth_shift(small_shift)


@pytest.fixture
def write_manifest(tmp_path):
    """Writes JSON lines (dicts are dumped, strings kept verbatim) to a manifest under tmp_path."""

    def write(*records, name="m.jsonl"):
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join((r if isinstance(r, str) else json.dumps(r)) + "\n" for r in records),
                        encoding="utf-8")
        return path

    return write
