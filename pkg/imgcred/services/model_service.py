import json
import logging
from functools import singledispatch
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from imgcred.core.errors import DataError, ShapeError
from imgcred.core.workspace import write_json
from imgcred.schemas.model_schemas import ModelDocument
from imgcred.services.convnet_service import ConvNet, parameter_shapes, predict_batch
from imgcred.services.image_service import ImageTensor
from imgcred.services.logreg_service import LogRegModel, logreg_proba

logger = logging.getLogger(__name__)

Model = Union[ConvNet, LogRegModel]


@singledispatch
def predict_proba(model, batch) -> np.ndarray:
    """P(fake) per row: an (N, C, H, W) batch for networks, an (N, D) matrix for linear models."""
    raise TypeError(f"unsupported model type {type(model).__name__}")


@predict_proba.register
def _(model: ConvNet, batch) -> np.ndarray:
    return predict_batch(model, batch)


@predict_proba.register
def _(model: LogRegModel, batch) -> np.ndarray:
    return logreg_proba(model, batch)


def predict_labels(model: Model, batch) -> np.ndarray:
    return (predict_proba(model, batch) >= 0.5).astype(np.int64)


def predict(model: Model, x) -> tuple[int, float]:
    """Single instance: an ImageTensor for networks, a feature vector for linear models."""
    if isinstance(x, ImageTensor):
        if not isinstance(model, ConvNet):
            raise TypeError("images need a convolutional model")
        if x.shape != model.spec.input_shape:
            raise ShapeError(f"image shape {x.shape} does not match network input {model.spec.input_shape}")
        batch = np.transpose(x.values, (2, 0, 1))[None]
    else:
        batch = np.asarray(x, dtype=np.float64)[None]
    prob = float(predict_proba(model, batch)[0])
    return int(prob >= 0.5), prob


@singledispatch
def to_document(model) -> ModelDocument:
    raise TypeError(f"unsupported model type {type(model).__name__}")


@to_document.register
def _(model: ConvNet) -> ModelDocument:
    return ModelDocument(
        kind="convnet",
        spec=model.spec,
        rng_seed=model.rng_seed,
        parameters=[{name: value.tolist() for name, value in p.items()} for p in model.parameters],
    )


@to_document.register
def _(model: LogRegModel) -> ModelDocument:
    return ModelDocument(
        kind="logreg",
        parameters={
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "mean": model.mean.tolist(),
            "scale": model.scale.tolist(),
        },
    )


def from_document(doc: ModelDocument) -> Model:
    try:
        if doc.kind == "logreg":
            params = doc.parameters
            return LogRegModel(
                weights=np.asarray(params["weights"], dtype=np.float64),
                bias=float(params["bias"]),
                mean=np.asarray(params["mean"], dtype=np.float64),
                scale=np.asarray(params["scale"], dtype=np.float64),
            )
        net = ConvNet(
            spec=doc.spec,
            parameters=[{name: np.asarray(v, dtype=np.float64) for name, v in p.items()} for p in doc.parameters],
            rng_seed=doc.rng_seed or 0,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed {doc.kind} parameters: {e}")
    _check_parameter_shapes(net)
    return net


def _check_parameter_shapes(net: ConvNet) -> None:
    reference = parameter_shapes(net.spec)
    if len(reference) != len(net.parameters):
        raise DataError("parameter list does not match the layer list")
    for index, (expected, actual) in enumerate(zip(reference, net.parameters)):
        if expected.keys() != actual.keys():
            raise DataError(f"layer {index}: expected parameters {sorted(expected)}, got {sorted(actual)}")
        for name, value in actual.items():
            if value.shape != expected[name]:
                raise DataError(f"layer {index} {name}: shape {value.shape} != {expected[name]}")
            if not np.all(np.isfinite(value)):
                raise DataError(f"layer {index} {name}: non-finite values")


def save_model(model: Model, path: Path) -> Path:
    return write_json(path, to_document(model).model_dump(mode="json", exclude_none=True))


def load_model(path: Path) -> Model:
    path = Path(path)
    try:
        doc = ModelDocument.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"model file {path} is not valid JSON: {e.msg}")
    except ValidationError as e:
        raise DataError(f"invalid model file {path}: {e.errors()[0]['msg']}")
    model = from_document(doc)
    logger.debug("loaded %s model from %s", doc.kind, path)
    return model
