"""Base learners plugged into the transfer drivers.

A learner turns instances into a design array (`prepare`), fits a model to that
array under per-instance weights, fine-tunes a fitted model on new data, and scores
rows with P(fake). Weights are rescaled to average 1 before fitting, so a
probability distribution over N instances trains like N unit-weight instances.
"""
import logging
from typing import Optional, Protocol, Sequence

import numpy as np

from imgcred.core.config import TrainConfig
from imgcred.core.errors import DataError
from imgcred.schemas.instance_schemas import Instance
from imgcred.schemas.model_schemas import ConvNetSpec
from imgcred.services.convnet_service import INIT_STD, ConvNet, build_convnet
from imgcred.services.image_service import to_batch
from imgcred.services.logreg_service import LogRegModel, fine_tune_logreg, train_weighted_logreg
from imgcred.services.manifest_service import load_images
from imgcred.services.model_service import predict_proba
from imgcred.services.training_service import fine_tune, sgd_train

logger = logging.getLogger(__name__)


def as_instance_weights(w: Sequence[float]) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    total = w.sum()
    if total <= 0.0:
        return np.zeros_like(w)
    return w * (w.shape[0] / total)


class BaseLearner(Protocol):
    name: str

    def prepare(self, instances: Sequence[Instance]) -> np.ndarray: ...

    def fit(self, X: np.ndarray, y: np.ndarray, w: np.ndarray, seed: int = 0): ...

    def fine_tune(self, model, X: np.ndarray, y: np.ndarray, w: np.ndarray, seed: int = 0): ...

    def predict_proba(self, model, X: np.ndarray) -> np.ndarray: ...


class LogRegLearner:
    """Weighted logistic regression over the instances' feature vectors."""

    name = "logreg"

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    def prepare(self, instances: Sequence[Instance]) -> np.ndarray:
        missing = [inst.id for inst in instances if inst.features is None]
        if missing:
            raise DataError(f"{len(missing)} instances have no feature vector (first: {missing[0]!r})")
        if not instances:
            return np.zeros((0, 0))
        rows = [inst.features for inst in instances]
        if len({len(row) for row in rows}) != 1:
            raise DataError("feature vectors differ in length")
        return np.asarray(rows, dtype=np.float64)

    def fit(self, X, y, w, seed: int = 0) -> LogRegModel:
        # deterministic; seed unused
        return train_weighted_logreg(X, y, as_instance_weights(w), self.cfg)

    def fine_tune(self, model: LogRegModel, X, y, w, seed: int = 0) -> LogRegModel:
        return fine_tune_logreg(model, X, y, as_instance_weights(w), self.cfg)

    def predict_proba(self, model: LogRegModel, X) -> np.ndarray:
        return predict_proba(model, X)


class ConvNetLearner:
    """The convolutional network on the instances' images, resized to the network input."""

    name = "convnet"

    def __init__(self, spec: ConvNetSpec, cfg: TrainConfig, init_std: float = INIT_STD,
                 pretrained: Optional[ConvNet] = None):
        self.spec = spec
        self.cfg = cfg
        self.init_std = init_std
        self.pretrained = pretrained

    def prepare(self, instances: Sequence[Instance]) -> np.ndarray:
        return to_batch(load_images(instances), self.spec.input_height, self.spec.input_width,
                        self.spec.input_channels)

    def _cfg(self, seed: int) -> TrainConfig:
        return self.cfg.model_copy(update={"seed": self.cfg.seed + seed})

    def fit(self, X, y, w, seed: int = 0) -> ConvNet:
        if self.pretrained is not None:
            return self.fine_tune(self.pretrained, X, y, w, seed)
        net = build_convnet(self.spec, seed=self.cfg.seed + seed, init_std=self.init_std)
        return sgd_train(net, X, y, as_instance_weights(w), self._cfg(seed))

    def fine_tune(self, model: ConvNet, X, y, w, seed: int = 0) -> ConvNet:
        return fine_tune(model, X, y, as_instance_weights(w), self._cfg(seed))

    def predict_proba(self, model: ConvNet, X) -> np.ndarray:
        return predict_proba(model, X)
