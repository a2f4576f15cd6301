import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from imgcred.core.config import TrainConfig
from imgcred.core.errors import ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogRegModel:
    """Linear model over standardized features: P(fake) = sigmoid(((x - mean) / scale) . weights + bias)."""

    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def standardize(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ShapeError(f"expected features of shape (N, {self.dim}), got {X.shape}")
        return (X - self.mean) / self.scale


def logreg_proba(model: LogRegModel, X: np.ndarray) -> np.ndarray:
    return expit(model.standardize(X) @ model.weights + model.bias)


def logreg_objective(theta: np.ndarray, Xs: np.ndarray, y: np.ndarray, w: np.ndarray,
                     weight_decay: float) -> tuple[float, np.ndarray]:
    """Weighted log loss / N + weight_decay/2 * |weights|^2, and its gradient.

    theta is (weights..., bias) over already standardized features; the bias is not decayed.
    """
    n = Xs.shape[0]
    z = Xs @ theta[:-1] + theta[-1]
    # log(1 + e^z) - y z is the per-instance loss
    value = float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) / n + 0.5 * weight_decay * theta[:-1] @ theta[:-1])
    residual = w * (expit(z) - y) / n
    grad = np.empty_like(theta)
    grad[:-1] = Xs.T @ residual + weight_decay * theta[:-1]
    grad[-1] = residual.sum()
    return value, grad


def _check_inputs(X, y, w) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got shape {X.shape}")
    if not X.shape[0] == y.shape[0] == w.shape[0]:
        raise ShapeError(f"row mismatch: {X.shape[0]} rows, {y.shape[0]} labels, {w.shape[0]} weights")
    if np.any(w < 0):
        raise ShapeError("instance weights must be >= 0")
    return X, y, w


def _standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if X.shape[0] == 0:
        return np.zeros(X.shape[1]), np.ones(X.shape[1])
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    return X.mean(axis=0), scale


def train_weighted_logreg(X: np.ndarray, y: Sequence[int], w: Sequence[float], cfg: TrainConfig,
                          init: Optional[LogRegModel] = None) -> LogRegModel:
    """Full-batch gradient descent with step 1/L until |grad| < cfg.tolerance or cfg.max_epochs.

    With `init` the standardization and parameters are taken from that model (warm start).
    """
    X, y, w = _check_inputs(X, y, w)
    if init is None:
        mean, scale = _standardizer(X)
        theta = np.zeros(X.shape[1] + 1)
    else:
        mean, scale = init.mean, init.scale
        theta = np.append(init.weights, init.bias)
    model = LogRegModel(weights=theta[:-1], bias=float(theta[-1]), mean=mean, scale=scale)
    Xs = model.standardize(X)

    n = max(X.shape[0], 1)
    design = np.hstack([Xs, np.ones((X.shape[0], 1))]) * np.sqrt(w)[:, None]
    # Lipschitz constant of the gradient; sigmoid' <= 1/4
    lipschitz = (np.linalg.norm(design, 2) ** 2 / (4.0 * n) if design.size else 0.0) + cfg.weight_decay
    step = 1.0 / lipschitz if lipschitz > 0.0 else 0.0

    grad_norm = 0.0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        _, grad = logreg_objective(theta, Xs, y, w, cfg.weight_decay)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < cfg.tolerance or step == 0.0:
            break
        theta = theta - step * grad
    logger.debug("logistic regression: %d epochs, gradient norm %.3g", epoch, grad_norm)
    return LogRegModel(weights=theta[:-1].copy(), bias=float(theta[-1]), mean=mean, scale=scale)


def fine_tune_logreg(model: LogRegModel, X: np.ndarray, y: Sequence[int], w: Sequence[float],
                     cfg: TrainConfig) -> LogRegModel:
    return train_weighted_logreg(X, y, w, cfg, init=model)
