import logging
from typing import Sequence

import numpy as np

from imgcred.core.config import TrainConfig
from imgcred.core.errors import NumericError, ShapeError
from imgcred.services.convnet_service import ConvNet, gradients, reinit_last_layer

logger = logging.getLogger(__name__)

FINE_TUNE_LR_MULTIPLIER = 10.0


def augment_batch_flips(batch: np.ndarray, labels: np.ndarray, weights: np.ndarray):
    """Array form of image_service.augment_flips: originals, horizontal mirrors, vertical mirrors."""
    return (
        np.concatenate([batch, np.flip(batch, axis=3), np.flip(batch, axis=2)]),
        np.tile(labels, 3),
        np.tile(weights, 3),
    )


def sgd_train(net: ConvNet, batch: np.ndarray, labels: Sequence[int], weights: Sequence[float],
              cfg: TrainConfig) -> ConvNet:
    """Mini-batch SGD with momentum on the weighted loss. Returns a new network.

    Each step follows the averaged batch objective (weighted loss / batch size) plus
    L2 decay on the weight tensors. Batches whose weights are all zero are skipped.
    Shuffling and dropout draw from two streams spawned from `cfg.seed`.
    """
    labels = np.asarray(labels, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    batch = np.asarray(batch, dtype=np.float64)
    if not batch.shape[0] == labels.shape[0] == weights.shape[0]:
        raise ShapeError("batch, labels and weights must have equal length")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ShapeError("instance weights must be finite and >= 0")
    if cfg.augment_flips:
        batch, labels, weights = augment_batch_flips(batch, labels, weights)

    trained = net.copy()
    shuffle_seq, dropout_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    velocity = [{name: np.zeros_like(value) for name, value in p.items()} for p in trained.parameters]
    last = trained.last_layer
    total = batch.shape[0]

    epoch = 0
    for rate, epochs in cfg.learning_rate_schedule:
        for _ in range(epochs):
            epoch += 1
            order = shuffle_rng.permutation(total)
            epoch_loss = 0.0
            for batch_index, start in enumerate(range(0, total, cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                batch_weights = weights[idx]
                if not batch_weights.any():
                    continue
                dropout_seed = int(dropout_rng.integers(2 ** 32))
                loss, grads = gradients(trained, batch[idx], labels[idx], batch_weights,
                                        train_mode=cfg.dropout, seed=dropout_seed)
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite loss at epoch {epoch}, batch {batch_index}")
                epoch_loss += loss
                scale = 1.0 / idx.size
                for layer_index, (params, layer_grads) in enumerate(zip(trained.parameters, grads)):
                    layer_rate = rate * (cfg.last_layer_lr_multiplier if layer_index == last else 1.0)
                    for name, grad in layer_grads.items():
                        step = grad * scale
                        if name == "W":
                            step = step + cfg.weight_decay * params[name]
                        v = velocity[layer_index][name]
                        v *= cfg.momentum
                        v -= layer_rate * step
                        params[name] += v
            trained.loss_history.append(epoch_loss / total)
            logger.debug("epoch %d rate %g: mean weighted loss %.6f", epoch, rate, trained.loss_history[-1])
    if trained.loss_history:
        logger.info("trained %d epochs on %d instances, final loss %.6f", epoch, total, trained.loss_history[-1])
    return trained


def fine_tune(net: ConvNet, batch: np.ndarray, labels: Sequence[int], weights: Sequence[float],
              cfg: TrainConfig) -> ConvNet:
    """Swap in a fresh output layer and retrain with a 10x learning rate on it."""
    adapted = reinit_last_layer(net, seed=cfg.seed)
    adapted.loss_history = []
    return sgd_train(adapted, batch, labels, weights,
                     cfg.model_copy(update={"last_layer_lr_multiplier": FINE_TUNE_LR_MULTIPLIER}))
