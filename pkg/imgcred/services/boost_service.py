"""Iterative instance-weighted transfer: boosting over auxiliary + target training data.

Layout: auxiliary instances occupy indices 0..n-1 of every weight vector, target
training instances n..n+m-1. Each round trains the base learner on the normalized
weights, measures the weighted error on the target portion, then shrinks the weight
of misclassified auxiliary instances by beta and grows the weight of misclassified
target instances by 1/beta_t.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from imgcred.core.config import BoostConfig
from imgcred.core.errors import BoostIterationError, DataError, EpsilonLimitReached, ImgCredError, NumericError
from imgcred.core.workspace import write_json
from imgcred.schemas.boost_schemas import (
    EnsembleDocument,
    EnsembleMember,
    EpsilonPolicy,
    InitStrategy,
    IterationLogRecord,
    VoteRange,
)
from imgcred.schemas.instance_schemas import Dataset
from imgcred.services.convnet_service import weighted_loss
from imgcred.services.learners import BaseLearner
from imgcred.services.log_service import RunLog
from imgcred.services.model_service import from_document, predict_labels, to_document

logger = logging.getLogger(__name__)


@dataclass
class BoostState:
    """Weights entering round t, and what that round produced."""

    t: int
    w: np.ndarray
    predictions: np.ndarray
    epsilon_t: float
    beta_t: float


@dataclass
class BoostEnsemble:
    members: list[tuple[Any, float, float]]  # (model, beta_t, epsilon_t)
    vote_range: VoteRange = VoteRange.ALL_ITERATIONS
    states: list[BoostState] = field(default_factory=list)

    def voting_members(self) -> list[tuple[Any, float, float]]:
        if not self.members:
            raise NumericError("ensemble has no members")
        if VoteRange(self.vote_range) == VoteRange.LAST_HALF:
            # members ceil(T/2)..T, 1-based
            return self.members[math.ceil(len(self.members) / 2) - 1:]
        return list(self.members)


def init_weights(data: Dataset, strategy: InitStrategy, aux_probs: Optional[Sequence[float]] = None) -> np.ndarray:
    n, m = data.n, data.m
    strategy = InitStrategy(strategy)
    if strategy == InitStrategy.AVERAGE:
        return np.full(n + m, 1.0 / (n + m))
    if aux_probs is None:
        raise DataError("finetune_based initialization needs per-auxiliary predicted probabilities")
    aux_probs = np.asarray(aux_probs, dtype=np.float64)
    if aux_probs.shape != (n,):
        raise DataError(f"expected {n} auxiliary probabilities, got {aux_probs.shape[0]}")
    if np.any(aux_probs < 0) or np.any(aux_probs > 1):
        raise DataError("auxiliary probabilities must lie in [0, 1]")
    return normalize(np.concatenate([aux_probs, np.ones(m)]))


def normalize(w: Sequence[float]) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    total = w.sum()
    if not total > 0.0:
        raise NumericError("weight vector has no mass")
    return w / total


def weighted_error(predictions: Sequence[int], labels: Sequence[int], weights: Sequence[float]) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if not total > 0.0:
        raise NumericError("target instances carry no weight")
    return float(np.sum(weights * np.abs(predictions - labels)) / total)


def target_error(model, X_target: np.ndarray, labels: Sequence[int], weights: Sequence[float]) -> float:
    """Weighted misclassification rate of `model` on the target training rows."""
    return weighted_error(predict_labels(model, X_target), labels, weights)


def apply_epsilon_policy(epsilon: float, cfg: BoostConfig) -> float:
    if epsilon < cfg.epsilon_floor:
        return cfg.epsilon_floor
    if epsilon >= 0.5:
        if cfg.epsilon_policy_on_half == EpsilonPolicy.HALT_KEEP_PREVIOUS:
            raise EpsilonLimitReached(epsilon)
        return cfg.epsilon_clamp
    return epsilon


def auxiliary_beta(n: int, iterations: int) -> float:
    if n < 2:
        raise DataError("boosting needs at least two auxiliary instances")
    return 1.0 / (1.0 + math.sqrt(2.0 * math.log(n) / iterations))


def compute_betas(epsilon_t: float, n: int, K: int, cfg: BoostConfig) -> tuple[float, float]:
    """(beta_t, beta) after the epsilon floor/half policy; raises EpsilonLimitReached to halt."""
    epsilon = apply_epsilon_policy(epsilon_t, cfg)
    return epsilon / (1.0 - epsilon), auxiliary_beta(n, K)


def update_weights(w: Sequence[float], predictions: Sequence[int], labels: Sequence[int],
                   beta: float, beta_t: float, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    miss = np.abs(np.asarray(predictions) - np.asarray(labels)).astype(np.float64)
    updated = w.copy()
    # exponent 0 leaves correctly classified weights bit-identical
    updated[:n] = w[:n] * np.where(miss[:n] > 0, beta ** miss[:n], 1.0)
    updated[n:] = w[n:] * np.where(miss[n:] > 0, beta_t ** -miss[n:], 1.0)
    return updated


def vote_weights(betas: Sequence[float]) -> np.ndarray:
    return np.log(1.0 / np.asarray(betas, dtype=np.float64))


def vote_margin(betas: Sequence[float], votes: np.ndarray) -> np.ndarray:
    """sum_t log(1/beta_t) v_t - 1/2 sum_t log(1/beta_t) per column; votes has one row per member.

    Sums are correctly rounded (fsum), so a pattern sitting exactly on the threshold gives 0.
    """
    alphas = vote_weights(betas)
    votes = np.asarray(votes, dtype=np.float64).reshape(len(alphas), -1)
    half = 0.5 * math.fsum(alphas)
    return np.array([math.fsum(alphas[column == 1]) - half for column in votes.T], dtype=np.float64)


def ensemble_vote(betas: Sequence[float], votes: np.ndarray) -> np.ndarray:
    """1 where sum_t log(1/beta_t) v_t >= 1/2 sum_t log(1/beta_t)."""
    return (vote_margin(betas, votes) >= 0.0).astype(np.int64)


def _member_votes(ens: BoostEnsemble, X: np.ndarray) -> tuple[list[float], np.ndarray]:
    members = ens.voting_members()
    votes = np.vstack([predict_labels(model, X) for model, _, _ in members])
    return [beta_t for _, beta_t, _ in members], votes


def ensemble_predict(ens: BoostEnsemble, X: np.ndarray) -> np.ndarray:
    return ensemble_vote(*_member_votes(ens, X))


def ensemble_margin(ens: BoostEnsemble, X: np.ndarray) -> np.ndarray:
    """Signed vote margin per row; ranks instances from most to least confidently fake."""
    return vote_margin(*_member_votes(ens, X))


def finetune_aux_probs(learner: BaseLearner, X: np.ndarray, y: np.ndarray, n: int, seed: int = 0) -> np.ndarray:
    """Probability of each auxiliary weak label under a source model fine-tuned on the target rows."""
    source = learner.fit(X[:n], y[:n], np.ones(n), seed=seed)
    tuned = learner.fine_tune(source, X[n:], y[n:], np.ones(X.shape[0] - n), seed=seed)
    p_fake = learner.predict_proba(tuned, X[:n])
    return np.where(y[:n] == 1, p_fake, 1.0 - p_fake)


def _check_layout(data: Dataset) -> None:
    if data.n < 2:
        raise DataError(f"boosting needs at least two auxiliary instances, got {data.n}")
    if data.m < 1:
        raise DataError("boosting needs at least one target training instance")
    unlabeled = [inst.id for inst in data.auxiliary if inst.label is None]
    if unlabeled:
        raise DataError(f"{len(unlabeled)} auxiliary instances carry no weak label (first: {unlabeled[0]!r})")


def run_boost(data: Dataset, learner: BaseLearner, cfg: BoostConfig, seed: int = 0,
              aux_probs: Optional[Sequence[float]] = None,
              test: Optional[tuple[np.ndarray, np.ndarray]] = None,
              run_log: Optional[RunLog] = None) -> BoostEnsemble:
    """Train `cfg.iterations` weighted rounds; optional `test` (X, y) adds per-round test accuracy to the log."""
    _check_layout(data)
    n, m, K = data.n, data.m, cfg.iterations
    instances = data.ordered_for_boosting()
    X = learner.prepare(instances)
    y = np.array([inst.label for inst in instances], dtype=np.int64)

    if cfg.init_strategy == InitStrategy.FINETUNE_BASED and aux_probs is None:
        aux_probs = finetune_aux_probs(learner, X, y, n, seed=seed)
    w = init_weights(data, cfg.init_strategy, aux_probs)
    beta = auxiliary_beta(n, K)
    ensemble = BoostEnsemble(members=[], vote_range=cfg.vote_range)
    logger.info("boosting %d rounds: n=%d auxiliary, m=%d target, beta=%.6f", K, n, m, beta)

    for t in range(1, K + 1):
        p = normalize(w)
        try:
            model = learner.fit(X, y, p, seed=seed + t)
            probs = learner.predict_proba(model, X)
        except (ImgCredError, FloatingPointError, ValueError) as e:
            raise BoostIterationError(str(e), t) from e
        predictions = (probs >= 0.5).astype(np.int64)
        raw_epsilon = weighted_error(predictions[n:], y[n:], w[n:])
        target_accuracy = 1.0 - weighted_error(predictions[n:], y[n:], np.ones(m))
        aux_mass = float(p[:n].sum())
        loss = weighted_loss(np.column_stack([1.0 - probs, probs]), y, p)
        stopped = False
        try:
            epsilon = apply_epsilon_policy(raw_epsilon, cfg)
        except EpsilonLimitReached:
            stopped = True
            if ensemble.members:
                logger.warning("round %d: target error %.4f >= 0.5, keeping %d earlier members",
                               t, raw_epsilon, len(ensemble.members))
                if run_log is not None:
                    run_log.append(IterationLogRecord(
                        t=t, epsilon_t=raw_epsilon, beta_t=1.0, target_accuracy=target_accuracy,
                        aux_weight_mass=aux_mass, loss=loss, stopped=True,
                    ))
                break
            logger.warning("first round target error %.4f >= 0.5, keeping it at %.3f and stopping",
                           raw_epsilon, cfg.epsilon_clamp)
            epsilon = cfg.epsilon_clamp
        beta_t = epsilon / (1.0 - epsilon)
        ensemble.members.append((model, beta_t, epsilon))
        ensemble.states.append(BoostState(t=t, w=w.copy(), predictions=predictions, epsilon_t=epsilon, beta_t=beta_t))

        record = IterationLogRecord(
            t=t,
            epsilon_t=epsilon,
            beta_t=beta_t,
            target_accuracy=target_accuracy,
            aux_weight_mass=aux_mass,
            loss=loss,
            stopped=stopped,
        )
        if test is not None:
            X_test, y_test = test
            record.test_accuracy = float(np.mean(ensemble_predict(ensemble, X_test) == np.asarray(y_test)))
        logger.info("round %d: epsilon=%.4f beta_t=%.6f target_acc=%.4f aux_mass=%.4f", t, epsilon, beta_t,
                    record.target_accuracy, record.aux_weight_mass)
        if run_log is not None:
            run_log.append(record)
        if stopped:
            break
        w = update_weights(w, predictions, y, beta, beta_t, n)
    return ensemble


def to_ensemble_document(ens: BoostEnsemble) -> EnsembleDocument:
    return EnsembleDocument(
        vote_range=ens.vote_range,
        members=[
            EnsembleMember(beta_t=beta_t, epsilon_t=epsilon_t, model=to_document(model))
            for model, beta_t, epsilon_t in ens.members
        ],
    )


def save_ensemble(ens: BoostEnsemble, path: Path) -> Path:
    return write_json(path, to_ensemble_document(ens).model_dump(mode="json", exclude_none=True))


def load_ensemble(path: Path) -> BoostEnsemble:
    path = Path(path)
    try:
        doc = EnsembleDocument.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise DataError(f"ensemble file not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"ensemble file {path} is not valid JSON: {e.msg}")
    except ValidationError as e:
        raise DataError(f"invalid ensemble file {path}: {e.errors()[0]['msg']}")
    return BoostEnsemble(
        members=[(from_document(member.model), member.beta_t, member.epsilon_t) for member in doc.members],
        vote_range=doc.vote_range,
    )
