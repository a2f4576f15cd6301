import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from imgcred.core.config import RunConfig
from imgcred.core.errors import DataError, ShapeError
from imgcred.schemas.instance_schemas import Dataset, Domain, Instance
from imgcred.schemas.metrics_schemas import Arm, ClassMetrics, ConfusionCounts, MetricsReport
from imgcred.schemas.model_schemas import FeatureLayer
from imgcred.services.boost_service import ensemble_predict, run_boost
from imgcred.services.convnet_service import ConvNet, extract_feature_matrix, spec_from_config
from imgcred.services.feature_service import (
    Lexicons,
    bovw_feature_matrix,
    build_vocabulary,
    extract_descriptors,
    stack_descriptors,
    text_feature_matrix,
)
from imgcred.services.image_service import to_batch
from imgcred.services.learners import BaseLearner, ConvNetLearner, LogRegLearner
from imgcred.services.logreg_service import train_weighted_logreg
from imgcred.services.manifest_service import load_images
from imgcred.services.model_service import predict_labels

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("Accuracy", "Fake P", "Fake R", "Fake F1", "Real P", "Real R", "Real F1")


def compute_metrics(predictions: Sequence[int], labels: Sequence[int], method_name: str = "") -> MetricsReport:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ShapeError(f"{predictions.shape[0]} predictions for {labels.shape[0]} labels")
    if predictions.size == 0:
        raise ShapeError("no predictions to evaluate")
    (tn, fp), (fn, tp) = confusion_matrix(labels, predictions, labels=[0, 1])
    precision, recall, f1, _ = precision_recall_fscore_support(
        labels, predictions, labels=[1, 0], average=None, zero_division=0
    )
    counts = ConfusionCounts(tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn))
    return MetricsReport(
        method_name=method_name,
        accuracy=(counts.tp + counts.tn) / counts.total,
        fake=ClassMetrics(precision=float(precision[0]), recall=float(recall[0]), f1=float(f1[0])),
        real=ClassMetrics(precision=float(precision[1]), recall=float(recall[1]), f1=float(f1[1])),
        counts=counts,
    )


def split(data: Dataset, ratio: tuple[int, int] = (9, 1), seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split of the target instances; per class floor(count * train / total) go to train.

    Auxiliary instances pass through to the training side. Manifest order is kept within each side.
    """
    train_part, test_part = ratio
    if train_part < 0 or test_part < 0 or train_part + test_part == 0:
        raise ValueError(f"invalid split ratio {ratio}")
    target = [inst for inst in data.instances if inst.domain != Domain.AUXILIARY]
    labels = np.array([inst.label for inst in target])
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    for label in (0, 1):
        members = np.flatnonzero(labels == label)
        if members.size == 0:
            raise DataError(f"no target instances with label {label}")
        shuffled = rng.permutation(members)
        train_idx.extend(shuffled[: members.size * train_part // (train_part + test_part)].tolist())
    chosen = set(train_idx)
    train = data.auxiliary + [
        inst.model_copy(update={"domain": Domain.TARGET_TRAIN}) for i, inst in enumerate(target) if i in chosen
    ]
    test = [inst.model_copy(update={"domain": Domain.TARGET_TEST}) for i, inst in enumerate(target) if i not in chosen]
    logger.info("split %d target instances into %d train / %d test", len(target), len(chosen), len(test))
    return Dataset(instances=train), Dataset(instances=test)


def _labels(instances: Sequence[Instance]) -> np.ndarray:
    return np.array([inst.label for inst in instances], dtype=np.int64)


def _require_text(instances: Sequence[Instance]) -> list[str]:
    missing = [inst.id for inst in instances if inst.text is None]
    if missing:
        raise DataError(f"{len(missing)} instances have no text (first: {missing[0]!r})")
    return [inst.text for inst in instances]


def _require_instances(instances: Sequence[Instance], role: str) -> Sequence[Instance]:
    if not instances:
        raise DataError(f"no {role} instances")
    return instances


def build_learner(config: RunConfig, base: Optional[str] = None, pretrained: Optional[ConvNet] = None) -> BaseLearner:
    base = base or config.comparison.base_learner
    if base == "convnet":
        return ConvNetLearner(spec_from_config(config.network), config.train, init_std=config.network.init_std,
                              pretrained=pretrained)
    return LogRegLearner(config.train)


class _Comparison:
    """Runs arms against one dataset; the auxiliary-trained network is shared between arms."""

    def __init__(self, data: Dataset, config: RunConfig, external: Optional[ConvNet], lexicons: Optional[Lexicons]):
        self.data = data
        self.config = config
        self.external = external
        self.lexicons = lexicons
        self.seed = config.seed
        self.train = _require_instances(data.target_train, "target training")
        self.test = _require_instances(data.target_test, "target test")
        self.y_train = _labels(self.train)
        self.y_test = _labels(self.test)
        self._aux_net: Optional[ConvNet] = None
        self._aux_lock = threading.Lock()

    def _logreg(self, X_train: np.ndarray, X_test: np.ndarray, name: str) -> MetricsReport:
        model = train_weighted_logreg(X_train, self.y_train, np.ones(len(self.y_train)), self.config.train)
        return compute_metrics(predict_labels(model, X_test), self.y_test, name)

    def _evaluate(self, learner: BaseLearner, model, name: str) -> MetricsReport:
        X_test = learner.prepare(self.test)
        probs = learner.predict_proba(model, X_test)
        return compute_metrics((probs >= 0.5).astype(np.int64), self.y_test, name)

    def _fit_on(self, learner: BaseLearner, instances: Sequence[Instance]):
        instances = _require_instances(instances, "training")
        return learner.fit(learner.prepare(instances), _labels(instances), np.ones(len(instances)), seed=self.seed)

    def auxiliary_net(self) -> ConvNet:
        with self._aux_lock:
            if self._aux_net is None:
                learner = build_learner(self.config, "convnet")
                self._aux_net = self._fit_on(learner, _require_instances(self.data.auxiliary, "auxiliary"))
            return self._aux_net

    def feature_transfer(self, net: ConvNet, name: str, layer: FeatureLayer) -> MetricsReport:
        spec = net.spec

        def batch(instances):
            return to_batch(load_images(instances), spec.input_height, spec.input_width, spec.input_channels)

        X_train = extract_feature_matrix(net, batch(self.train), layer)
        X_test = extract_feature_matrix(net, batch(self.test), layer)
        return self._logreg(X_train, X_test, name)

    def run(self, arm: Arm) -> MetricsReport:
        name = arm.value
        try:
            return self._run(arm)
        except DataError as e:
            logger.warning("arm %s skipped: %s", name, e)
            return MetricsReport.skip(name, str(e))

    def _run(self, arm: Arm) -> MetricsReport:
        name = arm.value
        config = self.config
        if arm == Arm.TEXT_BASED:
            lexicons = self.lexicons or Lexicons.load(config.paths.lexicons)
            X_train = text_feature_matrix(_require_text(self.train), lexicons)
            X_test = text_feature_matrix(_require_text(self.test), lexicons)
            return self._logreg(X_train, X_test, name)
        if arm == Arm.BOVW:
            bovw = config.bovw
            train_images = load_images(self.train)
            descriptors = stack_descriptors(
                [extract_descriptors(img, bovw.grid_step, bovw.patch) for img in train_images]
            )
            vocab = build_vocabulary(descriptors, bovw.k, seed=self.seed, max_iters=bovw.max_iters)
            X_train = bovw_feature_matrix(train_images, vocab, bovw.grid_step, bovw.patch)
            X_test = bovw_feature_matrix(load_images(self.test), vocab, bovw.grid_step, bovw.patch)
            return self._logreg(X_train, X_test, name)

        learner = build_learner(config)
        if arm == Arm.TARGET_ONLY:
            return self._evaluate(learner, self._fit_on(learner, self.train), name)
        if arm == Arm.DATA_TRANSFER:
            return self._evaluate(learner, self._fit_on(learner, self.data.auxiliary), name)
        if arm == Arm.COMBINED:
            return self._evaluate(learner, self._fit_on(learner, self.data.ordered_for_boosting()), name)
        if arm == Arm.FEATURE_TRANSFER_EXTERNAL:
            if self.external is None:
                raise DataError("no external pretrained network supplied")
            return self.feature_transfer(self.external, name, config.comparison.feature_layer)
        if arm == Arm.FEATURE_TRANSFER_AUXILIARY:
            return self.feature_transfer(self.auxiliary_net(), name, config.comparison.feature_layer)
        if arm == Arm.MODEL_TRANSFER_EXTERNAL:
            if self.external is None:
                raise DataError("no external pretrained network supplied")
            conv = ConvNetLearner(self.external.spec, config.train, init_std=config.network.init_std)
            X_train = conv.prepare(self.train)
            tuned = conv.fine_tune(self.external, X_train, self.y_train, np.ones(len(self.train)), seed=self.seed)
            return self._evaluate(conv, tuned, name)
        if arm == Arm.MODEL_TRANSFER_AUXILIARY:
            source = self._fit_on(learner, self.data.auxiliary)
            tuned = learner.fine_tune(source, learner.prepare(self.train), self.y_train, np.ones(len(self.train)),
                                      seed=self.seed)
            return self._evaluate(learner, tuned, name)
        if arm == Arm.ITERATIVE_TRANSFER:
            ensemble = run_boost(self.data, learner, config.boost, seed=self.seed)
            return compute_metrics(ensemble_predict(ensemble, learner.prepare(self.test)), self.y_test, name)
        raise ValueError(f"unknown arm {arm}")


def run_comparison(data: Dataset, config: RunConfig, arms: Optional[Sequence[Arm]] = None,
                   external: Optional[ConvNet] = None, lexicons: Optional[Lexicons] = None,
                   max_workers: Optional[int] = None) -> list[MetricsReport]:
    """One report per arm, in arm order; an arm lacking its modality is reported as skipped."""
    arms = [Arm(arm) for arm in (config.comparison.arms if arms is None else arms)]
    if not arms:
        return []
    comparison = _Comparison(data, config, external, lexicons)
    workers = max_workers or config.comparison.max_workers
    if workers == 1:
        return [comparison.run(arm) for arm in arms]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(comparison.run, arms))


def layer_comparison(net: ConvNet, data: Dataset, layers: Sequence[FeatureLayer],
                     config: RunConfig) -> list[MetricsReport]:
    """Logistic regression on each layer's activations: fit on target train, score on target test."""
    comparison = _Comparison(data, config, external=None, lexicons=None)
    return [
        comparison.feature_transfer(net, f"feature_transfer[{FeatureLayer(layer).value}]", FeatureLayer(layer))
        for layer in layers
    ]


def _cell(value: float) -> str:
    return f"{value:.4f}"


def render_table(reports: Sequence[MetricsReport]) -> str:
    """Plain-text table: method, accuracy, then precision/recall/F1 for fake and for real."""
    rows = [("Method",) + TABLE_COLUMNS]
    for report in reports:
        if report.skipped:
            rows.append((report.method_name,) + ("skipped",) + ("",) * (len(TABLE_COLUMNS) - 1))
            continue
        rows.append((
            report.method_name,
            _cell(report.accuracy),
            _cell(report.fake.precision), _cell(report.fake.recall), _cell(report.fake.f1),
            _cell(report.real.precision), _cell(report.real.recall), _cell(report.real.f1),
        ))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for index, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [cell.rjust(width) for cell, width in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if index == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines) + "\n"


def write_ranking_csv(path: Path, ids: Sequence[str], scores: Sequence[float], predictions: Sequence[int],
                      labels: Optional[Sequence[Optional[int]]] = None) -> Path:
    """Instances ordered from most to least confidently fake; equal scores by id."""
    frame = pd.DataFrame({
        "id": list(ids),
        "score": np.asarray(scores, dtype=np.float64),
        "prediction": np.asarray(predictions, dtype=np.int64),
    })
    if labels is not None:
        frame["label"] = pd.array(list(labels), dtype="Int64")
    frame = frame.sort_values(["score", "id"], ascending=[False, True], kind="mergesort")
    frame.insert(0, "rank", np.arange(1, len(frame) + 1))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
