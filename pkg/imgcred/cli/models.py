import argparse
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from imgcred.cli.common import add_command, output_dir, resolve_config
from imgcred.cli.data import MANIFEST
from imgcred.core.config import RunConfig
from imgcred.core.errors import DataError
from imgcred.schemas.instance_schemas import Dataset, Instance
from imgcred.schemas.model_schemas import FeatureLayer
from imgcred.services import feature_service, manifest_service, model_service
from imgcred.services.convnet_service import ConvNet, extract_feature_matrix, spec_from_config
from imgcred.services.image_service import to_batch
from imgcred.services.learners import BaseLearner, ConvNetLearner, LogRegLearner
from imgcred.services.log_service import RunLog

MODEL = "model.json"


def register(subparsers) -> None:
    train = add_command(subparsers, "train", "train a weighted base learner")
    train.add_argument("learner", choices=["logreg", "convnet"])
    train.add_argument("--manifest", type=Path, required=True)
    train.add_argument("--domain", choices=["target_train", "auxiliary", "combined"], default="target_train",
                       help="which instances to train on (default: target_train)")
    train.add_argument("--features", type=Path, help="feature CSV (by id) replacing manifest feature vectors")
    train.add_argument("--batch-size", type=int)
    train.add_argument("--augment-flips", action="store_true", default=None)
    train.add_argument("--out", type=Path, required=True, help="output directory")
    train.set_defaults(handler=run_train)

    tune = add_command(subparsers, "fine-tune", "fine-tune a trained model on the target training set")
    tune.add_argument("--model", type=Path, required=True)
    tune.add_argument("--manifest", type=Path, required=True)
    tune.add_argument("--features", type=Path, help="feature CSV (by id) replacing manifest feature vectors")
    tune.add_argument("--out", type=Path, required=True, help="output directory")
    tune.set_defaults(handler=run_fine_tune)

    extract = add_command(subparsers, "extract-features", "dump intermediate network activations as features")
    extract.add_argument("--model", type=Path, required=True)
    extract.add_argument("--manifest", type=Path, required=True)
    extract.add_argument("--layer", choices=[layer.value for layer in FeatureLayer], default=FeatureLayer.FC6.value)
    extract.add_argument("--out", type=Path, required=True, help="output directory")
    extract.set_defaults(handler=run_extract_features)


def with_feature_csv(dataset: Dataset, path: Optional[Path]) -> Dataset:
    if path is None:
        return dataset
    ids, matrix, _ = feature_service.read_feature_csv(path)
    rows = dict(zip(ids, matrix))
    missing = [inst.id for inst in dataset.instances if inst.id not in rows]
    if missing:
        raise DataError(f"{path} has no row for {len(missing)} instances (first: {missing[0]!r})")
    return Dataset(instances=[
        inst.model_copy(update={"features": rows[inst.id].tolist()}) for inst in dataset.instances
    ])


def select(dataset: Dataset, domain: str) -> list[Instance]:
    if domain == "auxiliary":
        instances = dataset.auxiliary
    elif domain == "combined":
        instances = dataset.ordered_for_boosting()
    else:
        instances = dataset.target_train
    if not instances:
        raise DataError(f"manifest has no {domain} instances")
    unlabeled = [inst.id for inst in instances if inst.label is None]
    if unlabeled:
        raise DataError(f"{len(unlabeled)} training instances are unlabeled (first: {unlabeled[0]!r})")
    return instances


def learner_for(config: RunConfig, kind: str, spec=None) -> BaseLearner:
    if kind == "convnet":
        return ConvNetLearner(spec or spec_from_config(config.network), config.train,
                              init_std=config.network.init_std)
    return LogRegLearner(config.train)


def _fit_arrays(learner: BaseLearner, instances: Sequence[Instance]):
    X = learner.prepare(instances)
    y = np.array([inst.label for inst in instances], dtype=np.int64)
    w = np.array([inst.weight for inst in instances], dtype=np.float64)
    return X, y, w


def _write_model(model, out: Path) -> None:
    model_service.save_model(model, out / MODEL)
    if isinstance(model, ConvNet):
        log = RunLog(out / "train_log.jsonl")
        for epoch, loss in enumerate(model.loss_history, start=1):
            log.append({"epoch": epoch, "loss": loss})


def run_train(args: argparse.Namespace) -> int:
    config = resolve_config(args, {"train": {"batch_size": args.batch_size, "augment_flips": args.augment_flips}})
    dataset = with_feature_csv(manifest_service.load_manifest(args.manifest), args.features)
    instances = select(dataset, args.domain)
    learner = learner_for(config, args.learner)
    with output_dir(args.out, config, f"train {args.learner}") as out:
        X, y, w = _fit_arrays(learner, instances)
        _write_model(learner.fit(X, y, w), out)
    return 0


def run_fine_tune(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    source = model_service.load_model(args.model)
    dataset = with_feature_csv(manifest_service.load_manifest(args.manifest), args.features)
    instances = select(dataset, "target_train")
    kind = "convnet" if isinstance(source, ConvNet) else "logreg"
    learner = learner_for(config, kind, spec=source.spec if kind == "convnet" else None)
    with output_dir(args.out, config, "fine-tune") as out:
        X, y, w = _fit_arrays(learner, instances)
        _write_model(learner.fine_tune(source, X, y, w), out)
    return 0


def run_extract_features(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    net = model_service.load_model(args.model)
    if not isinstance(net, ConvNet):
        raise DataError(f"{args.model} is not a convolutional network")
    dataset = manifest_service.load_manifest(args.manifest)
    instances = [inst for inst in dataset.instances if inst.image_path is not None]
    spec = net.spec
    with output_dir(args.out, config, "extract-features") as out:
        batch = to_batch(manifest_service.load_images(instances), spec.input_height, spec.input_width,
                         spec.input_channels)
        matrix = extract_feature_matrix(net, batch, args.layer)
        columns = [f"{args.layer}_{j}" for j in range(matrix.shape[1])]
        feature_service.write_feature_csv(out / "features.csv", [inst.id for inst in instances], matrix, columns,
                                          labels=[inst.label for inst in instances])
        featured = [inst.model_copy(update={"features": row.tolist()}) for inst, row in zip(instances, matrix)]
        manifest_service.save_manifest(Dataset(instances=featured), out / MANIFEST)
    return 0
