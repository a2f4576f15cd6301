import argparse
from pathlib import Path

import numpy as np

from imgcred.cli.common import add_command, output_dir, resolve_config
from imgcred.cli.models import learner_for, with_feature_csv
from imgcred.core.errors import DataError, UsageError
from imgcred.core.workspace import write_json
from imgcred.schemas.instance_schemas import Dataset
from imgcred.schemas.metrics_schemas import Arm
from imgcred.schemas.model_schemas import FeatureLayer
from imgcred.services import boost_service, evaluation_service, manifest_service, model_service
from imgcred.services.convnet_service import ConvNet
from imgcred.services.feature_service import Lexicons

RANKING = "ranking.csv"


def register(subparsers) -> None:
    evaluate = add_command(subparsers, "evaluate", "score a model or ensemble on the target test set")
    source = evaluate.add_mutually_exclusive_group(required=True)
    source.add_argument("--ensemble", type=Path)
    source.add_argument("--model", type=Path)
    evaluate.add_argument("--manifest", type=Path, required=True)
    evaluate.add_argument("--features", type=Path, help="feature CSV (by id) replacing manifest feature vectors")
    evaluate.add_argument("--out", type=Path, required=True, help="output directory")
    evaluate.set_defaults(handler=run_evaluate)

    compare = add_command(subparsers, "compare", "run the baseline and transfer arms side by side")
    compare.add_argument("--manifest", type=Path, required=True)
    compare.add_argument("--arms", nargs="+", choices=[arm.value for arm in Arm])
    compare.add_argument("--base", choices=["logreg", "convnet"])
    compare.add_argument("--split", metavar="TRAIN:TEST",
                         help="re-split the target instances by this ratio (e.g. 9:1) before comparing")
    compare.add_argument("--lexicons", type=Path, help="directory of <category>.txt lexicon files")
    compare.add_argument("--external-model", type=Path, help="pretrained network for the external-source arms")
    compare.add_argument("--layer-model", type=Path, help="network whose layers are compared as feature extractors")
    compare.add_argument("--layers", nargs="+", choices=[layer.value for layer in FeatureLayer])
    compare.add_argument("--max-workers", type=int)
    compare.add_argument("--out", type=Path, required=True, help="output directory")
    compare.set_defaults(handler=run_compare)


def parse_ratio(text: str) -> tuple[int, int]:
    try:
        train, test = (int(part) for part in text.split(":"))
    except ValueError:
        raise UsageError(f"--split expects TRAIN:TEST integers, got {text!r}")
    if train < 0 or test < 0 or train + test == 0:
        raise UsageError(f"--split ratio must be non-negative and not both zero, got {text!r}")
    return train, test


def _load_network(path: Path) -> ConvNet:
    net = model_service.load_model(path)
    if not isinstance(net, ConvNet):
        raise DataError(f"{path} is not a convolutional network")
    return net


def _write_reports(out: Path, reports, table_name: str) -> None:
    write_json(out / "metrics.json", [report.model_dump(mode="json", exclude_none=True) for report in reports])
    (out / table_name).write_text(evaluation_service.render_table(reports), encoding="utf-8")


def run_evaluate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    dataset = with_feature_csv(manifest_service.load_manifest(args.manifest), args.features)
    test = dataset.target_test
    if not test:
        raise DataError(f"{args.manifest} has no target_test instances")
    labels = [inst.label for inst in test]
    if any(label is None for label in labels):
        raise DataError("target_test instances must be labeled")

    if args.ensemble is not None:
        ensemble = boost_service.load_ensemble(args.ensemble)
        first = ensemble.members[0][0] if ensemble.members else None
        name = args.ensemble.stem
    else:
        first = model_service.load_model(args.model)
        name = args.model.stem
    kind = "convnet" if isinstance(first, ConvNet) else "logreg"
    learner = learner_for(config, kind, spec=first.spec if kind == "convnet" else None)

    with output_dir(args.out, config, "evaluate") as out:
        X = learner.prepare(test)
        if args.ensemble is not None:
            # signed vote margin; non-negative means fake
            scores = boost_service.ensemble_margin(ensemble, X)
            predictions = (scores >= 0.0).astype(np.int64)
        else:
            scores = learner.predict_proba(first, X)
            predictions = (scores >= 0.5).astype(np.int64)
        report = evaluation_service.compute_metrics(predictions, labels, name)
        _write_reports(out, [report], "metrics.txt")
        evaluation_service.write_ranking_csv(out / RANKING, [inst.id for inst in test], scores, predictions, labels)
    return 0


def run_compare(args: argparse.Namespace) -> int:
    config = resolve_config(args, {
        "comparison": {"arms": args.arms, "base_learner": args.base, "max_workers": args.max_workers,
                       "layers": args.layers},
        "paths": {"lexicons": args.lexicons},
    })
    dataset = manifest_service.load_manifest(args.manifest)
    if args.split is not None:
        train, test = evaluation_service.split(dataset, parse_ratio(args.split), seed=config.seed)
        dataset = Dataset(instances=train.instances + test.instances)
    external = _load_network(args.external_model) if args.external_model else None
    layer_net = _load_network(args.layer_model) if args.layer_model else None
    lexicons = Lexicons.load(config.paths.lexicons) if Arm.TEXT_BASED in config.comparison.arms else None

    with output_dir(args.out, config, "compare") as out:
        reports = evaluation_service.run_comparison(dataset, config, external=external, lexicons=lexicons)
        _write_reports(out, reports, "table.txt")
        if layer_net is not None:
            layers = evaluation_service.layer_comparison(layer_net, dataset, config.comparison.layers, config)
            write_json(out / "layers.json", [report.model_dump(mode="json", exclude_none=True) for report in layers])
            with (out / "table.txt").open("a", encoding="utf-8") as table:
                table.write("\n" + evaluation_service.render_table(layers))
    return 0
