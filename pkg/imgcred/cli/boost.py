import argparse
from pathlib import Path

import numpy as np

from imgcred.cli.common import add_command, output_dir, resolve_config
from imgcred.cli.models import learner_for, with_feature_csv
from imgcred.schemas.boost_schemas import EpsilonPolicy, InitStrategy, VoteRange
from imgcred.services import boost_service, manifest_service
from imgcred.services.log_service import RunLog

# "finetune" is accepted as shorthand for finetune_based
INIT_CHOICES = {
    "average": InitStrategy.AVERAGE,
    "finetune": InitStrategy.FINETUNE_BASED,
    "finetune_based": InitStrategy.FINETUNE_BASED,
}
BOOST_LOG = "boost_log.jsonl"


def register(subparsers) -> None:
    boost = add_command(subparsers, "transfer-boost", "iterative instance-weighted transfer from the auxiliary set")
    boost.add_argument("--manifest", type=Path, required=True)
    boost.add_argument("--features", type=Path, help="feature CSV (by id) replacing manifest feature vectors")
    boost.add_argument("--iterations", type=int)
    boost.add_argument("--init", choices=sorted(INIT_CHOICES), help="initial weight strategy")
    boost.add_argument("--base", choices=["logreg", "convnet"], help="base learner (default: comparison.base_learner)")
    boost.add_argument("--vote-range", choices=[v.value for v in VoteRange])
    boost.add_argument("--epsilon-policy", choices=[p.value for p in EpsilonPolicy])
    boost.add_argument("--out", type=Path, required=True, help="ensemble file to write; the run log goes beside it")
    boost.set_defaults(handler=run_transfer_boost)


def run_transfer_boost(args: argparse.Namespace) -> int:
    config = resolve_config(args, {
        "boost": {
            "iterations": args.iterations,
            "init_strategy": INIT_CHOICES[args.init].value if args.init else None,
            "vote_range": args.vote_range,
            "epsilon_policy_on_half": args.epsilon_policy,
        },
        "comparison": {"base_learner": args.base},
    })
    dataset = with_feature_csv(manifest_service.load_manifest(args.manifest), args.features)
    learner = learner_for(config, config.comparison.base_learner)
    test = None
    held_out = dataset.target_test
    if held_out and all(inst.label is not None for inst in held_out):
        test = (learner.prepare(held_out), np.array([inst.label for inst in held_out], dtype=np.int64))
    with output_dir(args.out.parent, config, "transfer-boost") as out:
        ensemble = boost_service.run_boost(
            dataset, learner, config.boost, seed=config.seed, test=test, run_log=RunLog(out / BOOST_LOG),
        )
        boost_service.save_ensemble(ensemble, args.out)
    return 0
