import argparse
from pathlib import Path

from imgcred.cli.common import add_command, output_dir, resolve_config
from imgcred.services import pattern_service


def register(subparsers) -> None:
    mine = add_command(subparsers, "mine-patterns", "rank fake-indicative n-grams in a labeled corpus")
    mine.add_argument("--corpus", type=Path, required=True, help="JSON-lines {id, text, label}")
    mine.add_argument("--method", choices=["chi2", "gain_ratio"])
    mine.add_argument("--top-k", type=int)
    mine.add_argument("--max-n", type=int)
    mine.add_argument("--min-df", type=int)
    mine.add_argument("--scores", type=Path, help="also write the full candidate table as CSV")
    mine.add_argument("--out", type=Path, required=True, help="pattern file to write")
    mine.set_defaults(handler=run_mine_patterns)


def run_mine_patterns(args: argparse.Namespace) -> int:
    config = resolve_config(args, {"patterns": {
        "method": args.method, "top_k": args.top_k, "max_n": args.max_n, "min_df": args.min_df,
    }})
    cfg = config.patterns
    corpus = pattern_service.tokenize_corpus(pattern_service.load_corpus(args.corpus))
    with output_dir(args.out.parent, config, "mine-patterns"):
        patterns = pattern_service.rank_patterns(corpus, cfg.max_n, cfg.method, cfg.top_k, cfg.min_df)
        pattern_service.save_patterns(patterns, args.out)
        if args.scores is not None:
            scores = pattern_service.score_patterns(corpus, cfg.max_n, cfg.min_df)
            pattern_service.write_scores_csv(scores, args.scores, cfg.method)
    return 0
