import sys
from typing import Optional, Sequence

from imgcred.cli import boost, data, evaluate, models, patterns
from imgcred.cli.common import ArgumentParser
from imgcred.core.errors import ImgCredError, UsageError
from imgcred.services.log_service import configure_logging

COMMAND_MODULES = (data, patterns, models, boost, evaluate)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="imgcred",
        description="Image credibility classification with weakly labeled auxiliary data and transfer boosting.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser, metavar="COMMAND")
    for module in COMMAND_MODULES:
        module.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e.detail}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 0

    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except ImgCredError as e:
        print(f"error: {e.detail}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
