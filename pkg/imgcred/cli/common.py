import argparse
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional

from imgcred.core.config import RunConfig, dump_run_config, load_run_config
from imgcred.core.errors import UsageError
from imgcred.core.workspace import OutputLock
from imgcred.services import log_service

EFFECTIVE_CONFIG = "effective_config.json"


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors raise UsageError (exit 1) instead of exiting with argparse's 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug output")
    parent.add_argument("--config", type=Path, help="JSON run configuration")
    parent.add_argument("--seed", type=int, help="global seed (overrides every seed in the configuration)")
    return parent


def add_command(subparsers, name: str, help_text: str) -> argparse.ArgumentParser:
    return subparsers.add_parser(name, help=help_text, description=help_text, parents=[common_options()])


def resolve_config(args: argparse.Namespace, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Defaults < --config file < command flags."""
    overrides = dict(overrides or {})
    if args.seed is not None:
        overrides["seed"] = args.seed
        for section in ("train", "shift"):
            overrides[section] = {**overrides.get(section, {}), "seed": args.seed}
    return load_run_config(args.config, overrides)


@contextmanager
def output_dir(directory: Path, config: RunConfig, action: str) -> Iterator[Path]:
    """Lock the directory, echo the effective configuration, log start and finish."""
    directory = Path(directory)
    with OutputLock(directory):
        (directory / EFFECTIVE_CONFIG).write_text(dump_run_config(config), encoding="utf-8")
        log_service.log_activity(action, "started", resource_id=str(directory))
        try:
            yield directory
        except Exception as e:
            log_service.log_activity(action, "failed", resource_id=str(directory), details=str(e))
            raise
        log_service.log_activity(action, "finished", resource_id=str(directory))
