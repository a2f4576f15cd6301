import json
import logging
import sys
from pathlib import Path
from typing import Optional

from pydantic import BaseModel

logger = logging.getLogger("imgcred.activity")

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def configure_logging(verbosity: int = 0) -> None:
    """Route all package logging to stderr; -v for INFO, -vv for DEBUG."""
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    root = logging.getLogger("imgcred")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def log_activity(action: str, status: str, resource_id: Optional[str] = None, details: Optional[str] = None) -> None:
    message = f"{action} {status}"
    if resource_id:
        message += f" [{resource_id}]"
    if details:
        message += f": {details}"
    logger.log(logging.WARNING if status == "failed" else logging.INFO, message)


class RunLog:
    """JSON-lines run log. The file is truncated when the log is opened."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")
        self.records: list[dict] = []

    def append(self, record: BaseModel | dict) -> None:
        payload = record.model_dump(mode="json") if isinstance(record, BaseModel) else dict(record)
        self.records.append(payload)
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(payload, sort_keys=True) + "\n")
