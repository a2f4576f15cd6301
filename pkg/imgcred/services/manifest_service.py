import json
import logging
import os
from pathlib import Path
from typing import Sequence

from pydantic import ValidationError

from imgcred.core.errors import DataError, ManifestError
from imgcred.schemas.instance_schemas import Dataset, Instance, ManifestRecord
from imgcred.services.image_service import ImageTensor, decode_image

logger = logging.getLogger(__name__)


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(part) for part in err["loc"])
    return f"{where}: {err['msg']}" if where else err["msg"]


def load_manifest(path: Path) -> Dataset:
    """Read a JSON-lines manifest. Image paths are resolved against the manifest's directory."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    base_dir = path.resolve().parent
    instances: list[Instance] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = ManifestRecord.model_validate(json.loads(line))
            except json.JSONDecodeError as e:
                raise ManifestError(f"malformed JSON: {e.msg}", line_number)
            except ValidationError as e:
                raise ManifestError(_first_error(e), line_number)
            if record.id in seen:
                raise ManifestError(f"duplicate id {record.id!r}", line_number)
            seen.add(record.id)
            try:
                instances.append(
                    Instance(
                        id=record.id,
                        image_path=str(base_dir / record.image) if record.image is not None else None,
                        text=record.text,
                        features=record.features,
                        label=record.label,
                        domain=record.domain,
                        weight=1.0 if record.weight is None else record.weight,
                    )
                )
            except ValidationError as e:
                raise ManifestError(_first_error(e), line_number)
    dataset = Dataset(instances=instances)
    logger.info("loaded %s: n=%d auxiliary, m=%d target_train, %d target_test",
                path, dataset.n, dataset.m, len(dataset.target_test))
    return dataset


def save_manifest(dataset: Dataset, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base_dir = path.resolve().parent
    with path.open("w", encoding="utf-8") as handle:
        for inst in dataset.instances:
            image = None
            if inst.image_path is not None:
                image = Path(os.path.relpath(Path(inst.image_path).resolve(), base_dir)).as_posix()
            record = ManifestRecord(
                id=inst.id,
                image=image,
                text=inst.text,
                features=inst.features,
                label=inst.label,
                domain=inst.domain,
                weight=inst.weight,
            )
            handle.write(json.dumps(record.model_dump(mode="json", exclude_none=True), sort_keys=True) + "\n")
    return path


def read_image_file(path: Path) -> ImageTensor:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read image {path}: {e}")
    return decode_image(data)


def load_images(instances: Sequence[Instance]) -> list[ImageTensor]:
    missing = [inst.id for inst in instances if inst.image_path is None]
    if missing:
        raise DataError(f"{len(missing)} instances have no image (first: {missing[0]!r})")
    return [read_image_file(inst.image_path) for inst in instances]
