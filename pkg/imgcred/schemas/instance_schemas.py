from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Domain(str, Enum):
    AUXILIARY = "auxiliary"
    TARGET_TRAIN = "target_train"
    TARGET_TEST = "target_test"


class Instance(BaseModel):
    """One data point. Only `weight` changes after construction (boosting rounds)."""

    model_config = ConfigDict(validate_assignment=True)

    id: str
    image_path: Optional[str] = None
    text: Optional[str] = None
    features: Optional[list[float]] = None
    label: Optional[Literal[0, 1]] = None
    domain: Domain
    weight: float = Field(default=1.0, ge=0.0, allow_inf_nan=False)

    @model_validator(mode="after")
    def check_content(self):
        if self.image_path is None and self.text is None and self.features is None:
            raise ValueError("instance needs at least one of image, text or features")
        if self.domain != Domain.AUXILIARY and self.label is None:
            raise ValueError(f"{self.domain.value} instance must be labeled")
        return self


class ManifestRecord(BaseModel):
    """One line of a JSON-lines manifest."""

    model_config = ConfigDict(extra="forbid")

    id: str
    image: Optional[str] = None
    text: Optional[str] = None
    features: Optional[list[float]] = None
    label: Optional[Literal[0, 1]] = None
    domain: Domain
    weight: Optional[float] = None


class Dataset(BaseModel):
    instances: list[Instance] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_unique_ids(self):
        seen = set()
        for inst in self.instances:
            if inst.id in seen:
                raise ValueError(f"duplicate instance id {inst.id!r}")
            seen.add(inst.id)
        return self

    def _select(self, domain: Domain) -> list[Instance]:
        return [inst for inst in self.instances if inst.domain == domain]

    @property
    def auxiliary(self) -> list[Instance]:
        return self._select(Domain.AUXILIARY)

    @property
    def target_train(self) -> list[Instance]:
        return self._select(Domain.TARGET_TRAIN)

    @property
    def target_test(self) -> list[Instance]:
        return self._select(Domain.TARGET_TEST)

    @property
    def n(self) -> int:
        return len(self.auxiliary)

    @property
    def m(self) -> int:
        return len(self.target_train)

    def ordered_for_boosting(self) -> list[Instance]:
        # auxiliary at indices 0..n-1, target_train at n..n+m-1
        return self.auxiliary + self.target_train

    def __len__(self) -> int:
        return len(self.instances)
