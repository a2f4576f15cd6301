from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, model_validator


class Arm(str, Enum):
    TEXT_BASED = "text_based"
    BOVW = "bovw"
    TARGET_ONLY = "target_only"
    DATA_TRANSFER = "data_transfer"
    COMBINED = "combined"
    FEATURE_TRANSFER_EXTERNAL = "feature_transfer_external"
    FEATURE_TRANSFER_AUXILIARY = "feature_transfer_auxiliary"
    MODEL_TRANSFER_EXTERNAL = "model_transfer_external"
    MODEL_TRANSFER_AUXILIARY = "model_transfer_auxiliary"
    ITERATIVE_TRANSFER = "iterative_transfer"


class ConfusionCounts(BaseModel):
    # fake is the positive class
    tp: int = Field(ge=0)
    fp: int = Field(ge=0)
    tn: int = Field(ge=0)
    fn: int = Field(ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class ClassMetrics(BaseModel):
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    f1: float = Field(ge=0.0, le=1.0)


class MetricsReport(BaseModel):
    method_name: str
    accuracy: float = 0.0
    fake: ClassMetrics = ClassMetrics(precision=0.0, recall=0.0, f1=0.0)
    real: ClassMetrics = ClassMetrics(precision=0.0, recall=0.0, f1=0.0)
    counts: Optional[ConfusionCounts] = None
    skipped: bool = False
    note: Optional[str] = None

    @model_validator(mode="after")
    def check_counts(self):
        if self.skipped and self.counts is not None:
            raise ValueError("skipped report carries no counts")
        return self

    @classmethod
    def skip(cls, method_name: str, reason: str) -> "MetricsReport":
        return cls(method_name=method_name, skipped=True, note=reason)
