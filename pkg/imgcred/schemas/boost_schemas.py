from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, Field

from imgcred.schemas.model_schemas import ModelDocument


class InitStrategy(str, Enum):
    AVERAGE = "average"
    FINETUNE_BASED = "finetune_based"


class EpsilonPolicy(str, Enum):
    HALT_KEEP_PREVIOUS = "halt_keep_previous"
    CLAMP = "clamp"


class VoteRange(str, Enum):
    ALL_ITERATIONS = "all_iterations"
    LAST_HALF = "last_half"


class EnsembleMember(BaseModel):
    beta_t: float = Field(gt=0.0, lt=1.0)
    epsilon_t: float
    model: ModelDocument


class EnsembleDocument(BaseModel):
    format_version: Literal[1] = 1
    vote_range: VoteRange
    members: list[EnsembleMember]


class IterationLogRecord(BaseModel):
    t: int
    epsilon_t: float
    beta_t: float
    target_accuracy: float
    aux_weight_mass: float
    loss: float
    test_accuracy: Optional[float] = None
    stopped: bool = False
