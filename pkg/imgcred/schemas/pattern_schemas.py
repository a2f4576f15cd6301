from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator


class ScoreMethod(str, Enum):
    CHI2 = "chi2"
    GAIN_RATIO = "gain_ratio"


class CorpusRecord(BaseModel):
    id: str
    text: str
    label: Literal[0, 1]


class PostRecord(BaseModel):
    """An unlabeled post awaiting weak labeling; `image` is relative to the post file."""

    id: str
    text: str
    image: Optional[str] = None


class TokenizedDoc(BaseModel):
    id: str
    tokens: list[str]
    label: Literal[0, 1]


class PatternScore(BaseModel):
    ngram: tuple[str, ...]
    tf: int = Field(ge=0)
    # (fake docs containing, real docs containing, fake docs lacking, real docs lacking)
    doc_counts: tuple[int, int, int, int]
    chi2: float = Field(ge=0.0)
    gain_ratio: float = Field(ge=0.0, le=1.0)

    @property
    def df(self) -> int:
        a, b, _, _ = self.doc_counts
        return a + b

    @property
    def fake_indicative(self) -> bool:
        a, b, c, d = self.doc_counts
        return a * (b + d) > b * (a + c)

    def score(self, method: ScoreMethod) -> float:
        return self.chi2 if method == ScoreMethod.CHI2 else self.gain_ratio


class PatternList(BaseModel):
    """Ranked patterns; also the on-disk pattern file layout."""

    method: ScoreMethod
    patterns: list[tuple[str, ...]]

    @field_validator("patterns")
    @classmethod
    def non_empty_ngrams(cls, value):
        for ngram in value:
            if not 1 <= len(ngram) <= 3:
                raise ValueError(f"pattern {list(ngram)} must have 1 to 3 tokens")
        return value
