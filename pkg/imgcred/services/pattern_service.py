import json
import logging
import re
from collections import Counter
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError
from scipy.stats import entropy

from imgcred.core.errors import DataError, SingleClassError
from imgcred.schemas.instance_schemas import Dataset, Domain, Instance
from imgcred.schemas.pattern_schemas import (
    CorpusRecord,
    PatternList,
    PatternScore,
    PostRecord,
    ScoreMethod,
    TokenizedDoc,
)

logger = logging.getLogger(__name__)

Tokenizer = Callable[[str], list[str]]
NGram = tuple[str, ...]
RecordT = TypeVar("RecordT", bound=BaseModel)

_TOKEN_RE = re.compile(r"https?://\S+|[@#]\w+|\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase; keep URLs, @mentions and #hashtags whole; punctuation marks become single tokens."""
    return _TOKEN_RE.findall(text.lower())


def extract_ngrams(tokens: Sequence[str], max_n: int = 3) -> Counter:
    if not 1 <= max_n <= 3:
        raise ValueError(f"max_n must lie in [1, 3], got {max_n}")
    counts: Counter = Counter()
    for n in range(1, max_n + 1):
        for start in range(len(tokens) - n + 1):
            counts[tuple(tokens[start:start + n])] += 1
    return counts


def chi_squared(contingency: tuple[int, int, int, int]) -> float:
    a, b, c, d = contingency
    margins = (a + b) * (c + d) * (a + c) * (b + d)
    if margins == 0:
        return 0.0
    total = a + b + c + d
    # integer numerator keeps the value exact up to the final division
    return total * (a * d - b * c) ** 2 / margins


def info_gain_ratio(contingency: tuple[int, int, int, int]) -> float:
    a, b, c, d = contingency
    total = a + b + c + d
    if total == 0:
        return 0.0
    present, absent = a + b, c + d
    intrinsic = entropy([present, absent], base=2)
    if intrinsic == 0.0:
        return 0.0
    conditional = 0.0
    if present:
        conditional += present / total * entropy([a, b], base=2)
    if absent:
        conditional += absent / total * entropy([c, d], base=2)
    gain = entropy([a + c, b + d], base=2) - conditional
    return float(np.clip(gain / intrinsic, 0.0, 1.0))


def tokenize_corpus(records: Iterable[CorpusRecord], tokenizer: Tokenizer = tokenize) -> list[TokenizedDoc]:
    return [TokenizedDoc(id=r.id, tokens=tokenizer(r.text), label=r.label) for r in records]


def _read_jsonl(path: Path, record_type: type[RecordT]) -> list[RecordT]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    records = []
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(record_type.model_validate_json(line))
            except ValidationError as e:
                raise DataError(f"{path} line {line_number}: {e.errors()[0]['msg']}")
    return records


def load_corpus(path: Path) -> list[CorpusRecord]:
    return _read_jsonl(path, CorpusRecord)


def load_posts(path: Path) -> list[PostRecord]:
    return _read_jsonl(path, PostRecord)


def score_patterns(corpus: Sequence[TokenizedDoc], max_n: int = 3, min_df: int = 1) -> list[PatternScore]:
    """Score every n-gram with document frequency >= min_df (eligible or not)."""
    labels = [doc.label for doc in corpus]
    total_fake = sum(labels)
    total_real = len(labels) - total_fake
    if total_fake == 0 or total_real == 0:
        raise SingleClassError("pattern mining needs both fake and real documents")

    tf: Counter = Counter()
    fake_df: Counter = Counter()
    real_df: Counter = Counter()
    for doc in corpus:
        counts = extract_ngrams(doc.tokens, max_n)
        tf.update(counts)
        (fake_df if doc.label == 1 else real_df).update(counts.keys())

    scores = []
    for ngram, count in tf.items():
        a, b = fake_df[ngram], real_df[ngram]
        if a + b < min_df:
            continue
        cell = (a, b, total_fake - a, total_real - b)
        scores.append(PatternScore(ngram=ngram, tf=count, doc_counts=cell,
                                   chi2=chi_squared(cell), gain_ratio=info_gain_ratio(cell)))
    return scores


def ranking_key(score: PatternScore, method: ScoreMethod):
    # equal scores: longer n-gram first (it subsumes its sub-n-grams), then lexicographic
    return (-score.score(method), -len(score.ngram), " ".join(score.ngram))


def rank_patterns(corpus: Sequence[TokenizedDoc], max_n: int = 3, method: ScoreMethod = ScoreMethod.CHI2,
                  top_k: int = 50, min_df: int = 1) -> PatternList:
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    method = ScoreMethod(method)
    eligible = [s for s in score_patterns(corpus, max_n, min_df) if s.fake_indicative]
    eligible.sort(key=lambda s: ranking_key(s, method))
    selected = eligible[:top_k]
    if selected:
        logger.info("top %s pattern: %r (score %.4f)", method.value, " ".join(selected[0].ngram),
                    selected[0].score(method))
    return PatternList(method=method, patterns=[s.ngram for s in selected])


def weak_label(texts: Iterable[tuple[str, Sequence[str]]], patterns: PatternList) -> list[tuple[str, int]]:
    """Label 1 for every text containing a pattern contiguously; no label otherwise."""
    if not patterns.patterns:
        raise ValueError("weak labeling needs at least one pattern")
    by_length: dict[int, set[NGram]] = {}
    for pattern in patterns.patterns:
        by_length.setdefault(len(pattern), set()).add(tuple(pattern))
    labeled = []
    for text_id, tokens in texts:
        tokens = list(tokens)
        for n, group in by_length.items():
            if any(tuple(tokens[i:i + n]) in group for i in range(len(tokens) - n + 1)):
                labeled.append((text_id, 1))
                break
    return labeled


def weak_label_dataset(posts: Sequence[tuple[str, str]], patterns: PatternList,
                       trusted_real: Sequence[tuple[str, str]] = (),
                       tokenizer: Tokenizer = tokenize,
                       image_paths: Optional[dict[str, str]] = None) -> Dataset:
    """Auxiliary set: pattern-matched posts as fake, posts from trusted sources as real."""
    image_paths = image_paths or {}
    matched = weak_label([(pid, tokenizer(text)) for pid, text in posts], patterns)
    texts = dict(posts)
    instances = [
        Instance(id=pid, text=texts[pid], image_path=image_paths.get(pid), label=label, domain=Domain.AUXILIARY)
        for pid, label in matched
    ]
    instances += [
        Instance(id=pid, text=text, image_path=image_paths.get(pid), label=0, domain=Domain.AUXILIARY)
        for pid, text in trusted_real
    ]
    logger.info("weak labeling matched %d of %d posts; %d trusted real posts added",
                len(matched), len(posts), len(trusted_real))
    return Dataset(instances=instances)


def save_patterns(patterns: PatternList, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"method": patterns.method.value, "patterns": [list(p) for p in patterns.patterns]}
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def load_patterns(path: Path) -> PatternList:
    try:
        return PatternList.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"pattern file not found: {path}")
    except ValidationError as e:
        raise DataError(f"invalid pattern file {path}: {e.errors()[0]['msg']}")


def write_scores_csv(scores: Sequence[PatternScore], path: Path, method: ScoreMethod = ScoreMethod.CHI2) -> Path:
    """Candidate table for hand curation, best first."""
    ordered = sorted(scores, key=lambda s: ranking_key(s, ScoreMethod(method)))
    frame = pd.DataFrame(
        [
            {
                "ngram": " ".join(s.ngram),
                "tf": s.tf,
                "df": s.df,
                "fake_docs": s.doc_counts[0],
                "real_docs": s.doc_counts[1],
                "chi2": s.chi2,
                "gain_ratio": s.gain_ratio,
                "fake_indicative": s.fake_indicative,
            }
            for s in ordered
        ],
        columns=["ngram", "tf", "df", "fake_docs", "real_docs", "chi2", "gain_ratio", "fake_indicative"],
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
