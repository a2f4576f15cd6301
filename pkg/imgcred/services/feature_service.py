import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from imgcred.core.errors import DataError, ShapeError
from imgcred.services.image_service import ImageTensor, to_grayscale
from imgcred.services.pattern_service import Tokenizer, tokenize

logger = logging.getLogger(__name__)

TEXT_FEATURE_NAMES = (
    "exclamation_count",
    "question_count",
    "positive_word_count",
    "negative_word_count",
    "sentiment_score",
    "word_count",
    "char_count",
    "first_person_count",
    "second_person_count",
    "third_person_count",
    "people_count",
    "location_count",
    "organization_count",
    "url_count",
    "mention_count",
    "hashtag_count",
)

LEXICON_CATEGORIES = (
    "positive", "negative", "first_person", "second_person", "third_person",
    "people", "location", "organization",
)

ORIENTATION_BINS = 8
SPATIAL_CELLS = 4
DESCRIPTOR_DIM = SPATIAL_CELLS * SPATIAL_CELLS * ORIENTATION_BINS
CLIP_VALUE = 0.2

_WORD_RE = re.compile(r"\w", re.UNICODE)


@dataclass(frozen=True)
class Lexicons:
    """Word lists per category; multi-word entries are stored as token tuples."""

    entries: Mapping[str, frozenset]

    @classmethod
    def from_lists(cls, lists: Mapping[str, Sequence[str]], tokenizer: Tokenizer = tokenize) -> "Lexicons":
        missing = [c for c in LEXICON_CATEGORIES if c not in lists]
        if missing:
            raise DataError(f"lexicons missing categories: {', '.join(missing)}")
        return cls({
            category: frozenset(tuple(tokenizer(entry)) for entry in lists[category] if entry.strip())
            for category in LEXICON_CATEGORIES
        })

    @classmethod
    def load(cls, directory: Optional[Path] = None) -> "Lexicons":
        """One UTF-8 file per category (`<category>.txt`, one entry per line); built-ins when no directory."""
        lists = {}
        for category in LEXICON_CATEGORIES:
            if directory is None:
                bundled = resources.files("imgcred.resources").joinpath("lexicons").joinpath(f"{category}.txt")
                text = bundled.read_text(encoding="utf-8")
            else:
                path = Path(directory) / f"{category}.txt"
                if not path.is_file():
                    raise DataError(f"lexicon file not found: {path}")
                text = path.read_text(encoding="utf-8")
            lists[category] = text.splitlines()
        return cls.from_lists(lists)

    def count(self, category: str, tokens: Sequence[str]) -> int:
        entries = self.entries[category]
        lengths = {len(entry) for entry in entries}
        return sum(
            1
            for n in lengths
            for i in range(len(tokens) - n + 1)
            if tuple(tokens[i:i + n]) in entries
        )


def text_features(text: str, lexicons: Lexicons, tokenizer: Tokenizer = tokenize) -> np.ndarray:
    """The 16 hand-crafted text features, in TEXT_FEATURE_NAMES order."""
    tokens = tokenizer(text)
    positive = lexicons.count("positive", tokens)
    negative = lexicons.count("negative", tokens)
    sentiment = (positive - negative) / (positive + negative) if positive + negative else 0.0
    return np.array([
        tokens.count("!"),
        tokens.count("?"),
        positive,
        negative,
        sentiment,
        sum(1 for tok in tokens if _WORD_RE.search(tok)),
        len(text),
        lexicons.count("first_person", tokens),
        lexicons.count("second_person", tokens),
        lexicons.count("third_person", tokens),
        lexicons.count("people", tokens),
        lexicons.count("location", tokens),
        lexicons.count("organization", tokens),
        sum(1 for tok in tokens if tok.startswith("http")),
        sum(1 for tok in tokens if tok.startswith("@")),
        sum(1 for tok in tokens if tok.startswith("#")),
    ], dtype=np.float64)


def text_feature_matrix(texts: Sequence[str], lexicons: Lexicons, tokenizer: Tokenizer = tokenize) -> np.ndarray:
    if not texts:
        return np.zeros((0, len(TEXT_FEATURE_NAMES)))
    return np.vstack([text_features(text, lexicons, tokenizer) for text in texts])


def _normalize_descriptor(vector: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        return vector
    vector = np.minimum(vector / norm, CLIP_VALUE)
    return vector / np.linalg.norm(vector)


def extract_descriptors(img: ImageTensor, grid_step: int = 8, patch: int = 16) -> np.ndarray:
    """Dense SIFT-like descriptors, one row per patch on the grid: 4x4 cells x 8 orientation bins."""
    if patch % SPATIAL_CELLS:
        raise ShapeError("patch must be a multiple of 4")
    gray = to_grayscale(img).values[:, :, 0]
    height, width = gray.shape
    if height < patch or width < patch:
        return np.zeros((0, DESCRIPTOR_DIM))

    grad_y, grad_x = np.gradient(gray)
    magnitude = np.hypot(grad_x, grad_y)
    angle = np.mod(np.arctan2(grad_y, grad_x), 2.0 * np.pi)
    orientation = np.floor(angle / (2.0 * np.pi / ORIENTATION_BINS)).astype(np.int64) % ORIENTATION_BINS

    cell = patch // SPATIAL_CELLS
    rows = np.arange(patch) // cell
    cell_index = (rows[:, None] * SPATIAL_CELLS + rows[None, :]) * ORIENTATION_BINS

    descriptors = []
    for top in range(0, height - patch + 1, grid_step):
        for left in range(0, width - patch + 1, grid_step):
            window = (slice(top, top + patch), slice(left, left + patch))
            hist = np.bincount(
                (cell_index + orientation[window]).ravel(),
                weights=magnitude[window].ravel(),
                minlength=DESCRIPTOR_DIM,
            )
            descriptors.append(_normalize_descriptor(hist))
    return np.vstack(descriptors)


@dataclass
class Vocabulary:
    centroids: np.ndarray
    objective_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def descriptor_dim(self) -> int:
        return self.centroids.shape[1]


def _reseed_empty(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray, sq_dist: np.ndarray) -> None:
    # empty cluster takes the point farthest from its own centroid
    for j in range(centroids.shape[0]):
        if np.any(labels == j):
            continue
        own = sq_dist[np.arange(points.shape[0]), labels]
        far = int(np.argmax(own))
        labels[far] = j
        sq_dist[far, j] = 0.0
        centroids[j] = points[far]
        logger.debug("reseeded empty cluster %d with point %d", j, far)


def build_vocabulary(descriptors: np.ndarray, k: int, seed: int = 0, max_iters: int = 100) -> Vocabulary:
    """k-means with k-means++ seeding; Lloyd iterations until the assignment stops changing."""
    points = np.asarray(descriptors, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if points.ndim != 2 or points.shape[0] < k:
        raise DataError(f"need at least k={k} descriptors, got {points.shape[0] if points.ndim == 2 else 0}")
    if np.unique(points, axis=0).shape[0] < k:
        raise DataError(f"fewer than k={k} distinct descriptors")

    centroids, _ = kmeans_plusplus(points, n_clusters=k, random_state=seed)
    centroids = centroids.astype(np.float64)
    labels: Optional[np.ndarray] = None
    history: list[float] = []
    for iteration in range(max_iters):
        sq_dist = cdist(points, centroids, "sqeuclidean")
        new_labels = sq_dist.argmin(axis=1)
        history.append(float(sq_dist[np.arange(points.shape[0]), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        _reseed_empty(points, centroids, labels, sq_dist)
        for j in range(k):
            members = points[labels == j]
            if members.shape[0]:
                centroids[j] = members.mean(axis=0)
    logger.info("vocabulary k=%d converged after %d iterations (objective %.6g)", k, len(history), history[-1])
    return Vocabulary(centroids=centroids, objective_history=history)


def stack_descriptors(per_image: Sequence[np.ndarray]) -> np.ndarray:
    rows = [d for d in per_image if d.size]
    return np.vstack(rows) if rows else np.zeros((0, DESCRIPTOR_DIM))


def assign_words(descriptors: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    # argmin picks the lowest index on ties
    return cdist(descriptors, vocab.centroids, "euclidean").argmin(axis=1)


def bovw_histogram(descriptors: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    descriptors = np.asarray(descriptors, dtype=np.float64)
    if descriptors.size == 0:
        return np.zeros(vocab.k)
    if descriptors.shape[1] != vocab.descriptor_dim:
        raise ShapeError(f"descriptor dim {descriptors.shape[1]} != vocabulary dim {vocab.descriptor_dim}")
    counts = np.bincount(assign_words(descriptors, vocab), minlength=vocab.k).astype(np.float64)
    return counts / counts.sum()


def bovw_feature_matrix(images: Sequence[ImageTensor], vocab: Vocabulary, grid_step: int = 8,
                        patch: int = 16) -> np.ndarray:
    if not images:
        return np.zeros((0, vocab.k))
    return np.vstack([bovw_histogram(extract_descriptors(img, grid_step, patch), vocab) for img in images])


def write_feature_csv(path: Path, ids: Sequence[str], matrix: np.ndarray, columns: Sequence[str],
                      labels: Optional[Sequence[Optional[int]]] = None) -> Path:
    frame = pd.DataFrame(np.asarray(matrix, dtype=np.float64), columns=list(columns))
    frame.insert(0, "id", list(ids))
    if labels is not None:
        frame["label"] = pd.array(list(labels), dtype="Int64")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def read_feature_csv(path: Path) -> tuple[list[str], np.ndarray, Optional[np.ndarray]]:
    """Returns (ids, feature matrix, labels or None)."""
    try:
        frame = pd.read_csv(path, dtype={"id": str})
    except FileNotFoundError:
        raise DataError(f"feature file not found: {path}")
    if "id" not in frame.columns:
        raise DataError(f"{path}: missing 'id' column")
    labels = None
    if "label" in frame.columns:
        if frame["label"].isna().any():
            raise DataError(f"{path}: unlabeled rows")
        labels = frame.pop("label").to_numpy(dtype=np.int64)
    ids = frame.pop("id").tolist()
    return ids, frame.to_numpy(dtype=np.float64), labels
