import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from imgcred.services.image_service import ImageTensor, resize_bilinear, to_grayscale

logger = logging.getLogger(__name__)

THUMBNAIL_SIZE = 16


@dataclass(frozen=True)
class BitSignature:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool).copy()
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return self.bits.size

    def hamming(self, other: "BitSignature") -> int:
        if len(self) != len(other):
            raise ValueError(f"signature lengths differ: {len(self)} vs {len(other)}")
        return int(np.count_nonzero(self.bits != other.bits))

    def __eq__(self, other) -> bool:
        return isinstance(other, BitSignature) and np.array_equal(self.bits, other.bits)

    __hash__ = None


def _hyperplanes(planes: int, seed: int) -> np.ndarray:
    normals = np.random.default_rng(seed).standard_normal((planes, THUMBNAIL_SIZE * THUMBNAIL_SIZE))
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


def _thumbnail_vector(img: ImageTensor) -> np.ndarray:
    thumb = resize_bilinear(to_grayscale(img), THUMBNAIL_SIZE, THUMBNAIL_SIZE).values.ravel()
    return thumb - thumb.mean()


def lsh_signature(img: ImageTensor, planes: int = 64, seed: int = 0) -> BitSignature:
    """Random-hyperplane signature of the mean-centered 16x16 grayscale thumbnail."""
    if planes < 1:
        raise ValueError("planes must be >= 1")
    return BitSignature(_hyperplanes(planes, seed) @ _thumbnail_vector(img) >= 0.0)


def dedup(images: Sequence[ImageTensor], planes: int = 64, threshold: int = 0, seed: int = 0) -> list[int]:
    """Greedy scan: keep an image unless it is within `threshold` bits of an already kept one."""
    if not 0 <= threshold <= planes:
        raise ValueError(f"threshold must lie in [0, {planes}]")
    if not images:
        return []
    normals = _hyperplanes(planes, seed)
    kept: list[int] = []
    kept_bits = np.empty((len(images), planes), dtype=bool)
    for index, img in enumerate(images):
        bits = normals @ _thumbnail_vector(img) >= 0.0
        if kept:
            distances = np.count_nonzero(kept_bits[: len(kept)] != bits, axis=1)
            if distances.min() <= threshold:
                continue
        kept_bits[len(kept)] = bits
        kept.append(index)
    logger.info("dedup kept %d of %d images (planes=%d, threshold=%d)", len(kept), len(images), planes, threshold)
    return kept
