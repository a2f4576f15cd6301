"""Synthetic domain-shift benchmark.

Target instances come from two class-conditional Gaussians. Auxiliary instances
come from the same Gaussians rotated in the plane of the first two coordinates and
translated by a mean shift, and their labels are flipped at `aux_label_noise_rate`.
Points, labels, flips, text and rendering draw from separate seeded streams, so
changing the noise rate never moves the points.
"""
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np
from faker import Faker
from scipy.stats import multivariate_normal, norm

from imgcred.core.config import ShiftSpec
from imgcred.core.errors import DataError
from imgcred.schemas.instance_schemas import Dataset, Domain, Instance
from imgcred.services.image_service import ImageTensor, encode_image

logger = logging.getLogger(__name__)

RUMOR_PHRASES = (
    "share before it is deleted",
    "unconfirmed reports say",
    "they do not want you to see this",
    "breaking shocking photo",
)
RUMOR_RATE = {1: 0.6, 0: 0.1}


def class_parameters(spec: ShiftSpec) -> tuple[np.ndarray, np.ndarray]:
    """Target class means (2, dim) and covariances (2, dim, dim)."""
    if spec.class_means is not None:
        means = np.asarray(spec.class_means, dtype=np.float64)
    else:
        means = np.zeros((2, spec.dim))
        means[0, 0], means[1, 0] = -spec.separation / 2.0, spec.separation / 2.0
    if spec.class_covariances is not None:
        covs = np.asarray(spec.class_covariances, dtype=np.float64)
    else:
        covs = np.stack([np.eye(spec.dim), np.eye(spec.dim)])
    for label, cov in enumerate(covs):
        if not np.allclose(cov, cov.T):
            raise DataError(f"class {label} covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min() <= 1e-12:
            raise DataError(f"class {label} covariance is degenerate")
    return means, covs


def shift_vector(spec: ShiftSpec) -> np.ndarray:
    if spec.mean_shift is not None:
        return np.asarray(spec.mean_shift, dtype=np.float64)
    direction = np.zeros(spec.dim)
    direction[:2] = 1.0 / math.sqrt(2.0)
    return spec.mean_shift_sigma * direction


def rotation_matrix(dim: int, degrees: float) -> np.ndarray:
    theta = math.radians(degrees)
    rotation = np.eye(dim)
    rotation[:2, :2] = [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    return rotation


def _draw(rng: np.random.Generator, size: int, means: np.ndarray, covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # balanced classes in a seeded order
    labels = rng.permutation(np.arange(size) % 2)
    z = rng.standard_normal((size, means.shape[1]))
    points = means[labels].copy()
    for label in (0, 1):
        mask = labels == label
        points[mask] += z[mask] @ np.linalg.cholesky(covs[label]).T
    return points, labels


def render_blobs(point: np.ndarray, size: int = 16) -> ImageTensor:
    """Two Gaussian blobs; coordinates 0/1 move the left blob, 2/3 the right one."""
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    sigma = size / 8.0
    extra = np.zeros(4)
    extra[:min(4, point.shape[0])] = point[:4]
    image = np.zeros((size, size))
    for (row_c, col_c), (dy, dx) in (((0.5, 0.3), (extra[1], extra[0])), ((0.5, 0.7), (extra[3], extra[2]))):
        center_r = size * (row_c + dy / 8.0)
        center_c = size * (col_c + dx / 8.0)
        image += np.exp(-((rows - center_r) ** 2 + (cols - center_c) ** 2) / (2.0 * sigma ** 2))
    return ImageTensor(np.clip(image, 0.0, 1.0)[:, :, None])


def _post_text(faker: Faker, rng: np.random.Generator, label: int) -> str:
    text = faker.sentence(nb_words=10)
    if rng.random() < RUMOR_RATE[label]:
        phrase = RUMOR_PHRASES[int(rng.integers(len(RUMOR_PHRASES)))]
        text = f"{phrase}! {text}"
    return text


def synth_shift(spec: ShiftSpec, image_dir: Optional[Path] = None) -> Dataset:
    """Auxiliary, target_train and target_test instances with feature vectors (and text/images on request)."""
    if spec.render_images and image_dir is None:
        raise DataError("rendering images needs an output directory")
    means, covs = class_parameters(spec)
    target_ss, aux_ss, noise_ss, text_ss = np.random.SeedSequence(spec.seed).spawn(4)
    target_rng = np.random.default_rng(target_ss)
    aux_rng = np.random.default_rng(aux_ss)
    noise_rng = np.random.default_rng(noise_ss)
    text_rng = np.random.default_rng(text_ss)
    faker = Faker()
    faker.seed_instance(spec.seed)

    train_x, train_y = _draw(target_rng, spec.target_train_size, means, covs)
    test_x, test_y = _draw(target_rng, spec.test_size, means, covs)
    aux_x, aux_true = _draw(aux_rng, spec.aux_size, means, covs)
    aux_x = aux_x @ rotation_matrix(spec.dim, spec.rotation_degrees).T + shift_vector(spec)
    flips = noise_rng.random(spec.aux_size) < spec.aux_label_noise_rate
    aux_y = np.where(flips, 1 - aux_true, aux_true)

    instances = []
    for prefix, domain, points, labels in (
        ("aux", Domain.AUXILIARY, aux_x, aux_y),
        ("train", Domain.TARGET_TRAIN, train_x, train_y),
        ("test", Domain.TARGET_TEST, test_x, test_y),
    ):
        for index, (point, label) in enumerate(zip(points, labels)):
            instance_id = f"{prefix}-{index:05d}"
            image_path = None
            if spec.render_images:
                path = Path(image_dir) / f"{instance_id}.pgm"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_bytes(encode_image(render_blobs(point, spec.image_size)))
                image_path = str(path)
            instances.append(Instance(
                id=instance_id,
                features=point.tolist(),
                text=_post_text(faker, text_rng, int(label)) if spec.render_text else None,
                image_path=image_path,
                label=int(label),
                domain=domain,
            ))
    logger.info("synthesized %d auxiliary (%d flipped), %d target train, %d target test",
                spec.aux_size, int(flips.sum()), spec.target_train_size, spec.test_size)
    return Dataset(instances=instances)


def bayes_accuracy(spec: ShiftSpec, samples: int = 1_000_000, seed: int = 0) -> float:
    """Monte Carlo accuracy of the Bayes classifier on the target task (equal priors)."""
    means, covs = class_parameters(spec)
    points, labels = _draw(np.random.default_rng(seed), samples, means, covs)
    log_density = np.column_stack([
        multivariate_normal(means[c], covs[c]).logpdf(points) for c in (0, 1)
    ])
    return float(np.mean(log_density.argmax(axis=1) == labels))


def bayes_accuracy_isotropic(separation: float) -> float:
    """Closed form for identity covariances: Phi(separation / 2)."""
    return float(norm.cdf(separation / 2.0))
