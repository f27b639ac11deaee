"""Dataset-level evaluation: count accuracy, unique-face accuracy, identity spread.

All three are reported as percentages. Identity spread clusters the pooled
faces with single-linkage at the duplicate threshold, which is exactly
connected components of the similarity graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .embeddings import pairwise_sim_matrix
from .rewards import ImageRecord

UNTAGGED = "untagged"


class EmptyDataset(ValueError):
    """Metrics were requested over an empty image list."""


@dataclass(frozen=True)
class MetricsConfig:
    """Duplicate-similarity and detection-confidence thresholds."""

    dup_threshold: float = 0.5
    det_threshold: float = 0.7

    def __post_init__(self) -> None:
        if not 0.0 < self.dup_threshold < 1.0:
            raise ValueError("dup_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class MetricsSlice:
    """The three metrics plus the raw counts they were derived from."""

    n_images: int
    n_count_correct: int
    n_duplicate_free: int
    n_clusters: int
    total_requested: int
    count_accuracy_pct: float
    ufa_pct: float
    gis_pct: float


@dataclass
class MetricsReport:
    """Aggregate metrics with per-person-count and per-tag breakdowns."""

    count_accuracy_pct: float
    ufa_pct: float
    gis_pct: float
    n_images: int
    n_clusters: int
    total_requested: int
    per_count: dict[int, MetricsSlice] = field(default_factory=dict)
    per_tag: Optional[dict[str, MetricsSlice]] = None


def count_accuracy(images: Sequence[ImageRecord]) -> float:
    """Percentage of images whose detected face count equals the prompted count."""
    if not images:
        raise EmptyDataset("count_accuracy over empty image list")
    hits = sum(1 for img in images if img.face_count == img.target_count)
    return 100.0 * hits / len(images)


def has_duplicates(img: ImageRecord, cfg: MetricsConfig) -> bool:
    """Whether any face pair in the image meets the duplicate threshold."""
    m = img.face_count
    if m < 2:
        return False
    gram = pairwise_sim_matrix([f.embedding for f in img.faces])
    return bool(np.any(gram[np.triu_indices(m, k=1)] >= cfg.dup_threshold))


def unique_face_accuracy(images: Sequence[ImageRecord], cfg: MetricsConfig) -> float:
    """Percentage of images with no face pair at or above the duplicate threshold."""
    if not images:
        raise EmptyDataset("unique_face_accuracy over empty image list")
    clean = sum(1 for img in images if not has_duplicates(img, cfg))
    return 100.0 * clean / len(images)


def identity_clusters(images: Sequence[ImageRecord], cfg: MetricsConfig) -> np.ndarray:
    """Single-linkage cluster labels over all faces pooled across images.

    Merging any cross-cluster pair at or above the threshold is equivalent to
    connected components of the thresholded similarity graph, so labels are
    independent of traversal order.
    """
    faces = [f.embedding for img in images for f in img.faces]
    if not faces:
        return np.empty(0, dtype=int)
    gram = pairwise_sim_matrix(faces)
    adjacency = csr_matrix(gram >= cfg.dup_threshold)
    _, labels = connected_components(adjacency, directed=False)
    return labels


def global_identity_spread(
    images: Sequence[ImageRecord], cfg: MetricsConfig
) -> tuple[float, int]:
    """Unique identity clusters as a percentage of total prompted persons."""
    if not images:
        raise EmptyDataset("global_identity_spread over empty image list")
    total_requested = sum(img.target_count for img in images)
    labels = identity_clusters(images, cfg)
    if labels.size == 0:
        return 0.0, 0
    n_clusters = int(labels.max()) + 1
    return 100.0 * n_clusters / total_requested, n_clusters


def _slice(images: Sequence[ImageRecord], cfg: MetricsConfig) -> MetricsSlice:
    n = len(images)
    hits = sum(1 for img in images if img.face_count == img.target_count)
    clean = sum(1 for img in images if not has_duplicates(img, cfg))
    total_requested = sum(img.target_count for img in images)
    labels = identity_clusters(images, cfg)
    n_clusters = int(labels.max()) + 1 if labels.size else 0
    gis = 100.0 * n_clusters / total_requested if total_requested else 0.0
    return MetricsSlice(
        n_images=n,
        n_count_correct=hits,
        n_duplicate_free=clean,
        n_clusters=n_clusters,
        total_requested=total_requested,
        count_accuracy_pct=100.0 * hits / n,
        ufa_pct=100.0 * clean / n,
        gis_pct=gis,
    )


def evaluate_dataset(images: Sequence[ImageRecord], cfg: MetricsConfig) -> MetricsReport:
    """Aggregate metrics plus per-person-count and (when tagged) per-tag slices."""
    if not images:
        raise EmptyDataset("evaluate_dataset over empty image list")

    aggregate = _slice(images, cfg)

    per_count: dict[int, MetricsSlice] = {}
    for n in sorted({img.target_count for img in images}):
        per_count[n] = _slice([img for img in images if img.target_count == n], cfg)

    per_tag: Optional[dict[str, MetricsSlice]] = None
    if any(img.tag is not None for img in images):
        per_tag = {}
        for tag in sorted({img.tag or UNTAGGED for img in images}):
            members = [img for img in images if (img.tag or UNTAGGED) == tag]
            per_tag[tag] = _slice(members, cfg)

    return MetricsReport(
        count_accuracy_pct=aggregate.count_accuracy_pct,
        ufa_pct=aggregate.ufa_pct,
        gis_pct=aggregate.gis_pct,
        n_images=aggregate.n_images,
        n_clusters=aggregate.n_clusters,
        total_requested=aggregate.total_requested,
        per_count=per_count,
        per_tag=per_tag,
    )
