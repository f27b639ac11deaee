"""Compositional per-image rewards over groups of generated images.

Four bounded components combine into one scalar per image: identity diversity
within the image, a leave-one-out diversity contribution against the rest of
the group, an exact person-count match, and a normalized quality score.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .embeddings import FaceRecord, pair_sum, pairwise_sim_matrix

AGGREGATIONS = ("max", "mean", "min")


class MissingQuality(ValueError):
    """An image lacks a raw quality score while the quality weight is active."""


@dataclass
class ImageRecord:
    """One generated image: detected faces plus the prompt's person count."""

    image_id: str
    prompt_id: str
    target_count: int
    faces: list[FaceRecord] = field(default_factory=list)
    quality_raw: Optional[float] = None
    tag: Optional[str] = None

    @property
    def face_count(self) -> int:
        return len(self.faces)


@dataclass
class GroupRecord:
    """All images generated for one prompt; the unit of group-level scoring."""

    prompt_id: str
    images: list[ImageRecord]

    def __post_init__(self) -> None:
        if not self.images:
            raise ValueError("a group needs at least one image")
        if any(img.prompt_id != self.prompt_id for img in self.images):
            raise ValueError(f"group {self.prompt_id!r} mixes prompt_ids")
        targets = {img.target_count for img in self.images}
        if len(targets) > 1:
            raise ValueError(f"group {self.prompt_id!r} mixes target counts {targets}")


@dataclass(frozen=True)
class RewardWeights:
    """Component weights and shaping constants for the composite reward."""

    alpha: float = 0.50
    beta: float = 0.10
    gamma: float = 0.15
    zeta: float = 0.15
    lambda_sigmoid: float = 5.0
    q_min: float = 0.0
    q_max: float = 10.0
    intra_aggregation: str = "max"
    single_face_intra: float = 0.5

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.gamma, self.zeta) < 0:
            raise ValueError("reward weights must be non-negative")
        if self.lambda_sigmoid <= 0:
            raise ValueError("lambda_sigmoid must be positive")
        if self.q_max <= self.q_min:
            raise ValueError("q_max must exceed q_min")
        if self.intra_aggregation not in AGGREGATIONS:
            raise ValueError(f"intra_aggregation must be one of {AGGREGATIONS}")


#: Named weight sets selectable from config files and the CLI.
WEIGHT_PRESETS: dict[str, RewardWeights] = {
    "appendix-d": RewardWeights(alpha=0.50, beta=0.10, gamma=0.15, zeta=0.15),
    "table-a2": RewardWeights(alpha=0.50, beta=0.10, gamma=0.30, zeta=0.20),
}


@dataclass
class RewardBreakdown:
    """Per-image reward components, their weighted total, and the leave-one-out delta."""

    image_id: str
    intra: float
    group: float
    count: float
    quality: float
    total: float
    delta_i: float


@dataclass
class GroupDiversityStats:
    """Group similarity baseline and its leave-one-out decomposition."""

    s_g: float
    s_g_minus: np.ndarray
    deltas: np.ndarray


def intra_image_diversity(img: ImageRecord, w: RewardWeights) -> float:
    """One minus the aggregated pairwise face similarity, clamped to [0, 1].

    Images with fewer than two faces carry no pair evidence and score
    `w.single_face_intra`.
    """
    m = img.face_count
    if m < 2:
        return w.single_face_intra
    gram = pairwise_sim_matrix([f.embedding for f in img.faces])
    sims = gram[np.triu_indices(m, k=1)]
    agg = {"max": np.max, "mean": np.mean, "min": np.min}[w.intra_aggregation]
    return float(np.clip(1.0 - agg(sims), 0.0, 1.0))


def group_diversity(
    group: GroupRecord, w: RewardWeights
) -> tuple[GroupDiversityStats, np.ndarray]:
    """Leave-one-out diversity contribution of every image in the group.

    Pools all faces, measures the group's average pairwise similarity, and for
    each image recomputes it with that image's faces removed. An image whose
    removal *raises* the remaining similarity was adding diversity (negative
    delta) and scores above 0.5 through the logistic map.
    """
    counts = [img.face_count for img in group.images]
    all_faces = [f.embedding for img in group.images for f in img.faces]
    n = len(all_faces)

    if n >= 2:
        gram = pairwise_sim_matrix(all_faces)
        total = pair_sum(gram)
        s_g = total / (n * (n - 1) / 2)
        rowsum = gram.sum(axis=1) - np.diag(gram)
    else:
        gram = None
        total = 0.0
        s_g = 0.0
        rowsum = np.zeros(n)

    s_g_minus = np.zeros(len(group.images))
    offset = 0
    for i, k in enumerate(counts):
        rem = n - k
        if rem < 2 or gram is None:
            s_g_minus[i] = 0.0
        else:
            idx = slice(offset, offset + k)
            block = gram[idx, idx]
            within = (block.sum() - np.trace(block)) / 2.0
            involving = rowsum[idx].sum() - within
            s_g_minus[i] = (total - involving) / (rem * (rem - 1) / 2)
        offset += k

    deltas = s_g - s_g_minus
    rewards = expit(-w.lambda_sigmoid * deltas)
    return GroupDiversityStats(s_g=s_g, s_g_minus=s_g_minus, deltas=deltas), rewards


def count_reward(img: ImageRecord) -> float:
    """1 when the detected face count equals the prompted count, else 0."""
    return 1.0 if img.face_count == img.target_count else 0.0


def quality_reward(img: ImageRecord, w: RewardWeights) -> float:
    """Raw quality score mapped linearly onto [0, 1] and clamped.

    A missing raw score is only an error while the quality weight is active;
    with zeta = 0 the pipeline runs without any quality model.
    """
    if img.quality_raw is None:
        if w.zeta == 0:
            return 0.0
        raise MissingQuality(f"image {img.image_id!r} has no quality_raw")
    scaled = (img.quality_raw - w.q_min) / (w.q_max - w.q_min)
    return float(np.clip(scaled, 0.0, 1.0))


def composite_reward(group: GroupRecord, w: RewardWeights) -> list[RewardBreakdown]:
    """Score every image in the group with the four weighted components."""
    stats, grp_rewards = group_diversity(group, w)
    out = []
    for i, img in enumerate(group.images):
        intra = intra_image_diversity(img, w)
        grp = float(grp_rewards[i])
        cnt = count_reward(img)
        qual = quality_reward(img, w)
        total = w.alpha * intra + w.beta * grp + w.gamma * cnt + w.zeta * qual
        out.append(
            RewardBreakdown(
                image_id=img.image_id,
                intra=intra,
                group=grp,
                count=cnt,
                quality=qual,
                total=total,
                delta_i=float(stats.deltas[i]),
            )
        )
    return out
