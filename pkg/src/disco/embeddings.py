"""Vector primitives for face identity embeddings.

An identity embedding is a unit-norm float64 numpy array; `normalize` is the
constructor. All similarity math assumes unit norm, so cosine similarity
reduces to a dot product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

#: Accepted deviation from unit norm when ingesting externally produced vectors.
NORM_TOLERANCE = 1e-6

#: Norms at or below this are treated as zero (not normalizable).
ZERO_NORM_FLOOR = 1e-12

#: Above this many faces, pair sums switch to exact (fsum) accumulation.
EXACT_SUM_THRESHOLD = 64


class ZeroVector(ValueError):
    """The input vector has (near-)zero norm and no direction."""


class DimensionMismatch(ValueError):
    """Two embeddings of different dimension were compared."""


def normalize(v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Scale `v` to unit L2 norm, preserving direction.

    Raises ZeroVector when the norm is at or below ZERO_NORM_FLOOR.
    """
    arr = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm <= ZERO_NORM_FLOOR:
        raise ZeroVector(f"cannot normalize vector with norm {norm!r}")
    return arr / norm


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two unit-norm embeddings (their dot product)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"embedding shapes differ: {u.shape} vs {v.shape}")
    return float(u @ v)


def stack_embeddings(faces: Sequence[np.ndarray]) -> np.ndarray:
    """Stack a face list into an (n, d) matrix, checking dimensions agree."""
    if not len(faces):
        return np.empty((0, 0))
    dims = {np.asarray(f).shape for f in faces}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed embedding shapes: {sorted(dims)}")
    return np.stack([np.asarray(f, dtype=np.float64) for f in faces])


def pairwise_sim_matrix(faces: Sequence[np.ndarray]) -> np.ndarray:
    """(n, n) cosine similarity matrix over a face list."""
    emb = stack_embeddings(faces)
    if emb.size == 0:
        return np.empty((len(faces), len(faces)))
    return emb @ emb.T


def pair_sum(gram: np.ndarray) -> float:
    """Sum of similarities over unordered pairs, from a similarity matrix."""
    n = gram.shape[0]
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, k=1)
    vals = gram[iu]
    # np.sum is pairwise; fsum is exact and bounds drift on large face pools.
    if n > EXACT_SUM_THRESHOLD:
        return math.fsum(vals.tolist())
    return float(np.sum(vals))


def avg_pairwise_sim(faces: Sequence[np.ndarray]) -> float:
    """Mean cosine similarity over all unordered pairs of a face set.

    Fewer than two faces carry no pair evidence and score 0.
    """
    n = len(faces)
    if n < 2:
        return 0.0
    total = pair_sum(pairwise_sim_matrix(faces))
    return total / (n * (n - 1) / 2)


@dataclass(frozen=True)
class FaceRecord:
    """One detected face: its identity embedding plus detector metadata."""

    embedding: np.ndarray
    confidence: float = 1.0
    bbox: Optional[tuple[float, float, float, float]] = None
