"""Annealed sampling schedule over prompted person counts.

Training starts biased toward a small "simple" subset of counts and follows a
power-law hand-off to the uniform distribution over the full range; after the
transition step the distribution is uniform exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CurriculumConfig:
    """Support range, simple subset, and annealing shape of the count sampler."""

    n_min: int = 2
    n_max: int = 7
    simple_set: frozenset[int] = frozenset({2, 3, 4})
    t_curriculum: int = 1000
    gamma_c: float = 3.0

    def __post_init__(self) -> None:
        if self.n_min < 1 or self.n_max < self.n_min:
            raise ValueError("need 1 <= n_min <= n_max")
        if not self.simple_set:
            raise ValueError("simple_set must be non-empty")
        if not all(self.n_min <= n <= self.n_max for n in self.simple_set):
            raise ValueError("simple_set must lie within [n_min, n_max]")
        if self.t_curriculum < 1:
            raise ValueError("t_curriculum must be >= 1")
        if self.gamma_c <= 1:
            raise ValueError("gamma_c must exceed 1")

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)


def epochs_to_steps(epochs: float, updates_per_epoch: int) -> int:
    """Convert an epoch-denominated schedule length into update steps."""
    if updates_per_epoch < 1:
        raise ValueError("updates_per_epoch must be >= 1")
    return int(round(epochs * updates_per_epoch))


def annealing_weight(t: int, cfg: CurriculumConfig) -> float:
    """Power-law mixing weight: 0 at t=0, 1 from t_curriculum onward."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t >= cfg.t_curriculum:
        return 1.0
    return (t / cfg.t_curriculum) ** cfg.gamma_c


def distribution(t: int, cfg: CurriculumConfig) -> np.ndarray:
    """Sampling probabilities over [n_min, n_max] at training step t."""
    support = cfg.support
    uniform = np.full(support.shape, 1.0 / len(support))
    if t > cfg.t_curriculum:
        return uniform
    simple = np.where(
        np.isin(support, list(cfg.simple_set)), 1.0 / len(cfg.simple_set), 0.0
    )
    lam = annealing_weight(t, cfg)
    return lam * uniform + (1.0 - lam) * simple


@dataclass
class CurriculumState:
    """Step counter plus the sampler's private random stream."""

    step: int = 0
    rng_seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._rng = np.random.default_rng(self.rng_seed)

    def advance(self) -> None:
        """Move to the next training step (one call per policy update)."""
        self.step += 1


def sample_count(state: CurriculumState, cfg: CurriculumConfig) -> int:
    """Draw one person count from the schedule at the state's current step."""
    probs = distribution(state.step, cfg)
    cdf = np.cumsum(probs)
    u = state._rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    idx = min(idx, len(probs) - 1)
    return int(cfg.support[idx])
