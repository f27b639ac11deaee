"""Group-relative advantage normalization and the KL-regularized policy update.

Rewards are standardized within each prompt's group (population statistics, no
value function); the update is a plain ascent step on the score-function
estimator with an analytic KL penalty against a frozen reference policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from .rewards import ImageRecord


class LengthMismatch(ValueError):
    """A group's advantage vector does not match its trajectory count."""


class NonFiniteGradient(RuntimeError):
    """A gradient component left the finite range; the step was aborted."""

    def __init__(self, component: str, step: Optional[int] = None):
        self.component = component
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite gradient in component {component!r}{where}")


@dataclass
class Trajectory:
    """One sampled generation: its per-step actions, summed log-prob, and output."""

    actions: list[Any]
    log_prob: float
    final_image: ImageRecord


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters for group-relative training."""

    group_size: int = 21
    beta_kl: float = 0.01
    learning_rate: float = 0.05
    epsilon_adv: float = 1e-6
    max_steps: int = 500
    seed: int = 0
    groups_per_step: int = 1

    def __post_init__(self) -> None:
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.beta_kl < 0:
            raise ValueError("beta_kl must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epsilon_adv <= 0:
            raise ValueError("epsilon_adv must be positive")
        if self.groups_per_step < 1:
            raise ValueError("groups_per_step must be >= 1")


@dataclass
class AdvantageSet:
    """Rewards standardized against their group's mean and population std."""

    rewards: np.ndarray
    mean: float
    std: float
    advantages: np.ndarray
    epsilon: float


def advantages(rewards: Sequence[float] | np.ndarray, epsilon: float) -> AdvantageSet:
    """Standardize a group's rewards: (r - mean) / (population std + epsilon)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 1:
        raise ValueError("rewards must be a non-empty 1-D vector")
    mean = r.mean()
    std = np.sqrt(np.mean((r - mean) ** 2))
    adv = (r - mean) / (std + epsilon)
    return AdvantageSet(
        rewards=r, mean=float(mean), std=float(std), advantages=adv, epsilon=epsilon
    )


def objective(
    groups: Sequence[tuple[Sequence[Trajectory], AdvantageSet]],
    kl: float,
    cfg: TrainConfig,
) -> float:
    """Diagnostic scalar: group-averaged advantage-weighted log-prob minus the KL term."""
    if not groups:
        raise ValueError("objective needs at least one group")
    per_group = []
    for trajectories, adv in groups:
        if len(trajectories) != len(adv.advantages):
            raise LengthMismatch(
                f"{len(trajectories)} trajectories vs {len(adv.advantages)} advantages"
            )
        log_probs = np.array([traj.log_prob for traj in trajectories])
        per_group.append(float(np.mean(adv.advantages * log_probs)))
    return float(np.mean(per_group)) - cfg.beta_kl * kl


def estimate_gradient(
    policy,
    groups: Sequence[tuple[Sequence[Trajectory], AdvantageSet]],
    cfg: TrainConfig,
    ref=None,
) -> dict[str, np.ndarray]:
    """Score-function gradient of the objective with respect to the policy parameters.

    Each trajectory's first action must be scoreable by `policy.log_prob_grad`.
    """
    total: dict[str, np.ndarray] = {}
    for trajectories, adv in groups:
        if len(trajectories) != len(adv.advantages):
            raise LengthMismatch(
                f"{len(trajectories)} trajectories vs {len(adv.advantages)} advantages"
            )
        group_grad: dict[str, np.ndarray] = {}
        for traj, a in zip(trajectories, adv.advantages):
            for action in traj.actions:
                for name, g in policy.log_prob_grad(action).items():
                    acc = group_grad.setdefault(name, np.zeros_like(g))
                    acc += a * g
        m = len(trajectories)
        for name, g in group_grad.items():
            acc = total.setdefault(name, np.zeros_like(g))
            acc += g / m
    n_groups = len(groups)
    grad = {name: g / n_groups for name, g in total.items()}

    if cfg.beta_kl > 0 and ref is not None:
        for name, g in policy.kl_gradient(ref).items():
            grad[name] = grad.get(name, np.zeros_like(g)) - cfg.beta_kl * g
    return grad


def policy_gradient_step(
    policy,
    groups: Sequence[tuple[Sequence[Trajectory], AdvantageSet]],
    cfg: TrainConfig,
    ref=None,
    step: Optional[int] = None,
):
    """One ascent step on the group-relative objective; returns the updated policy."""
    grad = estimate_gradient(policy, groups, cfg, ref=ref)
    for name, g in grad.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name, step)
    return policy.apply_update(grad, cfg.learning_rate)
