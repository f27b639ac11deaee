"""A minimal stochastic identity generator with analytic log-probabilities.

Per prompt the policy samples a face count from a categorical head, then for
each used slot draws a raw vector from an isotropic Gaussian; the emitted face
embedding is the normalized raw vector. Densities live on the raw vectors, so
log-probs and their gradients stay exact while the reward pipeline only ever
sees unit-norm embeddings. This is enough to run the full group-relative
training loop at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .curriculum import CurriculumConfig, CurriculumState, sample_count
from .embeddings import FaceRecord, normalize, pairwise_sim_matrix
from .grpo import AdvantageSet, TrainConfig, Trajectory, advantages, objective, policy_gradient_step
from .rewards import GroupRecord, ImageRecord, RewardWeights, composite_reward


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    return z - math.log(np.exp(z).sum())


@dataclass(frozen=True)
class ToyPolicy:
    """Slot means, shared emission noise scale (log), and count-head logits."""

    face_means: np.ndarray
    log_sigma: float
    count_logits: np.ndarray
    n_min: int = 2

    def __post_init__(self) -> None:
        means = np.asarray(self.face_means, dtype=np.float64)
        logits = np.asarray(self.count_logits, dtype=np.float64)
        object.__setattr__(self, "face_means", means)
        object.__setattr__(self, "count_logits", logits)
        if means.ndim != 2:
            raise ValueError("face_means must be a (slots, dim) matrix")
        if logits.ndim != 1 or logits.size < 1:
            raise ValueError("count_logits must be a non-empty vector")
        if means.shape[0] < self.n_max:
            raise ValueError("need at least n_max face slots")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(logits))
                and math.isfinite(self.log_sigma)):
            raise ValueError("policy parameters must be finite")
        if math.exp(2.0 * self.log_sigma) <= 0.0:
            raise ValueError("log_sigma so small the emission variance underflows")

    @property
    def n_slots(self) -> int:
        return self.face_means.shape[0]

    @property
    def dim(self) -> int:
        return self.face_means.shape[1]

    @property
    def n_max(self) -> int:
        return self.n_min + self.count_logits.size - 1

    @property
    def counts(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)

    def count_probs(self) -> np.ndarray:
        return _softmax(self.count_logits)

    @classmethod
    def collapsed(
        cls,
        dim: int = 8,
        n_min: int = 2,
        n_max: int = 4,
        log_sigma: float = math.log(0.1),
        n_slots: Optional[int] = None,
    ) -> "ToyPolicy":
        """All slot means identical: every emitted face starts as the same identity."""
        n_slots = n_slots or n_max
        base = np.ones(dim) / math.sqrt(dim)
        return cls(
            face_means=np.tile(base, (n_slots, 1)),
            log_sigma=log_sigma,
            count_logits=np.zeros(n_max - n_min + 1),
            n_min=n_min,
        )

    # --- parameter pytree -------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        return {
            "face_means": self.face_means.copy(),
            "log_sigma": np.float64(self.log_sigma),
            "count_logits": self.count_logits.copy(),
        }

    def with_params(self, params: dict[str, np.ndarray]) -> "ToyPolicy":
        return replace(
            self,
            face_means=np.asarray(params["face_means"], dtype=np.float64),
            log_sigma=float(params["log_sigma"]),
            count_logits=np.asarray(params["count_logits"], dtype=np.float64),
        )

    def apply_update(self, grads: dict[str, np.ndarray], lr: float) -> "ToyPolicy":
        """Ascend: theta <- theta + lr * grad."""
        return replace(
            self,
            face_means=self.face_means + lr * grads.get("face_means", 0.0),
            log_sigma=self.log_sigma + lr * float(grads.get("log_sigma", 0.0)),
            count_logits=self.count_logits + lr * grads.get("count_logits", 0.0),
        )

    def distance(self, other: "ToyPolicy") -> float:
        """L2 distance in the stacked parameter space."""
        return math.sqrt(
            float(np.sum((self.face_means - other.face_means) ** 2))
            + (self.log_sigma - other.log_sigma) ** 2
            + float(np.sum((self.count_logits - other.count_logits) ** 2))
        )

    # --- hooks the optimizer calls ---------------------------------------

    def log_prob_grad(self, action: "ToyAction") -> dict[str, np.ndarray]:
        return log_prob_grad(self, action)

    def kl_divergence(self, ref: "ToyPolicy") -> float:
        return kl_divergence(self, ref)

    def kl_gradient(self, ref: "ToyPolicy") -> dict[str, np.ndarray]:
        return kl_gradient(self, ref)


@dataclass
class ToyAction:
    """One emission: the chosen count and the raw pre-normalization vectors."""

    chosen_count: int
    raw_vectors: np.ndarray
    log_prob: float


def _as_rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def action_log_prob(policy: ToyPolicy, action: ToyAction) -> float:
    """Exact log-density of a frozen action under (possibly different) parameters."""
    idx = action.chosen_count - policy.n_min
    if not 0 <= idx < policy.count_logits.size:
        raise ValueError(f"count {action.chosen_count} outside policy support")
    lp = float(_log_softmax(policy.count_logits)[idx])
    m = action.chosen_count
    if m > 0:
        d = policy.dim
        var = math.exp(2.0 * policy.log_sigma)
        diffs = action.raw_vectors - policy.face_means[:m]
        sq = float(np.sum(diffs**2))
        lp += -0.5 * m * d * math.log(2.0 * math.pi) - m * d * policy.log_sigma
        lp += -sq / (2.0 * var)
    return lp


def rollout(
    policy: ToyPolicy,
    target_count: int,
    seed: int | np.random.Generator,
    image_id: str = "img-0",
    prompt_id: str = "prompt-0",
    quality_raw: Optional[float] = None,
) -> tuple[ToyAction, ImageRecord]:
    """Sample one image worth of faces and assemble the scored record."""
    rng = _as_rng(seed)
    probs = policy.count_probs()
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    idx = min(int(np.searchsorted(cdf, u, side="right")), probs.size - 1)
    m = policy.n_min + idx

    raw = policy.face_means[:m] + policy.sigma * rng.standard_normal((m, policy.dim))
    action = ToyAction(chosen_count=m, raw_vectors=raw, log_prob=0.0)
    action.log_prob = action_log_prob(policy, action)

    faces = [FaceRecord(embedding=normalize(g), confidence=1.0) for g in raw]
    image = ImageRecord(
        image_id=image_id,
        prompt_id=prompt_id,
        target_count=target_count,
        faces=faces,
        quality_raw=quality_raw,
    )
    return action, image


def log_prob_grad(policy: ToyPolicy, action: ToyAction) -> dict[str, np.ndarray]:
    """Analytic gradient of the action's log-prob with respect to every parameter."""
    m = action.chosen_count
    d = policy.dim
    var = math.exp(2.0 * policy.log_sigma)

    grad_means = np.zeros_like(policy.face_means)
    diffs = action.raw_vectors - policy.face_means[:m]
    grad_means[:m] = diffs / var

    grad_log_sigma = np.float64(-m * d + float(np.sum(diffs**2)) / var)

    probs = policy.count_probs()
    grad_logits = -probs.copy()
    grad_logits[m - policy.n_min] += 1.0

    return {
        "face_means": grad_means,
        "log_sigma": grad_log_sigma,
        "count_logits": grad_logits,
    }


def _slot_usage(policy: ToyPolicy) -> np.ndarray:
    """P(slot j is sampled) = P(chosen count >= j+1), for every slot."""
    probs = policy.count_probs()
    counts = policy.counts
    return np.array(
        [probs[counts >= j + 1].sum() for j in range(policy.n_slots)]
    )


def kl_divergence(policy: ToyPolicy, ref: ToyPolicy) -> float:
    """Exact KL of the full action distribution against a reference policy.

    Categorical KL of the count head plus usage-weighted Gaussian KLs per slot;
    the usage weight is the probability the slot gets sampled at all.
    """
    if policy.face_means.shape != ref.face_means.shape or policy.n_min != ref.n_min:
        raise ValueError("policies must share architecture")
    p = policy.count_probs()
    q = ref.count_probs()
    kl_cat = float(np.sum(p * (np.log(p) - np.log(q))))

    d = policy.dim
    s, s_ref = policy.log_sigma, ref.log_sigma
    sq = np.sum((policy.face_means - ref.face_means) ** 2, axis=1)
    kl_slots = (
        d * (s_ref - s)
        + (d * math.exp(2.0 * s) + sq) / (2.0 * math.exp(2.0 * s_ref))
        - d / 2.0
    )
    usage = _slot_usage(policy)
    return kl_cat + float(np.sum(usage * kl_slots))


def kl_gradient(policy: ToyPolicy, ref: ToyPolicy) -> dict[str, np.ndarray]:
    """Analytic gradient of kl_divergence with respect to the current parameters."""
    p = policy.count_probs()
    q = ref.count_probs()
    log_ratio = np.log(p) - np.log(q)
    kl_cat = float(np.sum(p * log_ratio))

    d = policy.dim
    s, s_ref = policy.log_sigma, ref.log_sigma
    var_ref = math.exp(2.0 * s_ref)
    mean_diff = policy.face_means - ref.face_means
    sq = np.sum(mean_diff**2, axis=1)
    kl_slots = (
        d * (s_ref - s) + (d * math.exp(2.0 * s) + sq) / (2.0 * var_ref) - d / 2.0
    )
    usage = _slot_usage(policy)

    grad_means = usage[:, None] * mean_diff / var_ref
    grad_log_sigma = np.float64(
        float(np.sum(usage)) * d * (math.exp(2.0 * (s - s_ref)) - 1.0)
    )

    # d usage_j / d logit_k = p_k (1[count_k >= j+1] - usage_j)
    counts = policy.counts
    grad_logits = p * (log_ratio - kl_cat)
    for j in range(policy.n_slots):
        indicator = (counts >= j + 1).astype(np.float64)
        grad_logits += kl_slots[j] * p * (indicator - usage[j])

    return {
        "face_means": grad_means,
        "log_sigma": grad_log_sigma,
        "count_logits": grad_logits,
    }


def cross_group_similarity(
    policy: ToyPolicy,
    n_groups: int = 2,
    images_per_group: int = 8,
    target_count: int = 3,
    seed: int = 0,
) -> float:
    """Mean cosine similarity over face pairs drawn from *different* prompt groups."""
    rng = np.random.default_rng(seed)
    group_faces = []
    for _ in range(n_groups):
        faces = []
        for _ in range(images_per_group):
            _, img = rollout(policy, target_count, rng)
            faces.extend(f.embedding for f in img.faces)
        group_faces.append(faces)

    all_faces = [f for faces in group_faces for f in faces]
    labels = np.concatenate(
        [np.full(len(faces), gi) for gi, faces in enumerate(group_faces)]
    )
    gram = pairwise_sim_matrix(all_faces)
    cross = labels[:, None] != labels[None, :]
    iu = np.triu_indices(len(all_faces), k=1)
    mask = cross[iu]
    return float(gram[iu][mask].mean())


def train_disco(
    policy: ToyPolicy,
    cfg: TrainConfig,
    cur: CurriculumConfig,
    w: RewardWeights,
    steps: int,
    fixed_target: Optional[int] = None,
    quality_stub: Optional[float] = None,
) -> tuple[ToyPolicy, list[dict]]:
    """Full desk-scale training loop: curriculum, rollouts, rewards, update.

    Per step: draw a person count (curriculum unless fixed), roll out a group
    per prompt, score it with the compositional reward, standardize within the
    group, and take one ascent step. Deterministic for a fixed seed.
    """
    seq = np.random.SeedSequence(cfg.seed)
    rollout_seed, curriculum_seed = seq.spawn(2)
    rng = np.random.default_rng(rollout_seed)
    state = CurriculumState(
        step=0, rng_seed=int(curriculum_seed.generate_state(1, np.uint64)[0])
    )

    ref = policy if cfg.beta_kl > 0 else None
    log: list[dict] = []

    for step in range(steps):
        groups = []
        component_sums = np.zeros(5)  # intra, group, count, quality, total
        n_images = 0
        first_n = None
        for gi in range(cfg.groups_per_step):
            n = fixed_target if fixed_target is not None else sample_count(state, cur)
            if first_n is None:
                first_n = n
            trajectories = []
            images = []
            for mi in range(cfg.group_size):
                action, image = rollout(
                    policy,
                    n,
                    rng,
                    image_id=f"s{step}-g{gi}-i{mi}",
                    prompt_id=f"s{step}-g{gi}",
                    quality_raw=quality_stub,
                )
                trajectories.append(
                    Trajectory(actions=[action], log_prob=action.log_prob,
                               final_image=image)
                )
                images.append(image)
            group = GroupRecord(prompt_id=f"s{step}-g{gi}", images=images)
            breakdowns = composite_reward(group, w)
            totals = np.array([b.total for b in breakdowns])
            adv = advantages(totals, cfg.epsilon_adv)
            groups.append((trajectories, adv))
            for b in breakdowns:
                component_sums += (b.intra, b.group, b.count, b.quality, b.total)
            n_images += len(breakdowns)

        kl = kl_divergence(policy, ref) if ref is not None else 0.0
        obj = objective(groups, kl, cfg)
        policy = policy_gradient_step(policy, groups, cfg, ref=ref, step=step)
        state.advance()

        means = component_sums / n_images
        log.append(
            {
                "step": step,
                "target_count": first_n,
                "reward_intra": float(means[0]),
                "reward_group": float(means[1]),
                "reward_count": float(means[2]),
                "reward_quality": float(means[3]),
                "reward_total": float(means[4]),
                "objective": float(obj),
                "kl": float(kl),
            }
        )

    return policy, log


def policy_to_dict(policy: ToyPolicy) -> dict:
    """JSON-serializable snapshot of the policy parameters."""
    return {
        "face_means": policy.face_means.tolist(),
        "log_sigma": policy.log_sigma,
        "count_logits": policy.count_logits.tolist(),
        "n_min": policy.n_min,
    }


def policy_from_dict(payload: dict) -> ToyPolicy:
    return ToyPolicy(
        face_means=np.asarray(payload["face_means"], dtype=np.float64),
        log_sigma=float(payload["log_sigma"]),
        count_logits=np.asarray(payload["count_logits"], dtype=np.float64),
        n_min=int(payload["n_min"]),
    )
