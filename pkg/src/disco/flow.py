"""Analytic Gaussian laboratory for linear-path flow sampling.

The data endpoint is N(mu0, s0^2 I) and the noise endpoint N(0, I), coupled
independently along the linear interpolation path. Every marginal, velocity,
and score has a closed form, so the deterministic sampler and its
noise-injected counterpart can be checked against exact answers.

State flows from t=1 (noise) to t=0 (data). The drift relation
f = v + (sigma^2 / 2) * score defines the forward-time stochastic dynamics
whose marginals match the deterministic sampler; integrating *toward* t=0
applies the reverse-time correction f - sigma^2 * score, which keeps the same
marginals (verified empirically in the test suite).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

VARIANCE_FLOOR = 1e-12


class DegenerateVariance(ValueError):
    """The marginal variance at the requested time is numerically zero."""


class ZeroNoise(ValueError):
    """A transition density was requested for a noiseless (deterministic) step."""


@dataclass(frozen=True)
class GaussianWorld:
    """Isotropic Gaussian data endpoint: mean mu0, per-coordinate std s0."""

    mu0: np.ndarray
    s0: float
    dim: int

    def __post_init__(self) -> None:
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=np.float64))
        object.__setattr__(self, "mu0", mu0)
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if mu0.shape != (self.dim,):
            raise ValueError(f"mu0 must have shape ({self.dim},), got {mu0.shape}")
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")

    @classmethod
    def isotropic(cls, mu0: float, s0: float, dim: int = 1) -> "GaussianWorld":
        return cls(mu0=np.full(dim, float(mu0)), s0=s0, dim=dim)


@dataclass(frozen=True)
class AnalyticMarginal:
    """Closed-form mean and isotropic variance of the path distribution at one time."""

    mean_t: np.ndarray
    var_t: float


def marginal(world: GaussianWorld, t: float) -> AnalyticMarginal:
    """Exact interpolation marginal: mean (1-t)*mu0, variance (1-t)^2 s0^2 + t^2."""
    mean_t = (1.0 - t) * world.mu0
    var_t = (1.0 - t) ** 2 * world.s0**2 + t**2
    return AnalyticMarginal(mean_t=mean_t, var_t=float(var_t))


@dataclass(frozen=True)
class SigmaSchedule:
    """Named noise schedule sigma(t) >= 0 for the stochastic sampler."""

    kind: str
    value: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "constant", "sqrt_t"):
            raise ValueError(f"unknown sigma schedule kind {self.kind!r}")
        if self.value < 0:
            raise ValueError("schedule value must be non-negative")

    def __call__(self, t: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.value
        return self.value * math.sqrt(max(t, 0.0))

    @classmethod
    def zero(cls) -> "SigmaSchedule":
        return cls(kind="zero")

    @classmethod
    def constant(cls, value: float) -> "SigmaSchedule":
        return cls(kind="constant", value=value)

    @classmethod
    def sqrt_t(cls, value: float = 1.0) -> "SigmaSchedule":
        return cls(kind="sqrt_t", value=value)


@dataclass(frozen=True)
class SamplerGrid:
    """Strictly decreasing time grid from 1 to 0 plus a noise schedule."""

    times: np.ndarray
    sigma_schedule: SigmaSchedule

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("grid needs at least two time points")
        if times[0] != 1.0 or times[-1] != 0.0:
            raise ValueError("grid must start at exactly 1 and end at exactly 0")
        if np.any(np.diff(times) >= 0):
            raise ValueError("grid times must be strictly decreasing")

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @classmethod
    def uniform(cls, steps: int, sigma_schedule: SigmaSchedule) -> "SamplerGrid":
        if steps < 1:
            raise ValueError("steps must be >= 1")
        times = np.linspace(1.0, 0.0, steps + 1)
        times[0], times[-1] = 1.0, 0.0
        return cls(times=times, sigma_schedule=sigma_schedule)


def velocity_field(x: np.ndarray, t: float, world: GaussianWorld) -> np.ndarray:
    """Conditional-expectation velocity of the linear path, exact for this world.

    Gaussian conditioning of (noise - data) on the interpolant state gives a
    field linear in x: coefficient cov(x_t, x1-x0)/var_t around the marginal
    mean, offset by the mean displacement -mu0.
    """
    m = marginal(world, t)
    coeff = (t - (1.0 - t) * world.s0**2) / m.var_t
    return -world.mu0 + coeff * (np.asarray(x, dtype=np.float64) - m.mean_t)


def score(x: np.ndarray, t: float, world: GaussianWorld) -> np.ndarray:
    """Gradient of the log marginal density: -(x - mean_t) / var_t."""
    m = marginal(world, t)
    if m.var_t <= VARIANCE_FLOOR:
        raise DegenerateVariance(f"marginal variance {m.var_t!r} at t={t}")
    return -(np.asarray(x, dtype=np.float64) - m.mean_t) / m.var_t


def sde_drift(x: np.ndarray, t: float, world: GaussianWorld, sigma: float) -> np.ndarray:
    """Forward-time stochastic drift: velocity plus half sigma^2 times the score."""
    return velocity_field(x, t, world) + 0.5 * sigma**2 * score(x, t, world)


def reverse_drift(
    x: np.ndarray, t: float, world: GaussianWorld, sigma: float
) -> np.ndarray:
    """Drift used when integrating toward t=0: the reverse-time correction of sde_drift."""
    if sigma == 0.0:
        return velocity_field(x, t, world)
    return sde_drift(x, t, world, sigma) - sigma**2 * score(x, t, world)


@dataclass
class SimResult:
    """Recorded path samples: times[i] pairs with samples[i] of shape (n_paths, dim)."""

    times: np.ndarray
    samples: list[np.ndarray]

    def at(self, t: float, atol: float = 1e-9) -> np.ndarray:
        idx = np.nonzero(np.abs(self.times - t) <= atol)[0]
        if idx.size == 0:
            raise KeyError(f"time {t} was not recorded")
        return self.samples[int(idx[0])]

    @property
    def terminal(self) -> np.ndarray:
        return self.samples[-1]


def step_mean_std(
    x: np.ndarray, t_k: float, t_next: float, world: GaussianWorld, sigma: float
) -> tuple[np.ndarray, float]:
    """Mean and per-coordinate std of one integrator transition from t_k to t_next."""
    if t_next >= t_k:
        raise ValueError("transitions must move toward t=0 (t_next < t_k)")
    dt = t_next - t_k
    mean = np.asarray(x, dtype=np.float64) + dt * reverse_drift(x, t_k, world, sigma)
    std = sigma * math.sqrt(-dt)
    return mean, std


def simulate(
    world: GaussianWorld,
    grid: SamplerGrid,
    n_paths: int,
    mode: str = "ode",
    seed: int = 0,
    record_times: Optional[Sequence[float]] = None,
) -> SimResult:
    """Integrate n_paths states from t=1 noise to t=0 over the grid.

    mode "ode" is the deterministic first-order sampler; mode "sde" adds the
    schedule's noise with the marginal-preserving drift. Samples are recorded
    at every grid time in `record_times` (all grid times when omitted).
    """
    if mode not in ("ode", "sde"):
        raise ValueError("mode must be 'ode' or 'sde'")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")

    times = grid.times
    if record_times is None:
        wanted = set(range(times.size))
    else:
        wanted = set()
        for t in record_times:
            idx = np.nonzero(np.isclose(times, t, atol=1e-12))[0]
            if idx.size == 0:
                raise ValueError(f"requested record time {t} is not on the grid")
            wanted.add(int(idx[0]))

    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_paths, world.dim))

    rec_times, rec_samples = [], []
    if 0 in wanted:
        rec_times.append(times[0])
        rec_samples.append(x.copy())

    for k in range(grid.steps):
        t_k, t_next = times[k], times[k + 1]
        dt = t_next - t_k
        if mode == "ode":
            x = x + dt * velocity_field(x, t_k, world)
        else:
            sigma = grid.sigma_schedule(t_k)
            x = x + dt * reverse_drift(x, t_k, world, sigma)
            if sigma > 0.0:
                x = x + sigma * math.sqrt(-dt) * rng.standard_normal((n_paths, world.dim))
        if (k + 1) in wanted:
            rec_times.append(t_next)
            rec_samples.append(x.copy())

    return SimResult(times=np.array(rec_times), samples=rec_samples)


def transition_log_prob(
    x_next: np.ndarray,
    x_curr: np.ndarray,
    t_k: float,
    t_next: float,
    world: GaussianWorld,
    sigma_schedule: SigmaSchedule,
) -> float:
    """Gaussian log-density of one stochastic integrator transition."""
    sigma = sigma_schedule(t_k)
    if sigma <= 0.0:
        raise ZeroNoise(f"step at t={t_k} has sigma=0; its transition has no density")
    mean, std = step_mean_std(x_curr, t_k, t_next, world, sigma)
    diff = np.asarray(x_next, dtype=np.float64) - mean
    var = std**2
    d = diff.size
    return float(-0.5 * (d * math.log(2.0 * math.pi * var) + diff @ diff / var))


def trajectory_log_prob(
    path: Sequence[np.ndarray], grid: SamplerGrid, world: GaussianWorld
) -> float:
    """Sum of per-step transition log-densities along one recorded path."""
    if len(path) != grid.times.size:
        raise ValueError("path must have one state per grid time")
    total = 0.0
    for k in range(grid.steps):
        total += transition_log_prob(
            path[k + 1], path[k], grid.times[k], grid.times[k + 1], world,
            grid.sigma_schedule,
        )
    return total
