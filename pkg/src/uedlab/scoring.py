"""Level scores: value-based regret estimators and the solvability-gated
negative advantage, computed from rollout trajectories.

Conventions (fixed across every score):
  * a trajectory covers student steps t = 0..T-1; sums over t divide by T;
  * `values` has length T+1 — the final entry is the bootstrap value, 0 at a
    true terminal state and the critic's estimate at a timeout/truncation;
  * the mean-over-time form of a score never includes the bootstrap index.

The regret ladder: the m-step value probe V^max takes the best discounted
value estimate along the realized future; the n-step regret is V^max minus
the realized n-step return (always >= 0 since the n-step return is one of the
probed candidates); the lambda-regret mixes n-step regrets with truncated,
renormalised exponential weights; the gated score multiplies its trajectory
mean by a binary "was this level ever solved" flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, DomainError, ShapeError


class Metric(str, Enum):
    MNA = "MNA"
    PVL = "PVL"
    MAXMC = "MaxMC"
    LEARNABILITY = "Learnability"


@dataclass(frozen=True)
class ScoreParams:
    gamma: float = 0.995
    lam: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"gamma {self.gamma} outside [0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise DomainError(f"lambda {self.lam} outside [0, 1]")


@dataclass(frozen=True)
class Trajectory:
    """One episode (or truncated segment) on a single level."""

    rewards: np.ndarray   # (T,)
    values: np.ndarray    # (T+1,), last entry is the bootstrap
    solved: bool

    def __post_init__(self):
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=np.float64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.rewards.ndim != 1 or self.values.ndim != 1:
            raise ShapeError("rewards and values must be 1-d")
        if len(self.rewards) < 1:
            raise ShapeError("trajectory must contain at least one step")
        if len(self.values) != len(self.rewards) + 1:
            raise ShapeError(
                f"values length {len(self.values)} != rewards length "
                f"{len(self.rewards)} + 1"
            )

    @property
    def T(self) -> int:
        return len(self.rewards)

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class LevelScoreContext:
    """Everything a level score needs: the rollout set, the best observed
    return, and whether the level was ever solved (rollouts or history)."""

    trajectories: list[Trajectory]
    ever_solved: bool | None = None
    r_max: float | None = None

    def __post_init__(self):
        if not self.trajectories:
            raise ShapeError("score context needs at least one trajectory")
        if self.ever_solved is None:
            self.ever_solved = any(t.solved for t in self.trajectories)
        if self.r_max is None:
            self.r_max = max(t.episode_return for t in self.trajectories)

    @property
    def solve_rate(self) -> float:
        return sum(t.solved for t in self.trajectories) / len(self.trajectories)


def td_errors(traj: Trajectory, gamma: float) -> np.ndarray:
    """delta_t = r_t + gamma * v_{t+1} - v_t for t = 0..T-1."""
    v = traj.values
    return traj.rewards + gamma * v[1:] - v[:-1]


def gae_advantages(traj: Trajectory, gamma: float, lam: float) -> np.ndarray:
    """A_t = sum_k (lam*gamma)^(k-t) delta_k, within the trajectory."""
    delta = td_errors(traj, gamma)
    adv = np.zeros_like(delta)
    acc = 0.0
    for t in range(traj.T - 1, -1, -1):
        acc = delta[t] + gamma * lam * acc
        adv[t] = acc
    return adv


def pvl_per_step(traj: Trajectory, params: ScoreParams) -> np.ndarray:
    return np.maximum(gae_advantages(traj, params.gamma, params.lam), 0.0)


def pvl(traj: Trajectory, params: ScoreParams) -> float:
    """Positive value loss: mean over t of the clipped advantage."""
    return float(pvl_per_step(traj, params).mean())


def maxmc(traj: Trajectory, r_max: float) -> float:
    """Mean over t of (r_max - v_t); the bootstrap index is excluded."""
    return float((r_max - traj.values[:-1]).mean())


def _value_probes(traj: Trajectory, t: int, gamma: float) -> np.ndarray:
    """probes[m] = gamma^m * v_{t+m} + sum_{k<m} gamma^k * r_{t+k}, m = 0..T-t."""
    horizon = traj.T - t
    powers = gamma ** np.arange(horizon + 1)
    disc_rewards = np.concatenate(([0.0], np.cumsum(powers[:-1] * traj.rewards[t:])))
    return powers * traj.values[t:] + disc_rewards


def v_max(traj: Trajectory, t: int, n: int, gamma: float) -> float:
    """Best discounted value estimate over probe depths m = 0..n from step t."""
    if t < 0 or n < 0 or t + n > traj.T:
        raise IndexError(f"v_max probe t={t}, n={n} exceeds trajectory of length {traj.T}")
    return float(np.maximum.accumulate(_value_probes(traj, t, gamma)[: n + 1])[-1])


def n_step_regret(traj: Trajectory, t: int, n: int, gamma: float) -> float:
    """V^max_n(s_t) minus the realized n-step return; always >= 0."""
    if t < 0 or n < 0 or t + n > traj.T:
        raise IndexError(f"regret probe t={t}, n={n} exceeds trajectory of length {traj.T}")
    probes = _value_probes(traj, t, gamma)[: n + 1]
    return float(np.maximum.accumulate(probes)[-1] - probes[-1])


def _lambda_weights(n_max: int, lam: float) -> np.ndarray:
    """Weights over n = 1..n_max: (1-lam)*lam^(n-1) with the truncated tail
    mass collapsed onto n_max, so they sum to one for every lam in [0, 1]."""
    if n_max < 1:
        raise ShapeError("lambda weights need horizon >= 1")
    w = (1.0 - lam) * lam ** np.arange(n_max, dtype=np.float64)
    w[-1] = lam ** (n_max - 1)
    return w


def lambda_regret(traj: Trajectory, t: int, params: ScoreParams) -> float:
    """Exponentially weighted mix of n-step regrets from step t (n >= 1)."""
    if t < 0 or t >= traj.T:
        raise IndexError(f"t={t} outside [0, {traj.T})")
    probes = _value_probes(traj, t, params.gamma)
    regrets = np.maximum.accumulate(probes) - probes  # index n -> n-step regret
    return float(_lambda_weights(traj.T - t, params.lam) @ regrets[1:])


def lambda_regret_per_step(traj: Trajectory, params: ScoreParams) -> np.ndarray:
    return np.array([lambda_regret(traj, t, params) for t in range(traj.T)])


def mna(context: LevelScoreContext, params: ScoreParams) -> float:
    """Solvability-gated mean lambda-regret: zero unless the level was ever
    solved; otherwise the rollout mean of (1/T) * sum_t lambda-regret_t."""
    gate = 1.0 if context.ever_solved else 0.0
    if gate == 0.0:
        return 0.0
    means = [lambda_regret_per_step(t, params).mean() for t in context.trajectories]
    return gate * float(np.mean(means))


def learnability(p: float) -> float:
    """p * (1 - p): peaked at coin-flip solve rates, zero at the extremes."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"success probability {p} outside [0, 1]")
    return p * (1.0 - p)


def level_score(context: LevelScoreContext, metric: Metric, params: ScoreParams) -> float:
    """Dispatch a context to one scalar priority."""
    metric = Metric(metric)
    if metric == Metric.MNA:
        return mna(context, params)
    if metric == Metric.PVL:
        return float(np.mean([pvl(t, params) for t in context.trajectories]))
    if metric == Metric.MAXMC:
        return float(np.mean([maxmc(t, context.r_max) for t in context.trajectories]))
    if metric == Metric.LEARNABILITY:
        return learnability(context.solve_rate)
    raise ConfigError(f"unknown metric {metric!r}")


def per_step_scores(traj: Trajectory, metric: Metric, params: ScoreParams,
                    r_max: float, ever_solved: bool) -> np.ndarray:
    """Per-student-step score G_t used to build dense generator rewards."""
    metric = Metric(metric)
    if metric == Metric.MNA:
        gate = 1.0 if ever_solved else 0.0
        if gate == 0.0:
            return np.zeros(traj.T)
        return lambda_regret_per_step(traj, params) * gate
    if metric == Metric.PVL:
        return pvl_per_step(traj, params)
    if metric == Metric.MAXMC:
        return r_max - traj.values[:-1]
    raise ConfigError(f"metric {metric.value} has no per-step form")
