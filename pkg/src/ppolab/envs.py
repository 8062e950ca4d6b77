"""Bandit environments for the failure-mode experiments, plus a tiny chain MDP.

Environments are stateless; reward noise is drawn from the caller's stream.
Continuous bandits clip actions to their bounds before evaluating the mean
reward, then add Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import InvalidParameterError, RngStream

NOISE_STD = 0.1


class _ContinuousBandit:
    lo: float
    hi: float
    noise_std: float
    discrete = False

    def clip(self, a):
        return np.clip(np.asarray(a, dtype=np.float64), self.lo, self.hi)

    def sample_reward(self, a, rng: RngStream):
        mean = np.asarray(self.mean_reward(a), dtype=np.float64)
        if self.noise_std == 0:
            return mean
        return mean + self.noise_std * rng.standard_normal(mean.shape if mean.ndim else None)

    def landscape_probe(self, grid):
        grid = np.asarray(grid, dtype=np.float64)
        return list(zip(grid.tolist(), np.atleast_1d(self.mean_reward(grid)).tolist())) if grid.size else []


@dataclass(frozen=True)
class SinglePeakBandit(_ContinuousBandit):
    """Mean reward 1 on the open interval (peak_lo, peak_hi) and 0 elsewhere."""

    lo: float = -1.5
    hi: float = 1.5
    noise_std: float = NOISE_STD
    peak_lo: float = -1.0
    peak_hi: float = -0.8

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidParameterError("bandit bounds must satisfy lo < hi")

    def mean_reward(self, a):
        a = self.clip(a)
        return ((a > self.peak_lo) & (a < self.peak_hi)).astype(np.float64)

    def optimal_action(self) -> float:
        return 0.5 * (self.peak_lo + self.peak_hi)

    @property
    def peak_reward(self) -> float:
        return 1.0


def wide_single_peak(noise_std: float = NOISE_STD) -> SinglePeakBandit:
    """Single-peak bandit on the wide action interval [-3, 0]."""
    return SinglePeakBandit(lo=-3.0, hi=0.0, noise_std=noise_std)


@dataclass(frozen=True)
class DoublePeakBandit(_ContinuousBandit):
    """r(a) = 1.1 exp(-1.2 (a+2)^2) + 0.9 exp(-0.9 (a-1)^2)."""

    lo: float = -5.0
    hi: float = 5.0
    noise_std: float = NOISE_STD

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidParameterError("bandit bounds must satisfy lo < hi")

    def mean_reward(self, a):
        a = self.clip(a)
        return 1.1 * np.exp(-1.2 * (a + 2.0) ** 2) + 0.9 * np.exp(-0.9 * (a - 1.0) ** 2)

    def optimal_action(self) -> float:
        return -2.0

    @property
    def peak_reward(self) -> float:
        return float(self.mean_reward(-2.0))


@dataclass(frozen=True, eq=False)
class DiscreteSparseBandit:
    """n arms: floor(n/2) with mean 0, n - floor(n/2) - 1 with mean 0.5, one with mean 1.

    Arm placement is a seeded permutation, so the optimal index depends on the seed.
    """

    n: int
    seed: int = 0
    noise_std: float = NOISE_STD
    means: np.ndarray = field(init=False, repr=False)
    discrete = True

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParameterError("discrete bandit needs at least 2 actions")
        n_zero = self.n // 2
        n_half = self.n - n_zero - 1
        values = np.concatenate([np.zeros(n_zero), np.full(n_half, 0.5), [1.0]])
        perm = RngStream(self.seed).permutation(self.n)
        means = np.empty(self.n)
        means[perm] = values
        means.setflags(write=False)
        object.__setattr__(self, "means", means)

    @property
    def n_actions(self) -> int:
        return self.n

    def _index(self, a):
        idx = np.asarray(a)
        if not np.issubdtype(idx.dtype, np.integer) or np.any((idx < 0) | (idx >= self.n)):
            raise InvalidParameterError(f"invalid action index {a!r}")
        return idx

    def clip(self, a):
        return self._index(a)

    def mean_reward(self, a):
        return self.means[self._index(a)]

    def sample_reward(self, a, rng: RngStream):
        mean = np.asarray(self.mean_reward(a), dtype=np.float64)
        if self.noise_std == 0:
            return mean
        return mean + self.noise_std * rng.standard_normal(mean.shape if mean.ndim else None)

    def optimal_action(self) -> int:
        return int(np.argmax(self.means))

    @property
    def peak_reward(self) -> float:
        return 1.0

    def landscape_probe(self, grid):
        grid = np.asarray(grid, dtype=np.int64)
        return list(zip(grid.tolist(), self.mean_reward(grid).tolist())) if grid.size else []


@dataclass(frozen=True, eq=False)
class DiscretizedSinglePeak(DiscreteSparseBandit):
    """Single-peak bandit on [-1.5, 1.5] discretized in 0.1 steps (31 arms)."""

    n: int = 31
    seed: int = 0
    noise_std: float = NOISE_STD

    def __post_init__(self):
        grid = self.action_values()
        means = SinglePeakBandit(noise_std=0.0).mean_reward(grid)
        means.setflags(write=False)
        object.__setattr__(self, "means", means)

    def action_values(self) -> np.ndarray:
        return np.round(np.linspace(-1.5, 1.5, self.n), 10)


@dataclass(frozen=True)
class ChainMDP:
    """S states visited left to right; reward 1 on the final step only."""

    n_states: int = 5
    gamma: float = 0.99

    def rollout(self):
        """Rewards and state indices of the single deterministic episode."""
        rewards = np.zeros(self.n_states)
        rewards[-1] = 1.0
        return np.arange(self.n_states), rewards

    def start_return(self) -> float:
        return self.gamma ** (self.n_states - 1)


def mean_reward(env, a):
    return env.mean_reward(a)


def sample_reward(env, a, rng: RngStream):
    return env.sample_reward(a, rng)


def landscape_probe(env, grid):
    return env.landscape_probe(grid)


def optimal_action(env):
    return env.optimal_action()
