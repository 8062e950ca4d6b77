"""Bandit environments and the chain MDP fixture."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppolab.envs import (
    ChainMDP, DiscreteSparseBandit, DiscretizedSinglePeak, DoublePeakBandit, SinglePeakBandit,
    wide_single_peak,
)
from ppolab.rng import InvalidParameterError, RngStream


def test_single_peak_values():
    env = SinglePeakBandit()
    assert env.mean_reward(-0.9) == 1.0
    assert env.mean_reward(-1.0) == 0.0 and env.mean_reward(-0.8) == 0.0
    assert env.optimal_action() == pytest.approx(-0.9)
    grid = np.linspace(-1.5, 1.5, 301)
    vals = np.array([v for _, v in env.landscape_probe(grid)])
    assert set(vals.tolist()) == {0.0, 1.0}
    assert wide_single_peak().lo == -3.0 and wide_single_peak().hi == 0.0


def test_double_peak_values():
    env = DoublePeakBandit()
    assert env.mean_reward(-2.0) == pytest.approx(1.1 + 0.9 * math.exp(-8.1))
    assert env.mean_reward(-2.0) == pytest.approx(1.10027, abs=1e-5)
    probe = env.landscape_probe([-2.0, 1.0])
    assert probe[0][1] == pytest.approx(1.10027, abs=1e-5)
    assert probe[1][1] == pytest.approx(0.9 + 1.1 * math.exp(-10.8))
    assert probe[1][1] == pytest.approx(0.90002, abs=1e-5)
    assert env.optimal_action() == -2.0
    # the true argmax sits within 1e-3 of -2, and +1 is a local maximum
    grid = np.linspace(-5, 5, 100001)
    r = env.mean_reward(grid)
    assert abs(grid[np.argmax(r)] + 2.0) < 1e-3
    near = (grid > 0) & (grid < 2)
    assert abs(grid[near][np.argmax(r[near])] - 1.0) < 1e-3


def test_empty_probe():
    assert SinglePeakBandit().landscape_probe([]) == []
    assert DiscreteSparseBandit(10).landscape_probe([]) == []


def test_discrete_counts_for_ten():
    env = DiscreteSparseBandit(10, seed=3)
    assert sorted(env.means.tolist()) == [0.0] * 5 + [0.5] * 4 + [1.0]


@given(st.integers(2, 1000), st.integers(0, 2 ** 32))
@settings(max_examples=200, deadline=None)
def test_discrete_partition(n, seed):
    env = DiscreteSparseBandit(n, seed=seed)
    zeros, halves, ones = (np.sum(env.means == v) for v in (0.0, 0.5, 1.0))
    assert (zeros, halves, ones) == (n // 2, n - n // 2 - 1, 1)
    assert env.means[env.optimal_action()] == 1.0


def test_optimal_index_follows_seed():
    idx = {DiscreteSparseBandit(100, seed=s).optimal_action() for s in range(40)}
    assert len(idx) > 20
    assert DiscreteSparseBandit(100, seed=7).optimal_action() == DiscreteSparseBandit(100, seed=7).optimal_action()


def test_discrete_bad_inputs():
    env = DiscreteSparseBandit(5)
    with pytest.raises(InvalidParameterError):
        env.mean_reward(5)
    with pytest.raises(InvalidParameterError):
        env.mean_reward(1.5)
    with pytest.raises(InvalidParameterError):
        DiscreteSparseBandit(1)


@pytest.mark.parametrize("env,a", [(SinglePeakBandit(), -0.9), (DoublePeakBandit(), 0.3),
                                   (DiscreteSparseBandit(10, seed=1), 4)])
def test_reward_noise_moments(env, a):
    rng = RngStream(8)
    acts = np.full(10 ** 5, a)
    r = env.sample_reward(acts, rng)
    assert abs(r.mean() - float(env.mean_reward(a))) < 0.002
    assert abs(r.var() - 0.01) < 0.0005


def test_zero_noise_is_deterministic():
    env = DoublePeakBandit(noise_std=0.0)
    r = env.sample_reward(np.array([0.0, 1.0]), RngStream(0))
    np.testing.assert_array_equal(r, env.mean_reward(np.array([0.0, 1.0])))


def test_continuous_clipping():
    env = SinglePeakBandit()
    assert env.mean_reward(-7.0) == env.mean_reward(-1.5)
    d = DoublePeakBandit()
    assert d.mean_reward(9.0) == d.mean_reward(5.0)
    assert d.mean_reward(-9.0) == d.mean_reward(-5.0)
    with pytest.raises(InvalidParameterError):
        SinglePeakBandit(lo=1.0, hi=0.0)


def test_discretized_single_peak():
    env = DiscretizedSinglePeak()
    vals = env.action_values()
    assert env.n_actions == 31
    np.testing.assert_allclose(np.diff(vals), 0.1)
    assert vals[env.optimal_action()] == pytest.approx(-0.9)
    assert env.means.sum() == 1.0


def test_chain_mdp():
    env = ChainMDP(5, gamma=0.9)
    states, rewards = env.rollout()
    assert len(states) == 5 and rewards.sum() == 1.0 and rewards[-1] == 1.0
    assert env.start_return() == pytest.approx(0.9 ** 4)
    assert sum(0.9 ** k * r for k, r in enumerate(rewards)) == pytest.approx(env.start_return())
