"""Advantage pipeline, PPO iteration mechanics, and whole-run behaviour."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppolab.envs import ChainMDP, DiscreteSparseBandit, SinglePeakBandit
from ppolab.policy import GaussianPolicy, SoftmaxPolicy, init
from ppolab.rng import InvalidParameterError, RngStream, derive_seed
from ppolab.surrogate import Clip, ReverseKL, SampleBatch, Unregularized
from ppolab.trainer import (
    Adam, ConstantScaling, GAEConfig, ReturnStdScaling, RewardScaler, SGD, TrainConfig, collect_batch,
    compute_advantages, expected_reward, gae_advantages, make_optimizer, normalize_advantages,
    ppo_iteration, scale_rewards, train,
)


def batch_of(rewards):
    r = np.asarray(rewards, dtype=float)
    return SampleBatch(np.zeros(r.size), np.zeros(r.size), r)


# -- advantages ---------------------------------------------------------------

def test_advantage_examples():
    cfg = TrainConfig(baseline="zero")
    np.testing.assert_array_equal(compute_advantages(batch_of([0.3, 2.0]), cfg).advantages, [0.3, 2.0])
    cfg = TrainConfig(baseline="batch_mean")
    np.testing.assert_allclose(compute_advantages(batch_of([0, 0.5, 1]), cfg).advantages, [-0.5, 0, 0.5])
    cfg = TrainConfig(baseline="zero", advantage_normalization=True)
    np.testing.assert_allclose(compute_advantages(batch_of([1, 2, 3]), cfg).advantages,
                               [-1.2247448714, 0, 1.2247448714], atol=1e-8)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=200).filter(lambda x: np.std(x) > 1e-6))
@settings(max_examples=200, deadline=None)
def test_normalized_advantage_moments(rewards):
    adv = normalize_advantages(rewards)
    assert abs(adv.mean()) <= 1e-9
    assert abs(adv.std() - 1.0) <= 1e-6


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=100).filter(lambda x: np.std(x) > 1e-3),
       st.floats(1e-3, 1e3))
@settings(max_examples=200, deadline=None)
def test_constant_scaling_invariance(rewards, c):
    base = TrainConfig(advantage_normalization=True)
    scaled = TrainConfig(advantage_normalization=True, reward_scaling=ConstantScaling(c))
    a = compute_advantages(batch_of(rewards), base).advantages
    b = compute_advantages(batch_of(rewards), scaled).advantages
    assert np.max(np.abs(a - b)) <= 1e-12


def test_scale_rewards_examples():
    assert scale_rewards(np.array([5.0]), ConstantScaling(0.1))[0] == pytest.approx(0.5)
    r = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(scale_rewards(r, ConstantScaling(1.0)), r)
    np.testing.assert_array_equal(scale_rewards(r, None), r)
    with pytest.raises(InvalidParameterError):
        ConstantScaling(0.0)


def _reference_return_std(rewards, dones, gamma):
    """Independent simulation: discounted return, population std of all returns so far."""
    ret, rets, out = 0.0, [], []
    for r, d in zip(rewards, dones):
        ret = gamma * ret + r
        rets.append(ret)
        out.append(r / (np.std(rets) + 1e-8))
        if d:
            ret = 0.0
    return np.array(out)


def test_return_std_scaling_matches_simulation():
    rewards = RngStream(2).uniform(3000)
    dones = np.arange(3000) % 50 == 49
    scaler = RewardScaler(ReturnStdScaling(0.99))
    out = np.concatenate([scaler(rewards[i:i + 500], dones[i:i + 500]) for i in range(0, 3000, 500)])
    np.testing.assert_allclose(out, _reference_return_std(rewards, dones, 0.99), rtol=1e-9)


def test_return_std_scaling_converges_on_constant_episodic_stream():
    n = 100_000
    dones = np.arange(n) % 100 == 99
    out = RewardScaler(ReturnStdScaling(0.99))(np.ones(n), dones)
    spread = [np.ptp(out[k - 2000:k]) / out[k - 2000:k].mean() for k in (20_000, 50_000, 100_000)]
    assert spread[0] > spread[1] > spread[2]
    assert spread[2] < 5e-4


def test_return_std_scaling_without_resets_keeps_growing():
    # the return settles at 1/(1-gamma) while the full-history std decays like n^-1/2
    scaler = RewardScaler(ReturnStdScaling(0.99))
    out = np.concatenate([scaler(np.ones(1000)) for _ in range(20)])
    assert np.all(np.diff(out[1000:]) > 0)
    assert out[-1] / out[9999] == pytest.approx(np.sqrt(2), rel=0.05)


def brute_force_gae(rewards, values, gamma, lam):
    n = len(rewards)
    v = list(values) + [0.0]
    deltas = [rewards[t] + gamma * v[t + 1] - v[t] for t in range(n)]
    return np.array([sum((gamma * lam) ** k * deltas[t + k] for k in range(n - t)) for t in range(n)])


@pytest.mark.parametrize("lam", [0.0, 0.5, 0.95, 1.0])
def test_gae_on_chain(lam):
    env = ChainMDP(5, gamma=0.9)
    _, rewards = env.rollout()
    values = np.array([0.2, 0.4, 0.1, 0.7, 0.3])
    np.testing.assert_allclose(gae_advantages(rewards, values, 0.9, lam),
                               brute_force_gae(rewards, values, 0.9, lam), atol=1e-12)


def test_gae_limits_on_chain():
    env = ChainMDP(5, gamma=0.9)
    _, rewards = env.rollout()
    values = np.array([0.2, 0.4, 0.1, 0.7, 0.3])
    td = rewards + 0.9 * np.append(values[1:], 0.0) - values
    np.testing.assert_allclose(gae_advantages(rewards, values, 0.9, 0.0), td, atol=1e-15)
    rtg = [sum(0.9 ** k * rewards[t + k] for k in range(5 - t)) for t in range(5)]
    np.testing.assert_allclose(gae_advantages(rewards, np.zeros(5), 0.9, 1.0), rtg, atol=1e-15)
    assert gae_advantages(rewards, np.zeros(5), 0.9, 1.0)[0] == pytest.approx(env.start_return())


def test_gae_through_compute_advantages():
    env = ChainMDP(5, gamma=0.9)
    _, rewards = env.rollout()
    values = np.linspace(0.1, 0.5, 5)
    b = SampleBatch(np.zeros(5), np.zeros(5), rewards, values=values, dones=np.array([0, 0, 0, 0, 1], bool))
    cfg = TrainConfig(gae=GAEConfig(0.9, 0.95))
    np.testing.assert_allclose(compute_advantages(b, cfg).advantages,
                               brute_force_gae(rewards, values, 0.9, 0.95), atol=1e-12)


def test_gae_config_bounds():
    with pytest.raises(InvalidParameterError):
        GAEConfig(1.1, 0.9)


# -- config and batches -------------------------------------------------------

def test_config_validation():
    with pytest.raises(InvalidParameterError):
        TrainConfig(iterations=0)
    with pytest.raises(InvalidParameterError):
        TrainConfig(timesteps_per_iter=500, minibatch_size=32)
    with pytest.raises(InvalidParameterError):
        TrainConfig(baseline="median")
    assert TrainConfig().steps_per_iteration == 160


def test_collect_batch_contracts():
    rng = RngStream(1)
    env = DiscreteSparseBandit(10, seed=4, noise_std=0.1)
    point = SoftmaxPolicy(np.where(np.arange(10) == 3, 50.0, -50.0))
    b = collect_batch(env, point, rng, 512)
    assert len(b) == 512
    assert np.all(b.actions == 3)
    assert abs(b.rewards.mean() - env.means[3]) < 0.05

    env = SinglePeakBandit(noise_std=0.0)
    g = GaussianPolicy(-1.2, 0.0)
    b = collect_batch(env, g, rng, 512)
    outside = b.actions < -1.5
    assert outside.any()
    # reward from the clipped action, log-prob at the raw one
    np.testing.assert_array_equal(b.rewards[outside], env.mean_reward(-1.5))
    np.testing.assert_allclose(b.old_log_probs, g.log_prob(b.actions))


# -- iterations ---------------------------------------------------------------

class CountingSGD(SGD):
    def __init__(self, lr):
        super().__init__(lr)
        self.steps = 0

    def step(self, theta, grad):
        self.steps += 1
        return super().step(theta, grad)


def test_zero_learning_rate_is_a_no_op():
    env = SinglePeakBandit()
    p = GaussianPolicy(0.1, -0.2)
    new, rec = ppo_iteration(env, p, TrainConfig(learning_rate=0.0), RngStream(3))
    np.testing.assert_array_equal(new.theta, p.theta)
    assert rec.kl_fwd == 0.0 and rec.kl_rev == 0.0
    assert rec.ratio_min == rec.ratio_max == 1.0


def test_single_full_batch_step_is_plain_policy_gradient():
    env = SinglePeakBandit()
    p = GaussianPolicy(-0.5, -0.5)
    cfg = TrainConfig(epochs=1, minibatch_size=512, learning_rate=0.3, surrogate=Unregularized())
    new, _ = ppo_iteration(env, p, cfg, RngStream(9))
    # replay the draws on an identical stream
    batch = compute_advantages(collect_batch(env, p, RngStream(9), 512), cfg)
    expected = p.theta + 0.3 * (batch.advantages[:, None] * p.score_raw(batch.actions)).mean(axis=0)
    np.testing.assert_allclose(new.theta, expected, rtol=1e-12)


def test_step_count_per_iteration():
    opt = CountingSGD(0.1)
    ppo_iteration(SinglePeakBandit(), GaussianPolicy(0, 0), TrainConfig(), RngStream(0), optimizer=opt)
    assert opt.steps == 160


def test_adam_matches_hand_computation():
    opt = Adam(0.1)
    theta = np.array([1.0, -2.0])
    g1, g2 = np.array([0.5, -1.0]), np.array([0.1, 0.3])
    t1 = opt.step(theta, g1)
    np.testing.assert_allclose(t1, theta + 0.1 * np.sign(g1), rtol=1e-6)
    m = 0.9 * 0.1 * g1 + 0.1 * g2
    v = 0.999 * 0.001 * g1 ** 2 + 0.001 * g2 ** 2
    step = (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    np.testing.assert_allclose(opt.step(t1, g2), t1 + 0.1 * step, rtol=1e-12)
    assert isinstance(make_optimizer(TrainConfig(optimizer="adam")), Adam)


# -- whole runs ---------------------------------------------------------------

def test_train_is_deterministic():
    cfg = TrainConfig(iterations=5, seed=42)
    a = train(SinglePeakBandit(), init("gaussian_standard"), cfg)
    b = train(SinglePeakBandit(), init("gaussian_standard"), cfg)
    assert len(a.records) == 5
    for x, y in zip(a.records, b.records):
        assert x.policy_state == y.policy_state
        assert x.kl_rev == y.kl_rev
    assert [r.iteration for r in a.records] == list(range(5))


def test_scaled_rewards_give_identical_trajectories():
    env = SinglePeakBandit()
    runs = []
    for scaling in (None, ConstantScaling(7.5)):
        cfg = TrainConfig(iterations=5, seed=3, advantage_normalization=True, reward_scaling=scaling)
        runs.append(train(env, init("gaussian_standard"), cfg))
    for x, y in zip(*(r.records for r in runs)):
        np.testing.assert_allclose(x.policy_state["theta"], y.policy_state["theta"], rtol=1e-9, atol=1e-12)


def test_divergence_is_recorded_and_halts():
    cfg = TrainConfig(iterations=20, learning_rate=1e6, surrogate=Unregularized(), seed=1)
    res = train(SinglePeakBandit(), init("gaussian_standard"), cfg)
    assert res.diverged
    assert res.records[-1].diverged
    assert len(res.records) < 20
    assert np.all(np.isfinite(res.final_params.theta))


def test_discrete_convergence_criterion():
    env = DiscreteSparseBandit(10, seed=derive_seed(5, 1))
    cfg = TrainConfig(seed=5, surrogate=ReverseKL(3.0), advantage_normalization=True, optimizer="adam")
    res = train(env, init("softmax_uniform", n_actions=10), cfg)
    assert res.final_params.probs()[env.optimal_action()] >= 0.95
    assert expected_reward(res.final_params, env) > 0.95


def test_reverse_kl_trust_region():
    """Per-iteration reverse KL stays within 10x its run median (plain SGD trainer)."""
    for i in range(20):
        s = derive_seed(0, i)
        res = train(SinglePeakBandit(), init("gaussian_standard"), TrainConfig(surrogate=ReverseKL(3.0), seed=s))
        k = np.array([r.kl_rev for r in res.records])
        assert k.max() <= 10 * np.median(k)


def test_clip_records_inactive_fraction():
    res = train(SinglePeakBandit(), init("gaussian_standard"), TrainConfig(iterations=3, surrogate=Clip(0.2)))
    assert all(0 <= r.clip_inactive_frac <= 1 for r in res.records)
    res = train(SinglePeakBandit(), init("gaussian_standard"), TrainConfig(iterations=3, surrogate=ReverseKL(3.0)))
    assert all(np.isnan(r.clip_inactive_frac) for r in res.records)


def test_density_grid_recorded():
    res = train(SinglePeakBandit(), init("gaussian_standard"), TrainConfig(iterations=2, density_points=50))
    assert res.records[0].density.shape == (50,)
