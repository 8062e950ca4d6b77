"""PPO outer loop for single-state bandits.

One iteration: freeze the current policy, draw a batch from it, turn rewards
into advantages, then run several epochs of shuffled minibatch gradient ascent
on the chosen surrogate.  Updates use plain SGD by default; ``optimizer="adam"``
switches to Adam, whose moment estimates persist across iterations of a run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .policy import PolicySnapshot, kl_grad
from .rng import InvalidParameterError, RngStream
from .surrogate import (
    Clip, SampleBatch, SurrogateSpec, _analytic, _sample_terms, clip_active_mask, kl_estimates,
    surrogate_label,
)

log = logging.getLogger(__name__)

ADV_EPS = 1e-8
PROBE_POINTS = 1000


@dataclass(frozen=True)
class ConstantScaling:
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidParameterError("constant reward scale must be positive")


@dataclass(frozen=True)
class ReturnStdScaling:
    gamma: float = 0.99


@dataclass(frozen=True)
class GAEConfig:
    gamma: float = 0.99
    lam: float = 0.95

    def __post_init__(self):
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise InvalidParameterError("GAE gamma and lambda must lie in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 50
    timesteps_per_iter: int = 512
    minibatch_size: int = 32
    epochs: int = 10
    learning_rate: float = 0.1
    surrogate: SurrogateSpec = Clip(0.2)
    advantage_normalization: bool = False
    reward_scaling: ConstantScaling | ReturnStdScaling | None = None
    baseline: str = "batch_mean"
    gae: GAEConfig | None = None
    seed: int = 0
    density_points: int = 0
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidParameterError("need at least one iteration")
        if self.timesteps_per_iter < 1 or self.minibatch_size < 1 or self.epochs < 1:
            raise InvalidParameterError("batch sizes and epochs must be positive")
        if self.timesteps_per_iter % self.minibatch_size:
            raise InvalidParameterError("timesteps_per_iter must be divisible by minibatch_size")
        if not self.learning_rate >= 0:
            raise InvalidParameterError("learning rate must be non-negative")
        if self.baseline not in ("batch_mean", "zero"):
            raise InvalidParameterError(f"unknown baseline {self.baseline!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidParameterError(f"unknown optimizer {self.optimizer!r}")

    @property
    def steps_per_iteration(self) -> int:
        return self.epochs * (self.timesteps_per_iter // self.minibatch_size)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "timesteps_per_iter": self.timesteps_per_iter,
            "minibatch_size": self.minibatch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "surrogate": surrogate_label(self.surrogate),
            "advantage_normalization": self.advantage_normalization,
            "reward_scaling": _scaling_label(self.reward_scaling),
            "baseline": self.baseline,
            "gae": None if self.gae is None else [self.gae.gamma, self.gae.lam],
            "seed": self.seed,
            "optimizer": self.optimizer,
        }


def _scaling_label(s) -> str:
    if s is None:
        return "none"
    if isinstance(s, ConstantScaling):
        return f"constant:{s.c:g}"
    return f"return_std:{s.gamma:g}"


@dataclass
class IterationRecord:
    iteration: int
    reward_mean: float
    reward_std: float
    probe_reward: float
    kl_fwd: float
    kl_rev: float
    ratio_min: float
    ratio_max: float
    ratio_mean: float
    clip_inactive_frac: float
    adv_std: float
    policy_state: dict
    density: np.ndarray | None = field(default=None, repr=False)
    diverged: bool = False


# -- advantages ---------------------------------------------------------------

class RunningMoments:
    """Welford accumulator for a running mean and population variance."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def std(self) -> float:
        return float(np.sqrt(self.m2 / self.count)) if self.count > 1 else 0.0


class RewardScaler:
    """Stateful reward scaling; the return-std scheme divides by the running std of discounted returns."""

    def __init__(self, scheme):
        self.scheme = scheme
        self.ret = 0.0
        self.moments = RunningMoments()

    def __call__(self, rewards, dones=None) -> np.ndarray:
        rewards = np.asarray(rewards, dtype=np.float64)
        if self.scheme is None:
            return rewards.copy()
        if isinstance(self.scheme, ConstantScaling):
            return rewards * self.scheme.c
        out = np.empty_like(rewards)
        for i, r in enumerate(rewards):
            self.ret = self.scheme.gamma * self.ret + r
            self.moments.push(self.ret)
            out[i] = r / (self.moments.std + ADV_EPS)
            if dones is not None and dones[i]:
                self.ret = 0.0
        return out


def scale_rewards(rewards, scheme, running_state: RewardScaler | None = None) -> np.ndarray:
    scaler = running_state if running_state is not None else RewardScaler(scheme)
    return scaler(rewards)


def gae_advantages(rewards, values, gamma: float, lam: float, last_value: float = 0.0,
                   dones=None) -> np.ndarray:
    """A_t = sum_k (gamma lam)^k delta_{t+k}, delta_t = r_t + gamma V_{t+1} - V_t."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = rewards.size
    dones = np.zeros(n, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    adv = np.empty(n)
    acc = 0.0
    next_value = last_value
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        acc = delta + gamma * lam * nonterminal * acc
        adv[t] = acc
        next_value = values[t]
    return adv


def normalize_advantages(adv) -> np.ndarray:
    """(adv - mean) / std, with the std floored at ADV_EPS.

    A floor rather than an added epsilon keeps the result exactly invariant
    to a constant reward scale whenever the spread is above the floor.
    """
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / max(float(adv.std()), ADV_EPS)


def compute_advantages(batch: SampleBatch, config: TrainConfig,
                       scaler: RewardScaler | None = None) -> SampleBatch:
    if len(batch) == 0:
        raise InvalidParameterError("empty batch")
    scaler = scaler if scaler is not None else RewardScaler(config.reward_scaling)
    rewards = scaler(batch.rewards, batch.dones)
    if config.gae is not None and batch.values is not None:
        adv = gae_advantages(rewards, batch.values, config.gae.gamma, config.gae.lam,
                             dones=batch.dones)
    elif config.baseline == "batch_mean":
        adv = rewards - rewards.mean()
    else:
        adv = rewards
    if config.advantage_normalization:
        adv = normalize_advantages(adv)
    return batch.with_advantages(adv)


# -- policy probes ------------------------------------------------------------

def expected_reward(params, env, points: int = PROBE_POINTS) -> float:
    """Deterministic policy value: exact for discrete policies, quantile midpoints otherwise."""
    dist = params.realize()
    if getattr(env, "discrete", False):
        return float(np.dot(dist.probs, env.means))
    q = (np.arange(points) + 0.5) / points
    return float(np.mean(env.mean_reward(dist.ppf(q))))


def density_grid(params, env, points: int):
    grid = np.linspace(env.lo, env.hi, points)
    return grid, np.exp(params.realize().log_prob(grid))


# -- training -----------------------------------------------------------------

def collect_batch(env, params, rng: RngStream, n: int) -> SampleBatch:
    """Sample n actions from the policy; the env clips, log-probs use the raw action."""
    if n < 1:
        raise InvalidParameterError("batch size must be positive")
    actions = params.realize().sample(rng, n)
    rewards = env.sample_reward(actions, rng)
    snap = PolicySnapshot.take(params, actions)
    return SampleBatch(actions, snap.old_log_probs, rewards)


class Diverged(RuntimeError):
    pass


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, theta, grad):
        return theta + self.lr * grad


class Adam:
    """Adam ascent; moment estimates persist across PPO iterations."""

    def __init__(self, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return theta + self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(config.learning_rate)
    return SGD(config.learning_rate)


def _minibatch_gradient(spec, params, old_params, actions, old_lp, adv):
    # same as surrogate.objective_gradient, minus the SampleBatch validation
    lr = params.log_prob(actions) - old_lp
    if not np.all(np.isfinite(lr)):
        raise Diverged("non-finite log ratio")
    _, w = _sample_terms(spec, lr, adv)
    g = w @ params.score_raw(actions) / len(actions)
    if _analytic(spec):
        g = g - spec.beta * kl_grad(params, old_params, spec.direction)
    return g


def ppo_iteration(env, params, config: TrainConfig, rng: RngStream, iteration: int = 0,
                  scaler: RewardScaler | None = None, optimizer=None):
    """Run one collect-and-optimize round; returns (new params, IterationRecord)."""
    try:
        batch = collect_batch(env, params, rng, config.timesteps_per_iter)
    except (InvalidParameterError, FloatingPointError) as exc:
        # the previous update left a policy that cannot be sampled
        raise Diverged(str(exc)) from exc
    batch = compute_advantages(batch, config, scaler)
    n, mb = len(batch), config.minibatch_size
    optimizer = optimizer if optimizer is not None else make_optimizer(config)
    theta = params.theta
    current = params
    diverged = False
    # overflow on the way to a blow-up is expected; the finiteness checks catch it
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            for _ in range(config.epochs):
                order = rng.permutation(n)
                for start in range(0, n, mb):
                    idx = order[start:start + mb]
                    g = _minibatch_gradient(config.surrogate, current, params, batch.actions[idx],
                                            batch.old_log_probs[idx], batch.advantages[idx])
                    theta = optimizer.step(theta, g)
                    if not np.all(np.isfinite(theta)):
                        raise Diverged("non-finite parameters")
                    current = params.with_theta(theta)
        except (Diverged, FloatingPointError, InvalidParameterError) as exc:
            log.warning("iteration %d diverged: %s", iteration, exc)
            diverged = True
        record = _record(iteration, env, config, params, current, batch, diverged)
    return current, record


def _record(iteration, env, config, old, new, batch, diverged) -> IterationRecord:
    nan = float("nan")
    rewards = batch.rewards
    try:
        lr = new.log_prob(batch.actions) - batch.old_log_probs
        ok = np.all(np.isfinite(lr)) and not diverged
    except (InvalidParameterError, FloatingPointError):
        ok = False
    if ok:
        r = np.exp(lr)
        kl_fwd, kl_rev = kl_estimates(lr)
        inactive = nan
        if isinstance(config.surrogate, Clip):
            inactive = float(1.0 - np.mean(clip_active_mask(config.surrogate, r, batch.advantages)))
        ratio_stats = (float(r.min()), float(r.max()), float(r.mean()))
        probe = expected_reward(new, env)
        density = None
        if config.density_points:
            density = density_grid(new, env, config.density_points)[1]
    else:
        kl_fwd = kl_rev = inactive = probe = nan
        ratio_stats = (nan, nan, nan)
        density = None
    return IterationRecord(
        iteration=iteration,
        reward_mean=float(rewards.mean()),
        reward_std=float(rewards.std()),
        probe_reward=probe,
        kl_fwd=kl_fwd,
        kl_rev=kl_rev,
        ratio_min=ratio_stats[0],
        ratio_max=ratio_stats[1],
        ratio_mean=ratio_stats[2],
        clip_inactive_frac=inactive,
        adv_std=float(batch.advantages.std()),
        policy_state=new.to_dict() if ok else old.to_dict(),
        density=density,
        diverged=not ok,
    )


@dataclass
class TrainResult:
    records: list[IterationRecord]
    final_params: object
    diverged: bool

    @property
    def probe_rewards(self) -> np.ndarray:
        return np.array([r.probe_reward for r in self.records])


def train(env, init_params, config: TrainConfig, rng: RngStream | None = None) -> TrainResult:
    """Run ``config.iterations`` PPO iterations; halts early if the parameters blow up."""
    if config.iterations < 1:
        raise InvalidParameterError("need at least one iteration")
    rng = rng if rng is not None else RngStream(config.seed)
    scaler = RewardScaler(config.reward_scaling)
    optimizer = make_optimizer(config)
    params = init_params
    records = []
    for k in range(config.iterations):
        try:
            params, rec = ppo_iteration(env, params, config, rng, iteration=k, scaler=scaler,
                                        optimizer=optimizer)
        except Diverged as exc:
            if not records:
                raise InvalidParameterError(f"initial policy unusable: {exc}") from exc
            log.warning("iteration %d: policy unusable (%s); halting", k, exc)
            records[-1] = replace(records[-1], diverged=True)
            break
        records.append(rec)
        if rec.diverged:
            params = _params_from_state(init_params, rec.policy_state)
            break
    return TrainResult(records, params, records[-1].diverged)


def _params_from_state(template, state):
    return template.with_theta(np.asarray(state["theta"], dtype=np.float64))


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)
