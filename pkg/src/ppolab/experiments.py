"""Named experiment presets, seeded multi-run execution, and run verdicts.

Every preset trains with Adam and per-batch advantage normalization on top of
the batch-mean baseline.  KL surrogates use the closed-form penalty on
continuous action spaces and the sampled penalty on discrete ones unless the
config says otherwise.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import envs
from .policy import init
from .rng import InvalidParameterError, RngStream, derive_seed
from .surrogate import Clip, ForwardKL, ReverseKL, SurrogateSpec, parse_surrogate
from .trainer import ConstantScaling, ReturnStdScaling, TrainConfig, TrainResult, train

EXPERIMENTS = ("failure1", "failure1_wide", "failure2", "failure3", "action_sweep",
               "lr_ablation", "scaling_ablation")
POLICIES = ("gaussian", "beta", "softmax")

# what every preset changes relative to TrainConfig defaults
PRESET_TRAINING = {"optimizer": "adam", "advantage_normalization": True}

COLLAPSE_HIGH = 0.8
COLLAPSE_LOW = 0.4
COLLAPSE_RUN = 5
END_WINDOW = (40, 50)
END_GOOD = 0.7
DISCRETE_CONVERGED = 0.95
PEAK_TOLERANCE = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "failure1"
    policy: str | None = None
    surrogate: SurrogateSpec = Clip(0.2)
    n_actions: int = 100
    runs: int = 20
    seed: int = 0
    out: str | None = None
    kl_estimator: str | None = None
    overrides: dict = field(default_factory=dict)
    dims: tuple = ()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidParameterError(f"unknown experiment {self.experiment!r}")
        if self.runs < 1:
            raise InvalidParameterError("run count must be >= 1")
        policy = self.policy or default_policy(self.experiment)
        if policy not in POLICIES:
            raise InvalidParameterError(f"unknown policy kind {policy!r}")
        if is_discrete(self.experiment) and policy != "softmax":
            raise InvalidParameterError(f"{self.experiment} needs a softmax policy")
        if self.experiment == "failure2" and policy == "softmax":
            raise InvalidParameterError("failure2 has no discretized variant")
        object.__setattr__(self, "policy", policy)
        unknown = set(self.overrides) - set(TrainConfig.__dataclass_fields__)
        if unknown:
            raise InvalidParameterError(f"unknown training overrides {sorted(unknown)}")

    def train_config(self, seed: int, n_actions: int | None = None) -> TrainConfig:
        spec = self.surrogate
        if isinstance(spec, (ForwardKL, ReverseKL)):
            est = self.kl_estimator or ("sample" if self.discrete else "analytic")
            spec = replace(spec, estimator=est)
        kw = dict(PRESET_TRAINING)
        if self.experiment == "lr_ablation":
            kw["learning_rate"] = 0.001
        if self.experiment == "scaling_ablation":
            kw["advantage_normalization"] = False
        kw.update(self.overrides)
        if isinstance(kw.get("reward_scaling"), str):
            kw["reward_scaling"] = parse_scaling(kw["reward_scaling"])
        return TrainConfig(surrogate=spec, seed=seed, **kw)

    @property
    def discrete(self) -> bool:
        return self.policy == "softmax"

    def to_dict(self) -> dict:
        from .surrogate import surrogate_label
        return {
            "experiment": self.experiment,
            "policy": self.policy,
            "surrogate": surrogate_label(self.surrogate),
            "n_actions": self.n_actions,
            "runs": self.runs,
            "seed": self.seed,
            "kl_estimator": self.kl_estimator,
            "overrides": {k: _plain(v) for k, v in sorted(self.overrides.items())},
            "dims": list(self.dims),
        }


def _plain(v):
    if isinstance(v, ConstantScaling):
        return f"constant:{v.c:g}"
    if isinstance(v, ReturnStdScaling):
        return f"return_std:{v.gamma:g}"
    return v


def parse_scaling(text: str | None):
    """``none``, ``constant:<c>``, ``return_std`` or ``return_std:<gamma>``."""
    if text is None or text == "none":
        return None
    name, _, arg = text.partition(":")
    if name == "constant":
        return ConstantScaling(float(arg) if arg else 1.0)
    if name == "return_std":
        return ReturnStdScaling(float(arg) if arg else 0.99)
    raise InvalidParameterError(f"unknown reward scaling {text!r}")


def is_discrete(experiment: str) -> bool:
    return experiment in ("failure3", "action_sweep", "lr_ablation")


def default_policy(experiment: str) -> str:
    return "softmax" if is_discrete(experiment) else "gaussian"


def make_env(cfg: ExperimentConfig, run_seed: int, n_actions: int | None = None):
    n = n_actions or cfg.n_actions
    if is_discrete(cfg.experiment):
        # separate stream from training so arm placement and sampling are independent
        return envs.DiscreteSparseBandit(n, seed=derive_seed(run_seed, 1))
    if cfg.experiment == "failure2":
        return envs.DoublePeakBandit()
    if cfg.policy == "softmax":
        return envs.DiscretizedSinglePeak()
    if cfg.experiment == "failure1_wide":
        return envs.wide_single_peak()
    return envs.SinglePeakBandit()


def make_policy(cfg: ExperimentConfig, env):
    if cfg.policy == "gaussian":
        return init("gaussian_standard")
    if cfg.policy == "beta":
        return init("beta_near_uniform", lo=env.lo, hi=env.hi)
    return init("softmax_uniform", n_actions=env.n_actions)


# -- verdicts -----------------------------------------------------------------

def collapsed(probe) -> bool:
    """Probe reward exceeded 0.8, then fell below 0.4 for 5 iterations in a row."""
    probe = np.asarray(probe, dtype=np.float64)
    high = np.flatnonzero(probe > COLLAPSE_HIGH)
    if not high.size:
        return False
    streak = 0
    for v in probe[high[0] + 1:]:
        streak = streak + 1 if v < COLLAPSE_LOW else 0
        if streak >= COLLAPSE_RUN:
            return True
    return False


def end_reward(probe) -> float:
    lo, hi = END_WINDOW
    tail = np.asarray(probe, dtype=np.float64)[lo:hi]
    return float(np.mean(tail)) if tail.size else float("nan")


def optimal_probability(params, env) -> float:
    return float(params.probs()[env.optimal_action()])


def policy_location(params) -> tuple[float, float]:
    """(mean, mode) of a continuous policy."""
    d = params.realize()
    return float(d.mean()), float(d.mode())


def verdict(cfg: ExperimentConfig, env, result: TrainResult) -> dict:
    out = {"diverged": result.diverged}
    if is_discrete(cfg.experiment):
        p = optimal_probability(result.final_params, env)
        out.update(p_optimal=p, converged=p >= DISCRETE_CONVERGED)
        return out
    probe = result.probe_rewards
    out["final_probe"] = float(probe[-1])
    if cfg.experiment == "failure2":
        mean, mode = policy_location(result.final_params)
        out.update(mean=mean, mode=mode,
                   near_suboptimal=abs(mode - 1.0) <= PEAK_TOLERANCE,
                   converged=abs(mode - env.optimal_action()) <= PEAK_TOLERANCE)
        return out
    end = end_reward(probe)
    out.update(collapsed=collapsed(probe), end_reward=end,
               converged=bool(end >= END_GOOD) and not result.diverged)
    return out


# -- execution ----------------------------------------------------------------

@dataclass
class RunOutcome:
    run_index: int
    seed: int
    n_actions: int | None
    result: TrainResult
    verdict: dict


def run_one(cfg: ExperimentConfig, run_index: int, n_actions: int | None = None) -> RunOutcome:
    seed = derive_seed(cfg.seed, run_index)
    env = make_env(cfg, seed, n_actions)
    result = train(env, make_policy(cfg, env), cfg.train_config(seed), RngStream(seed))
    n = env.n_actions if getattr(env, "discrete", False) else None
    return RunOutcome(run_index, seed, n, result, verdict(cfg, env, result))


def _run_star(args):
    return run_one(*args)


def run_many(cfg: ExperimentConfig, jobs: int | None = None, n_actions: int | None = None):
    """All ``cfg.runs`` seeded runs, ordered by run index whatever the scheduling."""
    tasks = [(cfg, i, n_actions) for i in range(cfg.runs)]
    jobs = default_jobs(jobs)
    if jobs <= 1 or len(tasks) == 1:
        return [_run_star(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_star, tasks))


def default_jobs(jobs: int | None) -> int:
    if jobs is None:
        return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1
    if jobs < 1:
        raise InvalidParameterError("--jobs must be >= 1")
    return jobs


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def summarize(outcomes: list[RunOutcome]) -> dict:
    n = len(outcomes)
    conv = sum(bool(o.verdict.get("converged")) for o in outcomes)
    finals = np.array([o.result.records[-1].probe_reward for o in outcomes], dtype=np.float64)
    lo, hi = wilson_interval(conv, n)
    out = {
        "runs": n,
        "converged": conv,
        "convergence_fraction": conv / n,
        "ci_low": lo,
        "ci_high": hi,
        "final_reward_mean": float(np.nanmean(finals)) if np.isfinite(finals).any() else None,
        "final_reward_std": float(np.nanstd(finals)) if np.isfinite(finals).any() else None,
        "diverged": sum(bool(o.verdict["diverged"]) for o in outcomes),
    }
    if all("collapsed" in o.verdict for o in outcomes):
        c = sum(o.verdict["collapsed"] for o in outcomes)
        out.update(collapsed=c, collapse_fraction=c / n)
    return out


def parse_surrogate_list(text: str) -> list[SurrogateSpec]:
    return [parse_surrogate(t) for t in text.split(",") if t.strip()]
