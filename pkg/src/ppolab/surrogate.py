"""Surrogate objectives, their sample gradients, and per-sample diagnostics.

All objectives are Monte Carlo averages over a batch drawn from the frozen old
policy.  With r = pi_theta(a) / pi_old(a) and advantage A the per-sample
gradient weights (multiplying the raw-parameter score) are

    unregularized   r A
    clip            1{|r-1| < eps or sgn(r-1) != sgn(A)} r A
    forward KL      r A + beta
    reverse KL      r (A - beta log r)

By default the KL penalties are estimated from the same samples with
per-sample terms -log r (forward) and r log r - r + 1 (reverse).  Both are
unbiased, and their exact derivatives reproduce the weights above, so
``objective_value`` and ``objective_gradient`` agree to finite-difference
precision.

``estimator="analytic"`` swaps the sampled penalty for the closed-form KL
between the current and snapshot policies.  The advantage term is unchanged.
The sampled penalty only sees the old actions, so once the new policy has
moved its mass elsewhere the penalty stops pulling it back; the closed form
does not have that blind spot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .policy import PolicySnapshot, kl_between, kl_grad
from .rng import InvalidParameterError

KL_ESTIMATORS = ("sample", "analytic")


def _check_kl(spec):
    if not spec.beta > 0:
        raise InvalidParameterError(f"KL coefficient must be positive, got {spec.beta}")
    if spec.estimator not in KL_ESTIMATORS:
        raise InvalidParameterError(f"unknown KL estimator {spec.estimator!r}")


@dataclass(frozen=True)
class Clip:
    epsilon: float = 0.2
    name = "clip"

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise InvalidParameterError(f"clip epsilon must be in (0, 1], got {self.epsilon}")


@dataclass(frozen=True)
class ForwardKL:
    beta: float = 3.0
    estimator: str = "sample"
    name = "fkl"
    direction = "forward"

    def __post_init__(self):
        _check_kl(self)


@dataclass(frozen=True)
class ReverseKL:
    beta: float = 3.0
    estimator: str = "sample"
    name = "rkl"
    direction = "reverse"

    def __post_init__(self):
        _check_kl(self)


@dataclass(frozen=True)
class Unregularized:
    name = "none"


SurrogateSpec = Clip | ForwardKL | ReverseKL | Unregularized


def parse_surrogate(text: str) -> SurrogateSpec:
    """``clip``, ``clip:0.1``, ``fkl``, ``rkl:3``, ``rkl:3:analytic``, ``none``."""
    name, _, arg = text.partition(":")
    arg, _, est = arg.partition(":")
    name = name.strip().lower()
    try:
        value = float(arg) if arg else None
    except ValueError:
        raise InvalidParameterError(f"bad surrogate parameter in {text!r}") from None
    if name == "clip":
        return Clip(0.2 if value is None else value)
    if name in ("fkl", "forward_kl", "forwardkl"):
        return ForwardKL(3.0 if value is None else value, est or "sample")
    if name in ("rkl", "reverse_kl", "reversekl"):
        return ReverseKL(3.0 if value is None else value, est or "sample")
    if name in ("none", "unregularized", "pg"):
        return Unregularized()
    raise InvalidParameterError(f"unknown surrogate {text!r}")


def surrogate_label(spec: SurrogateSpec) -> str:
    if isinstance(spec, Clip):
        return f"clip:{spec.epsilon:g}"
    if isinstance(spec, (ForwardKL, ReverseKL)):
        tail = ":analytic" if spec.estimator == "analytic" else ""
        return f"{spec.name}:{spec.beta:g}{tail}"
    return spec.name


@dataclass(eq=False)
class SampleBatch:
    actions: np.ndarray
    old_log_probs: np.ndarray
    rewards: np.ndarray
    advantages: np.ndarray | None = None
    values: np.ndarray | None = field(default=None, repr=False)
    dones: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.actions = np.asarray(self.actions)
        self.old_log_probs = np.asarray(self.old_log_probs, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        n = len(self.actions)
        if n < 1:
            raise InvalidParameterError("empty sample batch")
        if len(self.old_log_probs) != n or len(self.rewards) != n:
            raise InvalidParameterError("batch sequences must have equal length")
        if not np.all(np.isfinite(self.old_log_probs)):
            raise InvalidParameterError("old log-probabilities must be finite")
        if self.advantages is None:
            self.advantages = np.zeros(n)
        else:
            self.advantages = np.asarray(self.advantages, dtype=np.float64)
            if len(self.advantages) != n:
                raise InvalidParameterError("batch sequences must have equal length")

    def __len__(self):
        return len(self.actions)

    def subset(self, idx) -> "SampleBatch":
        return SampleBatch(self.actions[idx], self.old_log_probs[idx], self.rewards[idx],
                           self.advantages[idx])

    def with_advantages(self, advantages) -> "SampleBatch":
        return SampleBatch(self.actions, self.old_log_probs, self.rewards, advantages,
                           self.values, self.dones)


def log_ratio(params, batch: SampleBatch) -> np.ndarray:
    new = np.asarray(params.log_prob(batch.actions), dtype=np.float64)
    lr = new - batch.old_log_probs
    if not np.all(np.isfinite(lr)):
        raise InvalidParameterError("non-finite log-probability ratio")
    return lr


def ratio(params, snapshot, a) -> np.ndarray | float:
    """pi_theta(a) / pi_old(a), evaluated in log space."""
    new = np.asarray(params.log_prob(a), dtype=np.float64)
    old = np.asarray(_old_params(snapshot).log_prob(a), dtype=np.float64)
    if not (np.all(np.isfinite(new)) and np.all(np.isfinite(old))):
        raise InvalidParameterError("non-finite log-probability in ratio")
    out = np.exp(new - old)
    return float(out) if out.ndim == 0 else out


def clip_active_mask(spec: Clip, r, adv):
    """Indicator that a sample still contributes to the clipped gradient."""
    r = np.asarray(r, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    inside = np.abs(r - 1.0) < spec.epsilon
    disagree = (np.sign(r - 1.0) != np.sign(adv)) & (adv != 0)
    out = inside | disagree
    return bool(out) if out.ndim == 0 else out


def _old_params(snapshot):
    return snapshot.params if isinstance(snapshot, PolicySnapshot) else snapshot


def _analytic(spec) -> bool:
    return isinstance(spec, (ForwardKL, ReverseKL)) and spec.estimator == "analytic"


def _sample_terms(spec, lr, adv):
    """Per-sample objective values and gradient weights."""
    r = np.exp(lr)
    if isinstance(spec, Unregularized) or _analytic(spec):
        return r * adv, r * adv
    if isinstance(spec, Clip):
        lo, hi = 1.0 - spec.epsilon, 1.0 + spec.epsilon
        value = np.minimum(r * adv, np.clip(r, lo, hi) * adv)
        return value, clip_active_mask(spec, r, adv) * r * adv
    if isinstance(spec, ForwardKL):
        return r * adv + spec.beta * lr, r * adv + spec.beta
    if isinstance(spec, ReverseKL):
        kl_term = r * lr - r + 1.0
        return r * adv - spec.beta * kl_term, r * (adv - spec.beta * lr)
    raise InvalidParameterError(f"unknown surrogate {spec!r}")


def objective_value(spec: SurrogateSpec, params, snapshot, batch: SampleBatch) -> float:
    """Surrogate value on ``batch``; ``snapshot`` is the frozen old policy (or its params)."""
    value, _ = _sample_terms(spec, log_ratio(params, batch), batch.advantages)
    out = float(np.mean(value))
    if _analytic(spec):
        out -= spec.beta * kl_between(params, _old_params(snapshot), spec.direction)
    return out


def sample_gradient_weights(spec: SurrogateSpec, params, batch: SampleBatch) -> np.ndarray:
    """Per-sample multipliers of score_raw (analytic KL penalties excluded)."""
    _, w = _sample_terms(spec, log_ratio(params, batch), batch.advantages)
    return w


def objective_gradient(spec: SurrogateSpec, params, snapshot, batch: SampleBatch) -> np.ndarray:
    """Batch mean of weight * score_raw, plus the closed-form penalty gradient if requested."""
    w = sample_gradient_weights(spec, params, batch)
    g = w @ params.score_raw(batch.actions) / len(batch)
    if _analytic(spec):
        g = g - spec.beta * kl_grad(params, _old_params(snapshot), spec.direction)
    return g


def per_sample_contributions(spec, params, batch) -> np.ndarray:
    w = sample_gradient_weights(spec, params, batch)
    return w[:, None] * params.score_raw(batch.actions)


def sample_weighting(spec: SurrogateSpec, r, adv):
    """Weight of a sample relative to plain r*A weighting, normalized to 1 at r = 1."""
    r = np.asarray(r, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    if isinstance(spec, Unregularized):
        out = np.ones(np.broadcast(r, adv).shape)
    elif isinstance(spec, Clip):
        out = clip_active_mask(spec, r, adv) * 1.0
    else:
        if np.any(adv == 0):
            raise InvalidParameterError("KL weighting undefined for zero advantage")
        if isinstance(spec, ReverseKL):
            out = 1.0 + spec.beta / adv * np.log(1.0 / r)
        elif isinstance(spec, ForwardKL):
            out = 1.0 + spec.beta / adv * (1.0 / r - 1.0)
        else:
            raise InvalidParameterError(f"unknown surrogate {spec!r}")
    out = np.asarray(out, dtype=np.float64)
    return float(out) if out.ndim == 0 else out


def kl_estimates(lr) -> tuple[float, float]:
    """Nonnegative sample estimates (forward, reverse) of KL between old and new policy.

    ``lr`` holds log r on samples from the old policy.  Forward uses
    (r - 1) - log r, reverse uses r log r - r + 1; both have the right
    expectation and are nonnegative sample by sample.
    """
    lr = np.asarray(lr, dtype=np.float64)
    r = np.exp(lr)
    fwd = np.mean(np.expm1(lr) - lr)
    rev = np.mean(r * lr - np.expm1(lr))
    return float(fwd), float(rev)


def kl_gradient_gap(params, snapshot, batch: SampleBatch) -> np.ndarray:
    """Monte Carlo estimate of 0.5 E_old[(r-1)^2 score_raw].

    Second-order approximation to grad KL(new||old) - grad KL(old||new).
    """
    r = np.exp(log_ratio(params, batch))
    return 0.5 * ((r - 1.0) ** 2) @ params.score_raw(batch.actions) / len(batch)


def fd_gradient(spec: SurrogateSpec, params, snapshot, batch: SampleBatch,
                h: float = 1e-5) -> np.ndarray:
    """Central finite differences of ``objective_value`` in raw parameters."""
    if not h > 0:
        raise InvalidParameterError("finite-difference step must be positive")
    theta = params.theta
    grad = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        up = objective_value(spec, params.with_theta(theta + e), snapshot, batch)
        dn = objective_value(spec, params.with_theta(theta - e), snapshot, batch)
        grad[i] = (up - dn) / (2 * h)
    return grad


def near_mask_boundary(spec: SurrogateSpec, params, batch: SampleBatch, margin: float) -> bool:
    """True when some sample ratio sits within ``margin`` of a clip threshold."""
    if not isinstance(spec, Clip):
        return False
    r = np.exp(log_ratio(params, batch))
    return bool(np.any(np.abs(np.abs(r - 1.0) - spec.epsilon) < margin))
