"""Trainable policy parameterizations over raw (unconstrained) parameters.

A policy is a frozen value holding its raw parameters.  ``theta`` exposes them
as a flat vector and ``with_theta`` builds the updated policy, which is all the
optimizer needs.  Scores are returned in raw-parameter coordinates, i.e. the
distribution score pushed through the realization map by the chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special as sp

from .distributions import Categorical, Gaussian1D, ScaledBeta, kl
from .rng import InvalidParameterError, RngStream
from .special import digamma, trigamma

NEAR_UNIFORM_RAW = -4.0


def softplus(x):
    return np.logaddexp(0.0, x)


def _finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("policy parameters must be finite")


@dataclass(frozen=True)
class GaussianPolicy:
    """N(mu_raw, exp(log_sigma_raw)^2)."""

    mu_raw: float
    log_sigma_raw: float
    kind = "gaussian"

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.mu_raw, self.log_sigma_raw])

    def with_theta(self, theta) -> "GaussianPolicy":
        return GaussianPolicy(float(theta[0]), float(theta[1]))

    def realize(self) -> Gaussian1D:
        _finite(self.mu_raw, self.log_sigma_raw)
        return Gaussian1D(self.mu_raw, float(np.exp(self.log_sigma_raw)))

    def log_prob(self, a):
        z = (np.asarray(a, dtype=np.float64) - self.mu_raw) * np.exp(-self.log_sigma_raw)
        return -0.5 * z * z - self.log_sigma_raw - 0.5 * np.log(2.0 * np.pi)

    def score_raw(self, a):
        # d/dmu = (a-mu)/s^2 ; d/dlog s = ((a-mu)^2 - s^2)/s^2
        z = (np.atleast_1d(np.asarray(a, dtype=np.float64)) - self.mu_raw) * np.exp(-self.log_sigma_raw)
        return np.stack([z * np.exp(-self.log_sigma_raw), z * z - 1.0], axis=-1)

    def kl_grad(self, old: "GaussianPolicy", direction: str) -> np.ndarray:
        d = self.mu_raw - old.mu_raw
        var = np.exp(2.0 * self.log_sigma_raw)
        var_old = np.exp(2.0 * old.log_sigma_raw)
        if direction == "reverse":
            return np.array([d / var_old, var / var_old - 1.0])
        return np.array([d / var, 1.0 - (var_old + d * d) / var])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "theta": self.theta.tolist()}


@dataclass(frozen=True)
class BetaPolicy:
    """Beta on [lo, hi] with shapes softplus(x) + 1, so both shapes stay >= 1."""

    x_alpha: float
    x_beta: float
    lo: float
    hi: float
    kind = "beta"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidParameterError(f"Beta policy bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.x_alpha, self.x_beta])

    def with_theta(self, theta) -> "BetaPolicy":
        return BetaPolicy(float(theta[0]), float(theta[1]), self.lo, self.hi)

    @property
    def shapes(self) -> tuple[float, float]:
        return float(softplus(self.x_alpha) + 1.0), float(softplus(self.x_beta) + 1.0)

    def realize(self) -> ScaledBeta:
        _finite(self.x_alpha, self.x_beta)
        a, b = self.shapes
        return ScaledBeta(a, b, self.lo, self.hi)

    def log_prob(self, a):
        return self.realize().log_prob(a)

    def score_raw(self, a):
        dist = self.realize()
        chain = sp.expit(self.theta)
        return dist.score(a) * chain

    def kl_grad(self, old: "BetaPolicy", direction: str) -> np.ndarray:
        a1, b1 = self.shapes
        a2, b2 = old.shapes
        if direction == "reverse":
            t = trigamma(a1 + b1) * (a1 - a2 + b1 - b2)
            g = np.array([(a1 - a2) * trigamma(a1) - t, (b1 - b2) * trigamma(b1) - t])
        else:
            c = digamma(a2 + b2) - digamma(a1 + b1)
            g = np.array([digamma(a1) - digamma(a2) + c, digamma(b1) - digamma(b2) + c])
        return g * sp.expit(self.theta)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "theta": self.theta.tolist(), "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True, eq=False)
class SoftmaxPolicy:
    """Categorical policy with probabilities softmax(logits)."""

    logits: np.ndarray = field(repr=False)
    kind = "softmax"

    def __post_init__(self):
        object.__setattr__(self, "logits", np.array(self.logits, dtype=np.float64))

    @property
    def n_actions(self) -> int:
        return self.logits.size

    @property
    def theta(self) -> np.ndarray:
        return self.logits.copy()

    def with_theta(self, theta) -> "SoftmaxPolicy":
        return SoftmaxPolicy(theta)

    def probs(self) -> np.ndarray:
        z = self.logits - self.logits.max()
        e = np.exp(z)
        return e / e.sum()

    def log_probs(self) -> np.ndarray:
        return self.logits - sp.logsumexp(self.logits)

    def realize(self) -> Categorical:
        _finite(self.logits)
        return Categorical(self.probs())

    def log_prob(self, a):
        return self.log_probs()[np.asarray(a)]

    def score_raw(self, a):
        idx = np.atleast_1d(np.asarray(a))
        out = np.tile(-self.probs(), (idx.size, 1))
        out[np.arange(idx.size), idx] += 1.0
        return out

    def kl_grad(self, old: "SoftmaxPolicy", direction: str) -> np.ndarray:
        p = self.probs()
        if direction == "reverse":
            diff = self.log_probs() - old.log_probs()
            return p * (diff - np.dot(p, diff))
        return p - old.probs()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "theta": self.logits.tolist()}


PolicyParams = GaussianPolicy | BetaPolicy | SoftmaxPolicy


def realize(params: PolicyParams):
    return params.realize()


def score_raw(params: PolicyParams, a):
    return params.score_raw(a)


def kl_between(params: PolicyParams, old: PolicyParams, direction: str) -> float:
    """Exact KL(old || params) for ``forward``, KL(params || old) for ``reverse``."""
    if direction == "forward":
        return kl(old.realize(), params.realize())
    if direction == "reverse":
        return kl(params.realize(), old.realize())
    raise ValueError(f"unknown KL direction {direction!r}")


def kl_grad(params: PolicyParams, old: PolicyParams, direction: str) -> np.ndarray:
    """Gradient of :func:`kl_between` in the raw parameters of ``params``."""
    if direction not in ("forward", "reverse"):
        raise ValueError(f"unknown KL direction {direction!r}")
    return params.kl_grad(old, direction)


def sample_actions(params: PolicyParams, rng: RngStream, n: int):
    return params.realize().sample(rng, n)


def init(kind: str, *, lo: float | None = None, hi: float | None = None,
         n_actions: int | None = None) -> PolicyParams:
    """Standard initial policies: ``gaussian_standard``, ``beta_near_uniform``, ``softmax_uniform``."""
    if kind == "gaussian_standard":
        return GaussianPolicy(0.0, 0.0)
    if kind == "beta_near_uniform":
        if lo is None or hi is None or not lo < hi:
            raise InvalidParameterError("beta_near_uniform needs bounds with lo < hi")
        return BetaPolicy(NEAR_UNIFORM_RAW, NEAR_UNIFORM_RAW, float(lo), float(hi))
    if kind == "softmax_uniform":
        if not n_actions or n_actions < 1:
            raise InvalidParameterError("softmax_uniform needs n_actions >= 1")
        return SoftmaxPolicy(np.zeros(n_actions))
    raise InvalidParameterError(f"unknown policy init {kind!r}")


def from_dict(doc: dict) -> PolicyParams:
    kind, theta = doc["kind"], doc["theta"]
    if kind == "gaussian":
        return GaussianPolicy(float(theta[0]), float(theta[1]))
    if kind == "beta":
        return BetaPolicy(float(theta[0]), float(theta[1]), float(doc["lo"]), float(doc["hi"]))
    if kind == "softmax":
        return SoftmaxPolicy(np.asarray(theta, dtype=np.float64))
    raise InvalidParameterError(f"unknown policy kind {kind!r}")


@dataclass(frozen=True, eq=False)
class PolicySnapshot:
    """Frozen old policy plus the log-probabilities it assigned to the batch actions."""

    params: PolicyParams
    old_log_probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        lp = np.array(self.old_log_probs, dtype=np.float64)
        lp.setflags(write=False)
        object.__setattr__(self, "old_log_probs", lp)

    @classmethod
    def take(cls, params: PolicyParams, actions) -> "PolicySnapshot":
        return cls(params, params.log_prob(actions))
