"""Gaussian, scaled Beta and categorical action distributions.

Each distribution exposes ``log_prob``, ``score`` (gradient of the log density
in the distribution's own parameters), ``sample`` and, through :func:`kl`,
closed-form KL divergences.  ``log_prob`` and ``score`` accept scalars or
arrays of actions; ``score`` returns one row per action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sp

from .rng import InvalidParameterError, RngStream
from .special import digamma, log_beta_fn

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Gaussian1D:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.sigma > 0 and np.isfinite(self.sigma)):
            raise InvalidParameterError(f"invalid Gaussian ({self.mu}, {self.sigma})")

    @property
    def n_params(self) -> int:
        return 2

    def log_prob(self, a):
        z = (np.asarray(a, dtype=np.float64) - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - 0.5 * LOG_2PI

    def score(self, a):
        """Gradient in (mu, sigma): ((a-mu)/s^2, ((a-mu)^2 - s^2)/s^3)."""
        d = np.atleast_1d(np.asarray(a, dtype=np.float64)) - self.mu
        s2 = self.sigma * self.sigma
        return np.stack([d / s2, (d * d - s2) / (s2 * self.sigma)], axis=-1)

    def sample(self, rng: RngStream, size=None):
        return rng.normal(self.mu, self.sigma, size)

    def mean(self) -> float:
        return self.mu

    def mode(self) -> float:
        return self.mu

    def ppf(self, q):
        return self.mu + self.sigma * sp.ndtri(q)


@dataclass(frozen=True)
class ScaledBeta:
    """Beta(alpha, beta) stretched onto the interval [lo, hi]."""

    alpha: float
    beta: float
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (self.alpha >= 1.0 and self.beta >= 1.0):
            raise InvalidParameterError(f"Beta shapes must be >= 1, got ({self.alpha}, {self.beta})")
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise InvalidParameterError("Beta shapes must be finite")
        if not self.lo < self.hi:
            raise InvalidParameterError(f"Beta bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def n_params(self) -> int:
        return 2

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_unit(self, a):
        return (np.asarray(a, dtype=np.float64) - self.lo) / self.width

    def log_prob(self, a):
        x = self.to_unit(a)
        inside = (x >= 0) & (x <= 1)
        xs = np.clip(x, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            # xlog1py / xlogy give 0 * log 0 = 0 when a shape equals 1
            body = sp.xlogy(self.alpha - 1.0, xs) + sp.xlog1py(self.beta - 1.0, -xs)
        out = body - log_beta_fn(self.alpha, self.beta) - math.log(self.width)
        return np.where(inside, out, -np.inf)

    def score(self, a):
        """Gradient in (alpha, beta); the support boundary is an error unless the shape is 1."""
        x = np.atleast_1d(self.to_unit(a))
        if np.any((x <= 0) | (x >= 1)):
            raise InvalidParameterError("Beta score undefined on or outside the support boundary")
        common = digamma(self.alpha + self.beta)
        return np.stack([
            np.log(x) - digamma(self.alpha) + common,
            np.log1p(-x) - digamma(self.beta) + common,
        ], axis=-1)

    def sample(self, rng: RngStream, size=None):
        return self.lo + self.width * rng.beta(self.alpha, self.beta, size)

    def mean(self) -> float:
        return self.lo + self.width * self.alpha / (self.alpha + self.beta)

    def mode(self) -> float:
        s = self.alpha + self.beta - 2.0
        if s <= 0:
            return self.lo + 0.5 * self.width
        return self.lo + self.width * (self.alpha - 1.0) / s

    def ppf(self, q):
        return self.lo + self.width * sp.betaincinv(self.alpha, self.beta, q)


@dataclass(frozen=True, eq=False)
class Categorical:
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0 or np.any(~np.isfinite(p)) or np.any(p < 0):
            raise InvalidParameterError("categorical probabilities must be a non-negative vector")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidParameterError(f"categorical probabilities sum to {p.sum()}")
        object.__setattr__(self, "probs", p)

    @property
    def n_params(self) -> int:
        return self.probs.size

    def _index(self, a):
        idx = np.asarray(a)
        if not np.issubdtype(idx.dtype, np.integer) or np.any((idx < 0) | (idx >= self.probs.size)):
            raise InvalidParameterError(f"invalid action index {a!r}")
        return idx

    def log_prob(self, a):
        with np.errstate(divide="ignore"):
            return np.log(self.probs[self._index(a)])

    def score(self, a):
        """Gradient in the probability vector itself (1/p on the taken action)."""
        idx = np.atleast_1d(self._index(a))
        out = np.zeros((idx.size, self.probs.size))
        out[np.arange(idx.size), idx] = 1.0 / self.probs[idx]
        return out

    def sample(self, rng: RngStream, size=None):
        return rng.categorical(self.probs, size)

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def mode(self) -> int:
        return int(np.argmax(self.probs))


def log_prob(dist, a):
    return dist.log_prob(a)


def score(dist, a):
    return dist.score(a)


def kl(p, q, direction: str = "forward") -> float:
    """Exact KL divergence.

    ``direction="forward"`` returns KL(p || q); ``"reverse"`` returns KL(q || p).
    """
    if direction == "reverse":
        p, q = q, p
    elif direction != "forward":
        raise ValueError(f"unknown KL direction {direction!r}")
    if type(p) is not type(q):
        raise InvalidParameterError(f"KL between different families {type(p).__name__}/{type(q).__name__}")
    if isinstance(p, Gaussian1D):
        return (math.log(q.sigma / p.sigma)
                + (p.sigma**2 + (p.mu - q.mu) ** 2) / (2.0 * q.sigma**2) - 0.5)
    if isinstance(p, ScaledBeta):
        if p.lo != q.lo or p.hi != q.hi:
            raise InvalidParameterError("KL between scaled Betas requires identical bounds")
        a1, b1, a2, b2 = p.alpha, p.beta, q.alpha, q.beta
        val = (log_beta_fn(a2, b2) - log_beta_fn(a1, b1)
               + (a1 - a2) * digamma(a1) + (b1 - b2) * digamma(b1)
               + (a2 - a1 + b2 - b1) * digamma(a1 + b1))
        return max(float(val), 0.0)
    if isinstance(p, Categorical):
        if p.probs.size != q.probs.size:
            raise InvalidParameterError("categoricals over different action sets")
        pp, qq = p.probs, q.probs
        mask = pp > 0
        if np.any(qq[mask] == 0):
            return math.inf
        return float(np.sum(pp[mask] * (np.log(pp[mask]) - np.log(qq[mask]))))
    raise InvalidParameterError(f"unsupported distribution {type(p).__name__}")
