"""Seeded random streams and the samplers used throughout the lab.

Every draw goes through :class:`RngStream`, which wraps numpy's PCG64 bit
generator and converts its raw 64-bit outputs itself.  Normal, Gamma, Beta and
categorical variates are produced here from those uniforms (Box-Muller,
Marsaglia-Tsang, inverse CDF), so a seed fixes the whole experiment.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
BETA_CLAMP = 1e-8


class InvalidParameterError(ValueError):
    """A sampler or distribution received parameters outside its domain."""


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, run_index: int) -> int:
    """Seed for run ``run_index`` of a sweep; a pure function of both inputs."""
    return splitmix64(splitmix64(master_seed & MASK64) ^ (run_index & MASK64))


class RngStream:
    """Single-owner deterministic random stream.

    >>> a, b = RngStream(7), RngStream(7)
    >>> bool(np.all(a.uniform(5) == b.uniform(5)))
    True
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise InvalidParameterError("seed must be a non-negative integer")
        self.seed = int(seed) & MASK64
        self._bits = np.random.PCG64(self.seed)

    def spawn(self, run_index: int) -> "RngStream":
        return RngStream(derive_seed(self.seed, run_index))

    # -- uniforms -----------------------------------------------------------

    def uniform(self, size=None):
        """Uniform variates on [0, 1) with 53 bits of resolution."""
        n = 1 if size is None else int(np.prod(size))
        raw = self._bits.random_raw(n)
        out = (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def integers(self, n: int, size=None):
        """Integers in [0, n) by floor of a uniform."""
        u = np.atleast_1d(self.uniform(1 if size is None else size))
        idx = np.minimum((u * n).astype(np.int64), n - 1)
        return int(idx[0]) if size is None else idx

    def permutation(self, n: int) -> np.ndarray:
        # argsort of uniforms is a uniform permutation (ties have probability ~2^-53)
        return np.argsort(self.uniform(n), kind="stable")

    # -- continuous ---------------------------------------------------------

    def standard_normal(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        radius = np.sqrt(-2.0 * np.log1p(-u1))
        angle = 2.0 * np.pi * u2
        z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:n]
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def normal(self, mu: float, sigma: float, size=None):
        if not sigma > 0:
            raise InvalidParameterError(f"normal sigma must be positive, got {sigma}")
        return mu + sigma * self.standard_normal(size)

    def gamma(self, shape: float, size=None):
        """Gamma(shape, 1) via the Marsaglia-Tsang squeeze; requires shape >= 1."""
        if not shape >= 1.0:
            raise InvalidParameterError(f"gamma shape must be >= 1, got {shape}")
        n = 1 if size is None else int(np.prod(size))
        d = shape - 1.0 / 3.0
        c = 1.0 / np.sqrt(9.0 * d)
        out = np.empty(n)
        pending = np.arange(n)
        while pending.size:
            k = pending.size
            x = self.standard_normal(k)
            u = self.uniform(k)
            v = (1.0 + c * x) ** 3
            ok = v > 0
            logv = np.log(np.where(ok, v, 1.0))
            accept = ok & (
                (u < 1.0 - 0.0331 * x**4)
                | (np.log(np.maximum(u, 1e-300)) < 0.5 * x * x + d * (1.0 - v + logv))
            )
            out[pending[accept]] = d * v[accept]
            pending = pending[~accept]
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def beta(self, alpha: float, beta: float, size=None):
        """Beta(alpha, beta) draws as X/(X+Y) of Gamma draws, clamped away from 0 and 1."""
        if not (alpha >= 1.0 and beta >= 1.0):
            raise InvalidParameterError(f"beta shapes must be >= 1, got ({alpha}, {beta})")
        x = np.asarray(self.gamma(alpha, size))
        y = np.asarray(self.gamma(beta, size))
        out = np.clip(x / (x + y), BETA_CLAMP, 1.0 - BETA_CLAMP)
        return float(out) if size is None else out

    # -- discrete -----------------------------------------------------------

    def categorical(self, probs, size=None):
        """Indices drawn with probability ``probs`` by inverse CDF."""
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0 or np.any(~np.isfinite(p)) or np.any(p < 0):
            raise InvalidParameterError("probabilities must be a non-negative vector")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidParameterError(f"probabilities sum to {p.sum()}, not 1")
        cdf = np.cumsum(p)
        u = np.atleast_1d(self.uniform(1 if size is None else size)) * cdf[-1]
        idx = np.searchsorted(cdf, u, side="right")
        # guard against u landing on the final cumulative value
        last = int(np.flatnonzero(p > 0)[-1])
        idx = np.minimum(idx, last)
        if size is None:
            return int(idx[0])
        return idx.reshape(size)
