"""Multiplicative weights, information projections, and the regret ledger.

Everything here works on explicit probability vectors over a finite domain.
Families are either the full simplex or a floor-constrained simplex
{p : p_i >= min_prob}.  Both are convex, closed, and closed under mixture.

The link to PPO: one exact reverse-KL PPO step with coefficient beta on a
softmax policy lands on the multiplicative-weights update with eta = 1/beta.
``exact_rkl_equals_mw`` checks that numerically, and ``fisher_matrix`` and
``kl_taylor_check`` cover the second-order picture behind it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special as sp

from .distributions import kl as dist_kl
from .policy import GaussianPolicy, SoftmaxPolicy
from .rng import InvalidParameterError, RngStream

SIMPLEX_TOL = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, message, grad_norm):
        super().__init__(f"{message} (final gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


def as_distribution(p, tol: float = SIMPLEX_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidParameterError("distribution must be a nonempty vector")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise InvalidParameterError("not a probability vector")
    return p


def kl_div(p, q) -> float:
    """KL(p || q) for probability vectors; inf when p puts mass where q has none."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any((p > 0) & (q <= 0)):
        return float("inf")
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


# -- families -----------------------------------------------------------------

@dataclass(frozen=True)
class FullSimplex:
    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= -tol) and abs(p.sum() - 1.0) <= 1e-9)

    def vertices(self, n: int) -> np.ndarray:
        return np.eye(n)

    def check(self, n: int):
        pass


@dataclass(frozen=True)
class FloorSimplex:
    """Distributions with every coordinate at least ``min_prob``."""

    min_prob: float

    def __post_init__(self):
        if not self.min_prob >= 0:
            raise InvalidParameterError("floor must be non-negative")

    def check(self, n: int):
        if self.min_prob * n > 1.0 + 1e-15:
            raise InvalidParameterError(f"floor {self.min_prob} infeasible on {n} points")

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= self.min_prob - tol) and abs(p.sum() - 1.0) <= 1e-9)

    def vertices(self, n: int) -> np.ndarray:
        self.check(n)
        e = self.min_prob
        return np.full((n, n), e) + np.eye(n) * (1.0 - n * e)


FamilySpec = FullSimplex | FloorSimplex


# -- multiplicative weights ---------------------------------------------------

def mw_update(pi, payoffs, eta: float) -> np.ndarray:
    """pi * exp(eta * m), renormalized in log space."""
    pi = as_distribution(pi, tol=1e-9)
    m = np.asarray(payoffs, dtype=np.float64)
    if m.shape != pi.shape:
        raise InvalidParameterError("payoffs must match the distribution's shape")
    rho = float(np.max(np.abs(m))) if m.size else 0.0
    if not eta > 0 or (rho > 0 and eta >= 1.0 / rho):
        raise InvalidParameterError(f"step size must lie in (0, 1/max|m|) = (0, {1 / rho if rho else np.inf:g})")
    with np.errstate(divide="ignore"):
        logits = np.log(pi) + eta * m
    return np.exp(logits - sp.logsumexp(logits))


# -- information projection ---------------------------------------------------

def i_projection(q, family: FamilySpec) -> np.ndarray:
    """argmin over the family of KL(p || q).

    For the floor-constrained simplex the minimizer has the form
    p_i = max(floor, c q_i).  Coordinates are pinned at the floor one sweep at
    a time, with the rest rescaled to fill the leftover mass, until nothing
    new drops below the floor.
    """
    q = as_distribution(q, tol=1e-9)
    n = q.size
    family.check(n)
    if isinstance(family, FullSimplex):
        return q.copy()
    e = family.min_prob
    if e == 0:
        return q.copy()
    if np.any(q <= 0):
        raise InvalidParameterError("every member of the family has infinite divergence from q")
    pinned = np.zeros(n, dtype=bool)
    while True:
        free_mass = 1.0 - e * pinned.sum()
        p = np.where(pinned, e, q * free_mass / q[~pinned].sum())
        newly = (~pinned) & (p < e)
        if not newly.any():
            return p
        pinned |= newly


def simplex_grid(n: int, resolution: float, family: FamilySpec | None = None) -> np.ndarray:
    """All points of the simplex with coordinates on a ``resolution`` lattice (n <= 3)."""
    if n > 3:
        raise InvalidParameterError("grid search is only supported for |X| <= 3")
    steps = int(round(1.0 / resolution))
    if n == 1:
        pts = np.ones((1, 1))
    elif n == 2:
        i = np.arange(steps + 1)
        pts = np.stack([i, steps - i], axis=1) / steps
    else:
        i, j = np.meshgrid(np.arange(steps + 1), np.arange(steps + 1), indexing="ij")
        keep = i + j <= steps
        i, j = i[keep], j[keep]
        pts = np.stack([i, j, steps - i - j], axis=1) / steps
    if family is not None and isinstance(family, FloorSimplex):
        pts = pts[np.all(pts >= family.min_prob - 1e-12, axis=1)]
    return pts


def _kl_rows(P, q):
    """KL(P[k] || q) for every row of P."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = sp.xlogy(P, P) - sp.xlogy(P, q[None, :])
    return terms.sum(axis=1)


def grid_projection(q, family: FamilySpec, resolution: float = 1e-3) -> np.ndarray:
    """Brute-force projection over a lattice; the oracle for ``i_projection``."""
    q = as_distribution(q, tol=1e-9)
    pts = simplex_grid(q.size, resolution, family)
    if not len(pts):
        raise InvalidParameterError("family has no grid points at this resolution")
    return pts[int(np.argmin(_kl_rows(pts, q)))]


def measure_alpha(p_exact, p_approx, family: FamilySpec, q=None, resolution: float = 1e-3) -> float:
    """Smallest alpha with KL(p||p_approx) <= KL(p||p_exact) + alpha over the family.

    The gap sum_i p_i log(p_exact_i / p_approx_i) is linear in p.  It is
    maximized over the family's vertices, plus the lattice when |X| <= 3.
    ``q`` is accepted for symmetry with the definition and is not needed.
    """
    p_exact = as_distribution(p_exact, tol=1e-9)
    p_approx = as_distribution(p_approx, tol=1e-9)
    n = p_exact.size
    cand = family.vertices(n)
    if n <= 3:
        cand = np.vstack([cand, simplex_grid(n, resolution, family)])
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.log(p_exact) - np.log(p_approx)
    gaps = np.where(cand > 0, cand * w[None, :], 0.0).sum(axis=1)
    return max(0.0, float(np.max(gaps)))


def bregman_check(p, q, family: FamilySpec, projection=None, tol: float = 1e-6) -> dict:
    """KL(p || proj q) + KL(proj q || q) <= KL(p || q) for p in the family."""
    p = as_distribution(p, tol=1e-9)
    if not family.contains(p):
        raise InvalidParameterError("p must belong to the family")
    proj = i_projection(q, family) if projection is None else np.asarray(projection)
    lhs = kl_div(p, proj) + kl_div(proj, q)
    rhs = kl_div(p, q)
    return {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "holds": bool(lhs <= rhs + tol)}


# -- regret ledger ------------------------------------------------------------

@dataclass
class RegretLedger:
    """Per-iteration terms of the projected-MW regret inequality."""

    eta: np.ndarray
    rho: np.ndarray
    e_pi_m: np.ndarray
    e_star_m: np.ndarray
    e_pi_m2: np.ndarray
    alpha: np.ndarray
    kl0: float
    n_points: int | None = None
    policies: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        for name in ("eta", "rho", "e_pi_m", "e_star_m", "e_pi_m2", "alpha"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        k = self.eta.size
        if any(getattr(self, n).size != k for n in ("rho", "e_pi_m", "e_star_m", "e_pi_m2", "alpha")):
            raise InvalidParameterError("ledger columns must have equal length")
        if not np.all(np.isfinite(np.concatenate([self.e_pi_m, self.e_star_m, self.e_pi_m2]))):
            raise InvalidParameterError("ledger expectations must be finite")

    @property
    def K(self) -> int:
        return int(self.eta.size)

    def prefix(self, k: int) -> "RegretLedger":
        return RegretLedger(self.eta[:k], self.rho[:k], self.e_pi_m[:k], self.e_star_m[:k],
                            self.e_pi_m2[:k], self.alpha[:k], self.kl0, self.n_points)


def regret_check(ledger: RegretLedger) -> dict:
    """Both sides of the general bound, plus the constant-step simplified form.

    lhs = sum eta_k (E_star[m_k] - E_pi_k[m_k])
    rhs = KL(star || pi_0) + sum alpha_k + sum eta_k^2 E_pi_k[m_k^2]

    ``rhs_simplified`` bounds the average gap lhs / (eta K) by
    eta rho^2 + mean(alpha) / eta + KL / (eta K); it is None when the step
    size varies.
    """
    eta, rho = ledger.eta, ledger.rho
    bad = (eta <= 0) | ((rho > 0) & (eta >= 1.0 / np.where(rho > 0, rho, 1.0)))
    lhs = float(np.sum(eta * (ledger.e_star_m - ledger.e_pi_m)))
    rhs = float(ledger.kl0 + ledger.alpha.sum() + np.sum(eta ** 2 * ledger.e_pi_m2))
    out = {"lhs": lhs, "rhs_general": rhs, "rhs_simplified": None, "avg_gap": None,
           "precondition_ok": not bool(bad.any()), "holds": None}
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        out["violation"] = f"step size {eta[k]:g} not in (0, 1/rho) with rho = {rho[k]:g} at k = {k}"
        return out
    out["holds"] = bool(lhs <= rhs + 1e-12)
    K = ledger.K
    if K and np.all(eta == eta[0]):
        e0, r = float(eta[0]), float(rho.max())
        out["avg_gap"] = lhs / (e0 * K)
        out["rhs_simplified"] = e0 * r * r + float(ledger.alpha.mean()) / e0 + ledger.kl0 / (e0 * K)
    return out


def prefix_table(ledger: RegretLedger) -> list[dict]:
    """(k, eta, lhs, rhs, holds) for every prefix 1..K."""
    gap = np.cumsum(ledger.eta * (ledger.e_star_m - ledger.e_pi_m))
    rhs = ledger.kl0 + np.cumsum(ledger.alpha) + np.cumsum(ledger.eta ** 2 * ledger.e_pi_m2)
    return [{"k": k + 1, "eta": float(ledger.eta[k]), "lhs": float(gap[k]), "rhs": float(rhs[k]),
             "holds": bool(gap[k] <= rhs[k] + 1e-12)} for k in range(ledger.K)]


def discrete_bound(ledger: RegretLedger) -> dict:
    """Average advantage gap vs eta rho^2 + log|A| / (eta K), uniform start, exact MW."""
    eta, K = float(ledger.eta[0]), ledger.K
    rho = float(ledger.rho.max())
    avg = float(np.sum(ledger.eta * (ledger.e_star_m - ledger.e_pi_m))) / (eta * K)
    bound = eta * rho * rho + np.log(ledger.n_points) / (eta * K)
    return {"avg_gap": avg, "bound": float(bound), "holds": bool(avg <= bound + 1e-12)}


_COLS = ("eta", "rho", "e_pi_m", "e_star_m", "e_pi_m2", "alpha")


def _ledger_row(pi, m, star):
    return float(np.max(np.abs(m))), float(np.dot(pi, m)), float(m[star]), float(np.dot(pi, m * m))


def mw_ledger(payoffs, eta: float, pi0, star: int) -> RegretLedger:
    """Exact MW over a fixed payoff sequence; pi* is the point mass on ``star``."""
    pi = as_distribution(pi0, tol=1e-9)
    cols = {k: [] for k in _COLS}
    policies = [pi]
    for m in payoffs:
        m = np.asarray(m, dtype=np.float64)
        for key, v in zip(_COLS, (eta, *_ledger_row(pi, m, star), 0.0)):
            cols[key].append(v)
        pi = mw_update(pi, m, eta)
        policies.append(pi)
    with np.errstate(divide="ignore"):
        kl0 = -float(np.log(policies[0][star]))
    return RegretLedger(**cols, kl0=kl0, n_points=pi.size, policies=policies)


def exact_mw_ledger(means, K: int, eta: float = 0.5, pi0=None) -> RegretLedger:
    """Exact MW with full-information advantage payoffs m_k = means - E_pi_k[means]."""
    means = np.asarray(means, dtype=np.float64)
    n = means.size
    pi = np.full(n, 1.0 / n) if pi0 is None else as_distribution(pi0, tol=1e-9)
    star = int(np.argmax(means))
    cols = {k: [] for k in _COLS}
    policies = [pi]
    for _ in range(K):
        m = means - np.dot(pi, means)
        for key, v in zip(_COLS, (eta, *_ledger_row(pi, m, star), 0.0)):
            cols[key].append(v)
        pi = mw_update(pi, m, eta)
        policies.append(pi)
    kl0 = -float(np.log(policies[0][star]))
    return RegretLedger(**cols, kl0=kl0, n_points=n, policies=policies)


def policy_ledger(means, policies, eta: float) -> RegretLedger:
    """Ledger for an arbitrary policy sequence, with alpha_k measured against exact MW targets."""
    means = np.asarray(means, dtype=np.float64)
    star = int(np.argmax(means))
    cols = {k: [] for k in _COLS}
    family = FullSimplex()
    for pi, nxt in zip(policies[:-1], policies[1:]):
        m = means - np.dot(pi, means)
        target = mw_update(pi, m, eta)
        alpha = measure_alpha(target, nxt, family)
        for key, v in zip(_COLS, (eta, *_ledger_row(pi, m, star), alpha)):
            cols[key].append(v)
    kl0 = -np.log(policies[0][star])
    return RegretLedger(**cols, kl0=float(kl0), n_points=means.size, policies=list(policies))


# -- Fisher information and the KL Taylor expansion --------------------------

def fisher_matrix(params, n_samples: int | None = None, rng: RngStream | None = None,
                  sampling: str = "stratified") -> np.ndarray:
    """E[score score^T] in raw parameters; exact for softmax, Monte Carlo otherwise.

    ``sampling="stratified"`` draws one uniform in each of n equal-probability
    strata and maps it through the quantile function.  It is still unbiased,
    but its error falls much faster than the 1/sqrt(n) of ``"iid"`` draws.
    """
    if isinstance(params, SoftmaxPolicy):
        p = params.probs()
        return np.diag(p) - np.outer(p, p)
    if not n_samples or n_samples < 1:
        raise InvalidParameterError("Monte Carlo Fisher needs n_samples >= 1")
    rng = rng if rng is not None else RngStream(0)
    dist = params.realize()
    if sampling == "stratified":
        u = (np.arange(n_samples) + rng.uniform(n_samples)) / n_samples
        a = dist.ppf(u)
    elif sampling == "iid":
        a = dist.sample(rng, n_samples)
    else:
        raise InvalidParameterError(f"unknown sampling scheme {sampling!r}")
    s = params.score_raw(a)
    return s.T @ s / n_samples


def gaussian_fisher(params: GaussianPolicy) -> np.ndarray:
    """Closed form for (mu_raw, log_sigma_raw): diag(1 / sigma^2, 2)."""
    return np.diag([np.exp(-2.0 * params.log_sigma_raw), 2.0])


def kl_taylor_check(params, delta, fisher=None, n_samples: int = 10 ** 6,
                    rng: RngStream | None = None, sampling: str = "stratified") -> dict:
    """Exact KLs in both directions against the quadratic form 0.5 d^T F d."""
    delta = np.asarray(delta, dtype=np.float64)
    moved = params.with_theta(params.theta + delta)
    old, new = params.realize(), moved.realize()
    F = fisher if fisher is not None else fisher_matrix(params, n_samples, rng, sampling)
    return {"kl_fwd": dist_kl(old, new), "kl_rev": dist_kl(new, old),
            "quad": float(0.5 * delta @ F @ delta)}


# -- exact reverse-KL PPO on softmax ------------------------------------------

def _rkl_objective(logits, log_q, adv, beta):
    log_pi = logits - sp.logsumexp(logits)
    pi = np.exp(log_pi)
    h = adv - beta * (log_pi - log_q)
    value = float(np.dot(pi, adv) - beta * np.dot(pi, log_pi - log_q))
    grad = pi * (h - np.dot(pi, h))
    return value, grad


def maximize_rkl_objective(params: SoftmaxPolicy, advantages, beta: float, tol: float = 1e-10,
                           max_iter: int = 100_000) -> SoftmaxPolicy:
    """Gradient ascent on E_pi[A] - beta KL(pi || pi_old), with exact sums over actions.

    Step sizes follow Barzilai-Borwein, safeguarded by a nonmonotone Armijo
    test against the best of the last few values.  The gradient scales with
    pi, so a fixed step crawls along low-probability coordinates.
    """
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.shape != params.logits.shape:
        raise InvalidParameterError("need one advantage per action")
    if not beta > 0:
        raise InvalidParameterError("beta must be positive")
    log_q = params.log_probs()
    theta = params.logits.copy()
    value, grad = _rkl_objective(theta, log_q, adv, beta)
    step = 1.0 / beta
    recent = [value]
    for _ in range(max_iter):
        gnorm2 = float(grad @ grad)
        if gnorm2 <= tol * tol:
            return SoftmaxPolicy(theta)
        ref = min(recent[-10:])
        # slack for values that agree to rounding near the optimum
        slack = 1e-14 * max(1.0, abs(value))
        while True:
            cand = theta + step * grad
            v, g = _rkl_objective(cand, log_q, adv, beta)
            if v >= ref + 1e-4 * step * gnorm2 - slack or step < 1e-14:
                break
            step *= 0.5
        s_vec, y_vec = cand - theta, grad - g
        theta, value, grad = cand, v, g
        recent.append(value)
        sy = float(s_vec @ y_vec)
        step = float(s_vec @ s_vec) / sy if sy > 0 else 2.0 * step
        step = min(max(step, 1e-10), 1e10)
    raise ConvergenceError("reverse-KL ascent did not converge", float(np.sqrt(grad @ grad)))


def exact_rkl_equals_mw(params: SoftmaxPolicy, advantages, beta: float, tol: float = 1e-10) -> dict:
    adv = np.asarray(advantages, dtype=np.float64)
    q = params.probs()
    rho = float(np.max(np.abs(adv)))
    if rho > 0 and 1.0 / beta >= 1.0 / rho:
        # the MW step-size condition is a regret hypothesis, not needed for the identity
        target = np.exp(np.log(q) + adv / beta - sp.logsumexp(np.log(q) + adv / beta))
    else:
        target = mw_update(q, adv, 1.0 / beta)
    optimized = maximize_rkl_objective(params, adv, beta, tol=tol).probs()
    return {"mw_target": target, "optimized": optimized,
            "linf_gap": float(np.max(np.abs(target - optimized)))}


def random_floor_instance(rng: RngStream, n: int):
    """Random (p, q, family) with p inside a floor-constrained family."""
    e = float(rng.uniform()) * 0.9 / n
    q = rng.uniform(n) + 1e-3
    q /= q.sum()
    raw = rng.uniform(n) + 1e-3
    p = e + (1.0 - n * e) * raw / raw.sum()
    return p, q, FloorSimplex(e)
