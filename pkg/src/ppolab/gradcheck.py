"""Analytic surrogate gradients against central finite differences.

Each cell is one (surrogate, policy family) pair checked on randomized
configurations: a random old policy, a nearby new policy, a small batch drawn
from the old one, and standard-normal advantages.  Clip configurations whose
finite-difference stencil flips a mask entry sit on a kink and are excluded
(and counted).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import BetaPolicy, GaussianPolicy, PolicySnapshot, SoftmaxPolicy
from .rng import RngStream
from .surrogate import (
    Clip, ForwardKL, ReverseKL, SampleBatch, Unregularized, clip_active_mask, fd_gradient,
    log_ratio, objective_gradient,
)

TOLERANCE = 1e-4
FD_STEP = 1e-5
FAMILIES = ("gaussian", "beta", "softmax")
BATCH = 16


@dataclass
class CellResult:
    surrogate: str
    family: str
    checked: int
    excluded: int
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error <= TOLERANCE


def random_case(family: str, rng: RngStream):
    """(new params, snapshot, batch) with the new policy a small step from the old."""
    if family == "gaussian":
        old = GaussianPolicy(float(rng.uniform() * 2 - 1), float(rng.uniform() * 1.5 - 1))
    elif family == "beta":
        old = BetaPolicy(float(rng.uniform() * 4 - 2), float(rng.uniform() * 4 - 2), -1.0, 2.0)
    else:
        k = 3 + int(rng.integers(4))
        old = SoftmaxPolicy(rng.standard_normal(k))
    new = old.with_theta(old.theta + 0.15 * rng.standard_normal(old.theta.size))
    actions = old.realize().sample(rng, BATCH)
    snap = PolicySnapshot.take(old, actions)
    batch = SampleBatch(actions, snap.old_log_probs, np.zeros(BATCH), rng.standard_normal(BATCH))
    return new, snap, batch


def random_spec(kind: str, rng: RngStream, estimator: str = "sample"):
    if kind == "clip":
        return Clip(0.1 + 0.2 * float(rng.uniform()))
    if kind == "fkl":
        return ForwardKL(0.5 + 4.0 * float(rng.uniform()), estimator)
    if kind == "rkl":
        return ReverseKL(0.5 + 4.0 * float(rng.uniform()), estimator)
    return Unregularized()


def stencil_crosses_kink(spec, params, batch, h: float) -> bool:
    """True when some clip mask entry changes inside the finite-difference stencil."""
    if not isinstance(spec, Clip):
        return False
    theta = params.theta
    base = clip_active_mask(spec, np.exp(log_ratio(params, batch)), batch.advantages)
    for i in range(theta.size):
        for sgn in (1.0, -1.0):
            e = np.zeros_like(theta)
            e[i] = sgn * h
            r = np.exp(log_ratio(params.with_theta(theta + e), batch))
            if np.any(clip_active_mask(spec, r, batch.advantages) != base):
                return True
    return False


def relative_error(analytic, numeric) -> float:
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-6)
    return float(np.max(np.abs(analytic - numeric))) / scale


def check_cell(kind: str, family: str, n_configs: int = 100, seed: int = 0,
               estimator: str = "sample", gradient_fn=objective_gradient, h: float = FD_STEP) -> CellResult:
    rng = RngStream(seed)
    checked = excluded = 0
    worst = 0.0
    while checked < n_configs:
        spec = random_spec(kind, rng, estimator)
        params, snap, batch = random_case(family, rng)
        if stencil_crosses_kink(spec, params, batch, h):
            excluded += 1
            if excluded > 10 * n_configs:
                break
            continue
        g = gradient_fn(spec, params, snap, batch)
        fd = fd_gradient(spec, params, snap, batch, h)
        worst = max(worst, relative_error(g, fd))
        checked += 1
    label = kind if estimator == "sample" or kind in ("clip", "none") else f"{kind}:{estimator}"
    return CellResult(label, family, checked, excluded, worst)


def run_suite(n_configs: int = 100, seed: int = 0, gradient_fn=objective_gradient,
              include_analytic: bool = True) -> list[CellResult]:
    cells = [(k, f, "sample") for k in ("none", "clip", "fkl", "rkl") for f in FAMILIES]
    if include_analytic:
        cells += [(k, f, "analytic") for k in ("fkl", "rkl") for f in FAMILIES]
    return [check_cell(k, f, n_configs, seed + i, est, gradient_fn)
            for i, (k, f, est) in enumerate(cells)]
