"""Potential-outcome summaries from a fitted structural model.

Under initiation at ``a`` the cumulative hazard is

    Lambda_a(t) = Lambda_inf(t)                                   t < a
                = Lambda_inf(a) + sum_{a < u <= t} exp(X(a, u) @ beta) dLambda_inf(u)

so regimes agree exactly up to ``a``. ``a = inf`` is the never-initiated regime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .structural import StructuralFit

INF = float("inf")
CURVE_STEP = 0.5
INTERVAL_POINTS = 64
ENDPOINT_KINDS = ("survival_at", "mean", "median", "custom")


def _check_a(fit: StructuralFit, a: float):
    if np.isnan(a) or a < 0:
        raise ValueError(f"initiation time must be nonnegative, got {a}")
    if np.isfinite(a) and a > fit.t_max:
        raise ValueError(f"initiation time {a} exceeds t_max={fit.t_max}")


def _check_t(fit: StructuralFit, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > fit.t_max):
        raise ValueError(f"times must lie in [0, t_max={fit.t_max}]")
    return t


def cumulative_hazard(fit: StructuralFit, a: float, t):
    """``Lambda_a(t)`` for scalar ``a`` and array-like ``t``."""
    a = float(a)
    _check_a(fit, a)
    t = _check_t(fit, t)
    H = fit.baseline
    if not np.isfinite(a):
        return H(t)
    u = H.jump_times
    after = u > a
    ua = u[after]
    mult = np.exp(fit.design.evaluate(np.full(len(ua), a), ua) @ fit.beta)
    cum = np.concatenate([[0.0], np.cumsum(mult * H.jump_masses[after])])
    post = H(a) + cum[np.searchsorted(ua, t, side="right")]
    out = np.where(t < a, H(t), post)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    a: float
    grid: np.ndarray
    survival: np.ndarray
    source: str = ""

    def __post_init__(self):
        if np.any(np.diff(self.survival) > 0):
            raise AssertionError("survival curve is not nonincreasing")


def default_grid(fit: StructuralFit, step: float = CURVE_STEP) -> np.ndarray:
    g = np.arange(0.0, fit.t_max + step / 2, step)
    return g[g <= fit.t_max]


def survival_curve(fit: StructuralFit, a: float, grid=None, source: str = "") -> SurvivalCurve:
    grid = default_grid(fit) if grid is None else np.asarray(grid, dtype=float)
    surv = np.exp(-np.asarray(cumulative_hazard(fit, a, grid)))
    return SurvivalCurve(float(a), grid, surv, source)


def survival_at(fit: StructuralFit, a: float, t0: float) -> float:
    return float(np.exp(-cumulative_hazard(fit, a, t0)))


def mortality_at(fit: StructuralFit, a: float, t0: float) -> float:
    """``1 - S_a(t0)``."""
    return float(-np.expm1(-cumulative_hazard(fit, a, t0)))


def contrast(fit: StructuralFit, a: float, a_prime: float, t0: float):
    """Return ``(F_a(t0) - F_a'(t0), S_a(t0) / S_a'(t0))``."""
    if a == a_prime:
        raise ValueError("contrast needs two different initiation times")
    diff = mortality_at(fit, a, t0) - mortality_at(fit, a_prime, t0)
    ratio = survival_at(fit, a, t0) / survival_at(fit, a_prime, t0)
    return diff, ratio


def interval_mortality(fit: StructuralFit, t1: float, t2: float, t0: float,
                       points: int = INTERVAL_POINTS, normalized: bool = True) -> float:
    """Mean of ``F_a(t0)`` over ``a ~ Uniform[t1, t2)`` by the midpoint rule.

    With ``normalized=False`` the integral is taken against the uniform law on
    ``[0, t_max]`` instead, i.e. multiplied by ``(t2 - t1) / t_max``.
    """
    if not 0 <= t1 < t2 <= fit.t_max:
        raise ValueError("interval must satisfy 0 <= t1 < t2 <= t_max")
    h = (t2 - t1) / points
    mids = t1 + h * (np.arange(points) + 0.5)
    val = float(np.mean([mortality_at(fit, a, t0) for a in mids]))
    return val if normalized else val * (t2 - t1) / fit.t_max


@dataclass(frozen=True)
class Endpoint:
    """Scalar functional ``theta_a`` of a regime's survival law (larger is better).

    ``survival_at`` is ``S_a(t0)``; ``mean`` is the mean survival restricted to
    ``t0`` (default ``t_max``); ``median`` is the median survival time (inf if
    not reached); ``custom`` calls ``func(S)`` with ``S`` a vectorized
    function of time.
    """

    kind: str = "survival_at"
    t0: float | None = None
    func: Callable | None = None

    def __post_init__(self):
        if self.kind not in ENDPOINT_KINDS:
            raise ValueError(f"unknown endpoint kind {self.kind!r}")
        if self.kind == "survival_at" and self.t0 is None:
            raise ValueError("survival_at needs t0")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom endpoint needs func")


def _restricted_mean(fit, a, tau):
    H = fit.baseline
    knots = H.jump_times[H.jump_times < tau]
    edges = np.concatenate([[0.0], knots, [tau]])
    surv = np.exp(-np.asarray(cumulative_hazard(fit, a, edges[:-1])))
    return float(np.sum(surv * np.diff(edges)))


def _median(fit, a):
    H = fit.baseline
    times = np.concatenate([[0.0], H.jump_times[H.jump_times <= fit.t_max]])
    surv = np.exp(-np.asarray(cumulative_hazard(fit, a, times)))
    hit = np.flatnonzero(surv <= 0.5)
    return float(times[hit[0]]) if len(hit) else INF


def theta(fit: StructuralFit, a: float, endpoint: Endpoint) -> float:
    if endpoint.kind == "survival_at":
        if endpoint.t0 > fit.t_max:
            raise ValueError("t0 exceeds t_max")
        return survival_at(fit, a, endpoint.t0)
    if endpoint.kind == "mean":
        tau = fit.t_max if endpoint.t0 is None else endpoint.t0
        if tau > fit.t_max:
            raise ValueError("restricted mean beyond t_max is not defined")
        return _restricted_mean(fit, a, tau)
    if endpoint.kind == "median":
        return _median(fit, a)
    return float(endpoint.func(lambda t: np.exp(-np.asarray(cumulative_hazard(fit, a, t)))))


@dataclass(frozen=True, eq=False)
class OptimalInitiation:
    a_opt: float
    theta_opt: float
    grid: np.ndarray
    thetas: np.ndarray


def optimal_initiation(fit: StructuralFit, endpoint: Endpoint, grid=None) -> OptimalInitiation:
    """Grid argmax of ``theta_a``; ties go to the smallest ``a``.

    The grid is restricted to the observed initiation support ``[0, max A]``.
    """
    grid = default_grid(fit) if grid is None else np.asarray(grid, dtype=float).reshape(-1)
    if len(grid) == 0:
        raise ValueError("grid is empty")
    if np.any(grid < 0) or np.any(grid > fit.t_max):
        raise ValueError("grid must lie within [0, t_max]")
    grid = np.unique(grid)
    grid = grid[grid <= fit.a_support]
    if len(grid) == 0:
        raise ValueError("no grid point lies within the observed initiation support")
    thetas = np.array([theta(fit, a, endpoint) for a in grid])
    j = int(np.argmax(thetas))
    return OptimalInitiation(float(grid[j]), float(thetas[j]), grid, thetas)
