"""Stabilized inverse-probability weights for initiation and censoring.

For subject ``k``

* ``w1[k]``: marginal over conditional density mass of initiation at ``A_k``;
* ``W2_k(t) = S_A(t) / S_A(t | L_k)``, the same ratio for survival;
* ``Wc_k(t) = S_C(t) / S_C(t | A_k, L_k)`` for remaining uncensored.

Both ratios of survivals are computed as ``exp(Lambda_k(t) - H(t))``; the
density masses share the same baseline jump, so the time increment cancels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .coxfit import ConditionalHazard, FittedHazardModel, HazardSpec, censoring_events, risk_pairs
from .data import Dataset
from .errors import PositivityError
from .survcore import MarginalLaw, StepFunction, nelson_aalen

POSITIVITY_FLOOR = 1e-12
TRUNCATION_METHOD = "inverted_cdf"  # the empirical quantile, an observed weight


def unit_model(event: str) -> FittedHazardModel:
    """Covariate-free model with an empty baseline (no events observed)."""
    return FittedHazardModel(
        spec=HazardSpec(),
        event=event,
        coefficients=np.zeros(0),
        baseline_cumhaz=StepFunction.zero(),
        loglik=0.0,
        iterations=0,
        converged=True,
        score_norm=0.0,
        information=np.zeros((0, 0)),
        n_events=0,
    )


def initiation_marginal(ds: Dataset) -> MarginalLaw:
    return MarginalLaw(nelson_aalen(ds.a_star, ds.delta_a))


def censoring_marginal(ds: Dataset) -> MarginalLaw:
    return MarginalLaw(nelson_aalen(ds.t_star, censoring_events(ds)))


def _positivity(ds, k, t, what):
    raise PositivityError(f"positivity violation: subject {ds.ids[k]} at t={t:g} ({what} below {POSITIVITY_FLOOR:g})")


@dataclass(eq=False)
class Trajectories:
    """Survival-ratio weights ``exp(Lambda_k(t) - H(t))`` for every subject.

    ``horizon[k]`` is the last time at which subject ``k``'s weight is needed.
    """

    ds: Dataset
    model: FittedHazardModel
    marginal: MarginalLaw
    horizon: np.ndarray
    cap: float = np.inf

    @property
    def unit(self) -> bool:
        return self.model.covariate_free

    @cached_property
    def _hazard(self):
        return ConditionalHazard(self.model, self.ds)

    def at(self, k, t):
        """Weights of subjects ``k`` at times ``t`` (arrays of equal shape)."""
        k = np.asarray(k, dtype=np.int64)
        t = np.asarray(t, dtype=float)
        if self.unit:
            return np.ones(k.shape)
        w = np.exp(self._hazard.cumhaz(k, t) - self.marginal.cumhaz(t))
        return np.minimum(w, self.cap)

    def at_grid(self, k, j, grid):
        """Same as ``at(k, grid[j])`` but looks up the step functions once per grid point."""
        k = np.asarray(k, dtype=np.int64)
        if self.unit:
            return np.ones(k.shape)
        grid = np.asarray(grid, dtype=float)
        h = self.model.baseline_cumhaz(grid)[j]
        m = self.marginal.cumhaz(grid)[j]
        w = np.exp(self._hazard.cumhaz(k, grid[j], h) - m)
        return np.minimum(w, self.cap)

    @property
    def jump_times(self) -> np.ndarray:
        return self.model.baseline_cumhaz.jump_times

    def step(self, i: int) -> StepFunction:
        if self.unit:
            return StepFunction([0.0], [1.0])
        u = self.jump_times[self.jump_times <= self.horizon[i]]
        times = np.concatenate([[0.0], u[u > 0]])
        vals = self.at(np.full(len(times), i), times)
        if len(u) == 0 or u[0] > 0:
            vals[0] = 1.0
        return StepFunction.from_values(times, vals)

    def grid_values(self) -> np.ndarray:
        """Values at every baseline jump within each subject's horizon."""
        if self.unit:
            return np.ones(self.ds.n)
        ev, subj = risk_pairs(self.horizon, self.jump_times)
        return np.concatenate([np.ones(self.ds.n), self.at(subj, self.jump_times[ev])])


def treatment_w1(ds: Dataset, model: FittedHazardModel, marginal: MarginalLaw) -> np.ndarray:
    """``w1`` at each initiator's own initiation time; NaN for non-initiators."""
    w1 = np.full(ds.n, np.nan)
    idx = np.flatnonzero(ds.delta_a)
    if model.covariate_free:
        w1[idx] = 1.0
        return w1
    if len(idx) == 0:
        return w1
    a = ds.a_star[idx]
    ch = ConditionalHazard(model, ds)
    cond = ch.density_mass(idx, a)
    marg = marginal.density_at(a)
    bad = np.flatnonzero(~(cond >= POSITIVITY_FLOOR) | ~(marg >= POSITIVITY_FLOOR))
    if len(bad):
        _positivity(ds, idx[bad[0]], a[bad[0]], "density mass")
    w1[idx] = marg / cond
    return w1


def _check_survival(traj: Trajectories, ends, what):
    if traj.unit:
        return
    k = np.arange(traj.ds.n)
    surv = np.exp(-traj._hazard.cumhaz(k, ends))
    bad = np.flatnonzero(~(surv >= POSITIVITY_FLOOR))
    if len(bad):
        _positivity(traj.ds, bad[0], ends[bad[0]], what)


def estimate_treatment_weights(ds: Dataset, model: FittedHazardModel, marginal: MarginalLaw | None = None):
    """Return ``(w1, w2)``: the scalar weights and the survival-ratio trajectories."""
    marginal = initiation_marginal(ds) if marginal is None else marginal
    horizon = np.where(ds.delta_a, ds.a_star, ds.t_star)
    w2 = Trajectories(ds, model, marginal, horizon)
    _check_survival(w2, ds.a_star, "conditional initiation-free survival")
    return treatment_w1(ds, model, marginal), w2


def estimate_censoring_weights(ds: Dataset, model: FittedHazardModel, marginal: MarginalLaw | None = None):
    marginal = censoring_marginal(ds) if marginal is None else marginal
    wc = Trajectories(ds, model, marginal, np.array(ds.t_star))
    _check_survival(wc, ds.t_star, "conditional uncensored survival")
    return wc


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if len(v) == 0:
        return {"n": 0}
    q = np.quantile(v, [0.01, 0.5, 0.99])
    return {"n": int(len(v)), "min": float(v.min()), "max": float(v.max()), "mean": float(v.mean()),
            "q01": float(q[0]), "median": float(q[1]), "q99": float(q[2])}


@dataclass(eq=False)
class WeightSet:
    """All weights for one dataset.

    ``w1`` is evaluated once per initiator; ``w2`` and ``wc`` are evaluated
    lazily through :meth:`w2_at` / :meth:`wc_at` or materialized per subject
    as step functions.
    """

    w1: np.ndarray
    treatment: Trajectories
    censoring: Trajectories
    truncation: float | None = None
    _diag: dict | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.w1)

    def w2_at(self, k, t):
        return self.treatment.at(k, t)

    def wc_at(self, k, t):
        return self.censoring.at(k, t)

    def w2_at_grid(self, k, j, grid):
        return self.treatment.at_grid(k, j, grid)

    def wc_at_grid(self, k, j, grid):
        return self.censoring.at_grid(k, j, grid)

    def w2(self, i: int) -> StepFunction:
        return self.treatment.step(i)

    def wc(self, i: int) -> StepFunction:
        return self.censoring.step(i)

    @property
    def unit(self) -> bool:
        return self.treatment.unit and self.censoring.unit

    def diagnostics(self) -> dict:
        if self._diag is None:
            self._diag = {
                "w1": _summary(self.w1),
                "w2": _summary(self.treatment.grid_values()),
                "wc": _summary(self.censoring.grid_values()),
                "truncation": self.truncation,
            }
        return self._diag


def build_weight_set(ds: Dataset, treatment_model: FittedHazardModel, censoring_model: FittedHazardModel,
                     truncate: float | None = None) -> WeightSet:
    w1, w2 = estimate_treatment_weights(ds, treatment_model)
    wc = estimate_censoring_weights(ds, censoring_model)
    return truncate_weights(WeightSet(w1, w2, wc), truncate)


def truncate_weights(ws: WeightSet, quantile: float | None = None) -> WeightSet:
    """Cap each weight family at its empirical ``quantile``; ``None`` is the identity."""
    if quantile is None:
        return ws
    if not 0.5 < quantile <= 1:
        raise ValueError("truncation quantile must lie in (0.5, 1]")
    w1 = ws.w1.copy()
    init = np.isfinite(w1)
    if init.any():
        w1[init] = np.minimum(w1[init], np.quantile(w1[init], quantile, method=TRUNCATION_METHOD))
    fams = []
    for traj in (ws.treatment, ws.censoring):
        if traj.unit:
            fams.append(traj)
        else:
            cap = float(np.quantile(traj.grid_values(), quantile, method=TRUNCATION_METHOD))
            fams.append(replace(traj, cap=min(cap, traj.cap)))
    return WeightSet(w1, fams[0], fams[1], truncation=quantile)
