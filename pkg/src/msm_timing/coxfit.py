"""Weighted partial-likelihood fitting for proportional-hazards models.

Two risk-set engines share one Newton-Raphson driver:

* :class:`RowEngine` handles covariates that are piecewise constant on
  ``(start, stop]`` rows (the treatment and censoring models). Risk-set sums
  are accumulated with reverse cumulative sums over event times.
* :class:`PairEngine` handles regressors that change continuously with time
  (the structural model), using explicit (event time, subject) risk pairs.

Ties are handled with the Breslow approximation throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .data import Dataset, SubjectRecord, _concat_ranges
from .errors import ConvergenceError, SeparationError, SingularInformationError, ValidationError
from .survcore import StepFunction

TOL = 1e-8
MAX_ITER = 25
MAX_ABS_COEF = 15.0
EVENTS = ("initiation", "censoring", "death")
_CHUNK = 400_000


@dataclass(frozen=True)
class HazardSpec:
    """Regressors of a hazard model.

    ``covariates`` name columns of the dataset; ``treatment_history`` adds the
    indicator that initiation happened strictly before ``t``.
    """

    covariates: tuple = ()
    treatment_history: bool = False

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @property
    def feature_names(self) -> tuple:
        return self.covariates + (("treated",) if self.treatment_history else ())

    @property
    def dimension(self) -> int:
        return len(self.feature_names)

    def to_dict(self):
        return {"covariates": list(self.covariates), "treatment_history": self.treatment_history}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d.get("covariates", ())), bool(d.get("treatment_history", False)))


@dataclass(frozen=True, eq=False)
class Rows:
    """Counting-process rows ``(start, stop]`` with constant regressors."""

    subject: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    X: np.ndarray
    offsets: np.ndarray  # rows of subject i are offsets[i]:offsets[i+1]

    @property
    def single(self) -> bool:
        return len(self.start) == len(self.offsets) - 1


def feature_rows(ds: Dataset, spec: HazardSpec) -> Rows:
    """Regressor rows covering each subject's path up to ``t_star``."""
    cols = [ds.covariate_index(c) for c in spec.covariates]
    subj = ds.seg_subject
    start = np.array(ds.seg_start)
    stop = np.array(ds.seg_stop)
    X = ds.seg_values[:, cols]
    if spec.treatment_history:
        a = ds.a_star[subj]
        init = ds.delta_a[subj]
        split = init & (start < a) & (a < stop)
        rep = 1 + split.astype(np.int64)
        idx = np.repeat(np.arange(len(start)), rep)
        second = np.zeros(len(idx), dtype=bool)
        second[np.cumsum(rep)[split] - 1] = True
        first_of_split = np.repeat(split, rep) & ~second
        subj, start, stop, X = subj[idx], start[idx], stop[idx], X[idx]
        a, init = a[idx], init[idx]
        stop = np.where(first_of_split, a, stop)
        start = np.where(second, a, start)
        treated = (init & (start >= a)).astype(float)
        X = np.column_stack([X, treated])
    X = np.ascontiguousarray(X, dtype=float).reshape(len(start), spec.dimension)
    offsets = np.concatenate([[0], np.cumsum(np.bincount(subj, minlength=ds.n))])
    return Rows(subj, start, stop, X, offsets)


# ---------------------------------------------------------------------------
# Newton driver


def aliased_columns(info, scale, rtol=1e-10):
    """Indices of columns that are (numerically) linear combinations of others."""
    info = np.asarray(info, dtype=float)
    scale = np.asarray(scale, dtype=float)
    dead = ~(np.isfinite(scale) & (scale > 0))
    live = np.flatnonzero(~dead)
    out = set(np.flatnonzero(dead).tolist())
    if len(live):
        sub = info[np.ix_(live, live)] * np.outer(scale[live], scale[live])
        _, r, piv = scipy.linalg.qr(sub, pivoting=True)
        d = np.abs(np.diag(r))
        if not d[0] > 0:
            out.update(live.tolist())
        else:
            rank = int(np.sum(d > rtol * d[0]))
            out.update(live[piv[rank:]].tolist())
    return sorted(out)


@dataclass
class NewtonResult:
    beta: np.ndarray
    loglik: float
    score: np.ndarray
    information: np.ndarray
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)

    @property
    def score_norm(self) -> float:
        return float(np.max(np.abs(self.score))) if len(self.score) else 0.0


def newton_solve(evaluate, dim, *, names=None, col_scale=None, tol=TOL, max_iter=MAX_ITER,
                 damped_iter=0, max_abs=MAX_ABS_COEF, beta0=None, singular_message="unidentifiable covariate"):
    """Maximise a concave log partial likelihood by Newton-Raphson.

    ``evaluate(beta)`` returns ``(loglik, score, information)``. Steps that
    lower the log likelihood are halved. After ``max_iter`` full iterations,
    ``damped_iter`` further half-length iterations are tried before giving up.
    """
    names = list(names) if names is not None else [f"b{j}" for j in range(dim)]
    beta = np.zeros(dim) if beta0 is None else np.array(beta0, dtype=float)
    ll, score, info = evaluate(beta)
    norm = float(np.max(np.abs(score))) if dim else 0.0
    trace = [norm]
    if dim == 0:
        return NewtonResult(beta, ll, score, info, 0, True, trace)
    scale = np.ones(dim) if col_scale is None else np.asarray(col_scale, dtype=float)
    bad = aliased_columns(info, scale)
    if bad:
        raise SingularInformationError(
            f"{singular_message}: {', '.join(names[j] for j in bad)}", [names[j] for j in bad]
        )
    it = 0
    while norm >= tol:
        if it >= max_iter + damped_iter:
            raise ConvergenceError(
                f"no convergence after {it} iterations (score max-norm {norm:.3g})",
                beta=beta, score_norm=norm, trace=trace,
            )
        try:
            step = scipy.linalg.solve(info, score, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            bad = aliased_columns(info, scale) or list(range(dim))
            raise SingularInformationError(
                f"{singular_message}: {', '.join(names[j] for j in bad)}", [names[j] for j in bad]
            ) from None
        frac = 1.0 if it < max_iter else 0.5
        slack = 1e-12 * (1.0 + abs(ll))
        for _ in range(40):
            cand = beta + frac * step
            ll_c, score_c, info_c = evaluate(cand)
            if np.isfinite(ll_c) and ll_c >= ll - slack:
                break
            frac *= 0.5
        else:
            raise ConvergenceError(
                f"step halving exhausted (score max-norm {norm:.3g})",
                beta=beta, score_norm=norm, trace=trace,
            )
        beta, ll, score, info = cand, ll_c, score_c, info_c
        norm = float(np.max(np.abs(score)))
        trace.append(norm)
        it += 1
        if np.max(np.abs(beta)) > max_abs:
            j = int(np.argmax(np.abs(beta)))
            raise SeparationError(f"separation detected: coefficient {names[j]} = {beta[j]:.3g}")
    return NewtonResult(beta, ll, score, info, it, True, trace)


# ---------------------------------------------------------------------------
# engines


def _revcum_excl(c):
    """``out[j] = sum(c[j + 1:])`` for ``j < len(c) - 1``."""
    return np.cumsum(c[::-1])[::-1][1:]


class RowEngine:
    """Breslow partial likelihood for rows with constant regressors and weights.

    Rows are put in a canonical order first, so the result does not depend
    on the order of the input.
    """

    def __init__(self, start, stop, event, X, w):
        X = np.asarray(X, dtype=float).reshape(len(start), -1)
        keys = [w, *X.T[::-1], start, ~event, stop]
        order = np.lexsort(keys)
        start, stop, event, X, w = start[order], stop[order], event[order], X[order], w[order]
        self.event_times = np.unique(stop[event])
        D = len(self.event_times)
        self.D = D
        lo = np.searchsorted(self.event_times, start, side="right")
        hi = np.searchsorted(self.event_times, stop, side="right")
        live = lo < hi
        self.center = X.mean(axis=0) if len(X) else np.zeros(X.shape[1])
        self.center_raw = self.center
        Xc = X - self.center
        ev_idx = np.searchsorted(self.event_times, stop[event])
        self.E = np.bincount(ev_idx, w[event], minlength=D)
        self.ZE = (w[event][:, None] * Xc[event]).sum(axis=0)
        self.lo, self.hi = lo[live], hi[live]
        self.Xc = Xc[live]
        self.w = w[live]
        self.q = X.shape[1]
        self.col_scale = np.ptp(X, axis=0) if len(X) else np.zeros(self.q)
        self.n_events = int(event.sum())

    def _risk_sum(self, vals):
        D = self.D
        a = np.bincount(self.hi, vals, minlength=D + 1)
        b = np.bincount(self.lo, vals, minlength=D + 1)
        return _revcum_excl(a) - _revcum_excl(b)

    def s0(self, beta):
        r = self.w * np.exp(self.Xc @ beta)
        return self._risk_sum(r)

    def evaluate(self, beta):
        q, D = self.q, self.D
        r = self.w * np.exp(self.Xc @ beta)
        S0 = self._risk_sum(r)
        ll = float(self.ZE @ beta - self.E @ np.log(S0))
        if q == 0:
            return ll, np.zeros(0), np.zeros((0, 0))
        S1 = np.empty((D, q))
        for k in range(q):
            S1[:, k] = self._risk_sum(r * self.Xc[:, k])
        xbar = S1 / S0[:, None]
        score = self.ZE - self.E @ xbar
        info = np.empty((q, q))
        g = self.E / S0
        for k in range(q):
            for m in range(k, q):
                s2 = self._risk_sum(r * self.Xc[:, k] * self.Xc[:, m])
                info[k, m] = info[m, k] = g @ s2
        info -= (xbar * self.E[:, None]).T @ xbar
        return ll, score, info


class PairEngine:
    """Breslow partial likelihood from explicit risk pairs.

    Each active pair carries the regressor row of one at-risk subject at one
    event time. Pairs whose regressors vanish contribute ``weight * 1`` to the
    risk-set denominator and are folded into ``offset``.
    """

    def __init__(self, D, pair_event, X, w, offset, E, ZE):
        self.D = D
        self.pair_event = pair_event
        self.X = X
        self.w = w
        self.offset = offset
        self.E = E
        self.ZE = ZE
        self.q = X.shape[1]
        self.col_scale = np.max(np.abs(X), axis=0) if len(X) else np.zeros(self.q)

    def _chunks(self):
        P = len(self.w)
        for lo in range(0, max(P, 1), _CHUNK):
            yield lo, min(lo + _CHUNK, P)

    def s0(self, beta):
        S0 = self.offset.copy()
        for lo, hi in self._chunks():
            r = self.w[lo:hi] * np.exp(self.X[lo:hi] @ beta)
            S0 += np.bincount(self.pair_event[lo:hi], r, minlength=self.D)
        return S0

    def evaluate(self, beta):
        q, D = self.q, self.D
        S0 = self.offset.copy()
        S1 = np.zeros((D, q))
        rs = []
        for lo, hi in self._chunks():
            X = self.X[lo:hi]
            ev = self.pair_event[lo:hi]
            r = self.w[lo:hi] * np.exp(X @ beta)
            rs.append(r)
            S0 += np.bincount(ev, r, minlength=D)
            for k in range(q):
                S1[:, k] += np.bincount(ev, r * X[:, k], minlength=D)
        ll = float(self.ZE @ beta - self.E @ np.log(S0))
        xbar = S1 / S0[:, None]
        score = self.ZE - self.E @ xbar
        g = self.E / S0
        info = np.zeros((q, q))
        for (lo, hi), r in zip(self._chunks(), rs):
            X = self.X[lo:hi]
            c = g[self.pair_event[lo:hi]] * r
            info += (X * c[:, None]).T @ X
        info -= (xbar * self.E[:, None]).T @ xbar
        return ll, score, info


def risk_pairs(exit_times, event_times):
    """All (event index, subject) pairs with ``exit_time >= event_time``."""
    exit_times = np.asarray(exit_times, dtype=float)
    order = np.argsort(exit_times, kind="stable")
    first = np.searchsorted(exit_times[order], event_times, side="left")
    lengths = len(exit_times) - first
    flat = _concat_ranges(first, lengths)
    pair_event = np.repeat(np.arange(len(event_times)), lengths)
    return pair_event, order[flat]


def build_pair_engine(D, pair_event, pair_weight, pair_dies, active, x_active):
    """Assemble a :class:`PairEngine`.

    ``pair_*`` arrays cover every at-risk pair; ``x_active`` holds regressor
    rows for the pairs flagged in ``active`` (all other pairs have zero
    regressors). ``pair_dies`` marks the subject's own death at that event.
    """
    nonzero = np.any(x_active != 0, axis=1)
    act = np.flatnonzero(active)[nonzero]
    X = np.ascontiguousarray(x_active[nonzero])
    folded = np.ones(len(pair_event), dtype=bool)
    folded[act] = False
    # bincount returns integers when its input is empty
    offset = np.bincount(pair_event[folded], pair_weight[folded], minlength=D).astype(float)
    E = np.bincount(pair_event[pair_dies], pair_weight[pair_dies], minlength=D).astype(float)
    dying = pair_dies[act]
    w_act = pair_weight[act]
    ZE = (w_act[dying][:, None] * X[dying]).sum(axis=0) if X.shape[1] else np.zeros(0)
    return PairEngine(D, pair_event[act], X, w_act, offset, E, ZE)


# ---------------------------------------------------------------------------
# fitted model


@dataclass(frozen=True, eq=False)
class FittedHazardModel:
    spec: HazardSpec
    event: str
    coefficients: np.ndarray
    baseline_cumhaz: StepFunction
    loglik: float
    iterations: int
    converged: bool
    score_norm: float
    information: np.ndarray
    n_events: int

    @property
    def names(self) -> tuple:
        return self.spec.feature_names

    @property
    def covariate_free(self) -> bool:
        return len(self.coefficients) == 0

    def to_dict(self) -> dict:
        return {
            "event": self.event,
            "spec": self.spec.to_dict(),
            "coefficients": dict(zip(self.names, self.coefficients.tolist())),
            "baseline": self.baseline_cumhaz.to_dict(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "score_norm": self.score_norm,
            "information": self.information.tolist(),
            "n_events": self.n_events,
        }

    @classmethod
    def from_dict(cls, d):
        spec = HazardSpec.from_dict(d["spec"])
        coef = np.array([d["coefficients"][k] for k in spec.feature_names], dtype=float)
        return cls(
            spec=spec,
            event=d["event"],
            coefficients=coef,
            baseline_cumhaz=StepFunction.from_dict(d["baseline"]),
            loglik=float(d["loglik"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
            score_norm=float(d["score_norm"]),
            information=np.array(d["information"], dtype=float).reshape(len(coef), len(coef)),
            n_events=int(d["n_events"]),
        )


def _exit_and_events(ds: Dataset, event: str):
    if event == "initiation":
        return ds.a_star, ds.delta_a
    if event == "death":
        return ds.t_star, ds.delta_t
    if event == "censoring":
        return ds.t_star, censoring_events(ds)
    raise ValueError(f"event must be one of {EVENTS}, got {event!r}")


def censoring_events(ds: Dataset) -> np.ndarray:
    """Loss to follow-up: censored deaths strictly before the horizon."""
    return ~ds.delta_t & (ds.t_star < ds.t_max)


def _split_rows_by_weights(rows, exit_times, weights):
    out = {"subject": [], "start": [], "stop": [], "X": [], "w": []}
    for i in range(len(rows.offsets) - 1):
        wf = weights[i]
        for r in range(rows.offsets[i], rows.offsets[i + 1]):
            s, e = rows.start[r], min(rows.stop[r], exit_times[i])
            if not s < e:
                continue
            cuts = wf.jump_times[(wf.jump_times > s) & (wf.jump_times < e)]
            bounds = np.concatenate([[s], cuts, [e]])
            for a, b in zip(bounds[:-1], bounds[1:]):
                out["subject"].append(i)
                out["start"].append(a)
                out["stop"].append(b)
                out["X"].append(rows.X[r])
                out["w"].append(float(wf(b)))
    q = rows.X.shape[1]
    return (
        np.array(out["subject"], dtype=np.int64),
        np.array(out["start"], dtype=float),
        np.array(out["stop"], dtype=float),
        np.array(out["X"], dtype=float).reshape(-1, q),
        np.array(out["w"], dtype=float),
    )


def fit_cox(ds: Dataset, spec: HazardSpec, event: str = "initiation", weights=None,
            *, tol=TOL, max_iter=MAX_ITER) -> FittedHazardModel:
    """Fit a proportional-hazards model for one counting process of ``ds``.

    Parameters
    ----------
    event : {'initiation', 'censoring', 'death'}
        Which process is modelled. Subjects stay at risk for initiation until
        ``a_star``; for censoring and death until ``t_star``.
    weights : sequence of StepFunction, optional
        Per-subject observation weights; the weight in force at an event time
        multiplies both the event and the risk-set contribution.
    """
    exit_times, events = _exit_and_events(ds, event)
    rows = feature_rows(ds, spec)
    if weights is None:
        end = exit_times[rows.subject]
        keep = rows.start < end
        subj = rows.subject[keep]
        start = rows.start[keep]
        stop = np.minimum(rows.stop[keep], end[keep])
        X = rows.X[keep]
        w = np.ones(len(start))
    else:
        if len(weights) != ds.n:
            raise ValueError("one weight function per subject is required")
        subj, start, stop, X, w = _split_rows_by_weights(rows, exit_times, weights)
        if np.any(~(w > 0)) or np.any(~np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
    row_event = events[subj] & (stop == exit_times[subj])
    if not row_event.any():
        raise ValidationError(f"no {event} events to fit")
    engine = RowEngine(start, stop, row_event, X, w)
    res = newton_solve(engine.evaluate, spec.dimension, names=spec.feature_names,
                       col_scale=engine.col_scale, tol=tol, max_iter=max_iter)
    # Breslow baseline on the raw (uncentred) scale
    s0_raw = engine.s0(res.beta) * np.exp(engine.center @ res.beta)
    baseline = StepFunction(engine.event_times, engine.E / s0_raw)
    return FittedHazardModel(
        spec=spec,
        event=event,
        coefficients=res.beta,
        baseline_cumhaz=baseline,
        loglik=res.loglik,
        iterations=res.iterations,
        converged=res.converged,
        score_norm=res.score_norm,
        information=res.information,
        n_events=engine.n_events,
    )


def fit_cox_time_varying(exit_times, events, regressor, names=None, *, tol=TOL, max_iter=MAX_ITER):
    """Unweighted partial likelihood with regressors evaluated at event times.

    ``regressor(subjects, times)`` returns one row per (subject, time) pair.
    Subjects are at risk from 0 through their exit time.

    Returns
    -------
    NewtonResult, StepFunction
        The fit and the Breslow cumulative baseline hazard.
    """
    exit_times = np.asarray(exit_times, dtype=float)
    events = np.asarray(events, dtype=bool)
    u = np.unique(exit_times[events])
    if len(u) == 0:
        raise ValidationError("no events to fit")
    pair_event, subj = risk_pairs(exit_times, u)
    X = np.asarray(regressor(subj, u[pair_event]), dtype=float)
    X = X.reshape(len(subj), -1)
    w = np.ones(len(subj))
    dies = events[subj] & (exit_times[subj] == u[pair_event])
    engine = build_pair_engine(len(u), pair_event, w, dies, np.ones(len(subj), dtype=bool), X)
    res = newton_solve(engine.evaluate, X.shape[1], names=names, col_scale=engine.col_scale,
                       tol=tol, max_iter=max_iter)
    baseline = StepFunction(u, engine.E / engine.s0(res.beta))
    return res, baseline


# ---------------------------------------------------------------------------
# conditional quantities along a subject's covariate path


def _row_lookup(rows: Rows, k, t):
    """Row of subject ``k`` in force at ``t`` (``start < t <= stop``; first row at 0)."""
    k = np.asarray(k, dtype=np.int64)
    t = np.asarray(t, dtype=float)
    if rows.single:
        return k.copy()
    R, Q = len(rows.start), len(k)
    subj = np.concatenate([rows.subject, k])
    times = np.concatenate([rows.start, t])
    is_row = np.concatenate([np.ones(R, dtype=np.int64), np.zeros(Q, dtype=np.int64)])
    order = np.lexsort((is_row, times, subj))
    seen = np.cumsum(is_row[order])
    pos = np.empty(R + Q, dtype=np.int64)
    pos[order] = np.arange(R + Q)
    count = seen[pos[R:]] - rows.offsets[k]
    return rows.offsets[k] + np.maximum(count - 1, 0)


class ConditionalHazard:
    """Subject-specific cumulative hazards implied by a fitted model.

    ``cumhaz(k, t)`` integrates ``r(L_k(s)) dH0(s)`` over ``[0, t]`` along the
    covariate path of subject ``k`` of ``ds``.
    """

    def __init__(self, model: FittedHazardModel, ds: Dataset):
        self.model = model
        self.rows = rows = feature_rows(ds, model.spec)
        self.end = ds.t_star
        H = model.baseline_cumhaz
        self.H = H
        self.m = np.exp(rows.X @ model.coefficients)
        self.h_start = H(rows.start)
        full = self.m * (H(rows.stop) - self.h_start)
        # per-subject prefix sums, accumulated row by row so that no subject's
        # value depends on the rows of other subjects
        pos = np.arange(len(full)) - rows.offsets[rows.subject]
        before = np.zeros(len(full))
        for j in range(1, int(pos.max(initial=0)) + 1):
            idx = np.flatnonzero(pos == j)
            before[idx] = before[idx - 1] + full[idx - 1]
        self.before = before

    def _check(self, k, t):
        if np.any(np.asarray(t) > self.end[k]):
            raise ValidationError("covariate path exhausted")

    def cumhaz(self, k, t, h_t=None):
        """``Lambda_k(t)``; ``h_t`` may supply precomputed baseline values ``H0(t)``."""
        self._check(k, t)
        r = _row_lookup(self.rows, k, t)
        h_t = self.H(t) if h_t is None else h_t
        return self.before[r] + self.m[r] * (h_t - self.h_start[r])

    def cumhaz_left(self, k, t):
        self._check(k, t)
        r = _row_lookup(self.rows, k, t)
        return self.before[r] + self.m[r] * (self.H.left_limit(t) - self.h_start[r])

    def risk(self, k, t):
        return self.m[_row_lookup(self.rows, k, t)]

    def density_mass(self, k, u):
        """``r(L_k(u)) dH0(u) S_k(u-)``; zero where ``u`` is not a jump time."""
        return self.risk(k, u) * self.H.mass_at(u) * np.exp(-self.cumhaz_left(k, u))


def _subject_dataset(subject: SubjectRecord, covariate_names) -> Dataset:
    return Dataset.from_subjects([subject], t_max=subject.t_star, covariate_names=covariate_names)


def _single_subject_hazard(model, subject, covariate_names):
    names = covariate_names
    if names is None:
        names = tuple(model.spec.covariates) + tuple(
            f"_unused{j}" for j in range(subject.covariates.p - len(model.spec.covariates))
        )
    return ConditionalHazard(model, _subject_dataset(subject, names))


def conditional_survival(model: FittedHazardModel, subject: SubjectRecord, t: float,
                         covariate_names=None) -> float:
    """``exp(-int_0^t r(L(s)) dH0(s))`` along the subject's covariate path.

    ``covariate_names`` labels the subject's covariate columns; by default the
    first columns are taken to be the model's covariates in order.
    """
    if t > subject.covariates.end or t > subject.t_star:
        raise ValidationError("covariate path exhausted")
    if t <= 0:
        return 1.0
    ch = _single_subject_hazard(model, subject, covariate_names)
    return float(np.exp(-ch.cumhaz(np.array([0]), np.array([t]))[0]))


def conditional_density_mass(model: FittedHazardModel, subject: SubjectRecord, u: float,
                             covariate_names=None) -> float:
    if not model.baseline_cumhaz.is_jump(u):
        raise ValidationError(f"{u} is not a jump time of the baseline hazard")
    ch = _single_subject_hazard(model, subject, covariate_names)
    return float(ch.density_mass(np.array([0]), np.array([u]))[0])
