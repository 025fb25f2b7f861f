"""Weighted structural proportional-hazards fit for initiation-time regimes.

The hazard of death under initiation at ``a`` is
``lambda_inf(t) * exp(X(a, t) @ beta)`` with

    X(a, t) = I(a < t) * [init, b1(a), b2(t - a), b3(a * (t - a))]

where ``init`` is an optional constant column and ``b1``-``b3`` are natural
spline bases. Every subject stays in the risk set until its exit time,
weighted by ``Wc(t) * (w1 if initiated before t else W2(t))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coxfit import MAX_ITER, TOL, build_pair_engine, newton_solve, risk_pairs
from .data import Dataset
from .errors import PositivityError, ValidationError
from .splines import KNOT_PERCENTILES, SplineBasis, basis_from_values
from .survcore import StepFunction
from .weights import WeightSet

DAMPED_ITER = 10
BLOCKS = ("g1", "g2", "g3")


@dataclass(frozen=True)
class StructuralDesign:
    """Spline bases for ``a``, ``t - a`` and ``a (t - a)``; any block may be absent."""

    basis1: SplineBasis | None = None
    basis2: SplineBasis | None = None
    basis3: SplineBasis | None = None
    intercept: bool = False

    @property
    def bases(self) -> tuple:
        return (self.basis1, self.basis2, self.basis3)

    @property
    def dimension(self) -> int:
        return int(self.intercept) + sum(b.dimension for b in self.bases if b is not None)

    @property
    def labels(self) -> tuple:
        out = ["init"] if self.intercept else []
        for name, b in zip(BLOCKS, self.bases):
            if b is not None:
                out += [f"{name}[{j}]" for j in range(b.dimension)]
        return tuple(out)

    def block_slices(self) -> dict:
        out, pos = {}, int(self.intercept)
        if self.intercept:
            out["init"] = slice(0, 1)
        for name, b in zip(BLOCKS, self.bases):
            if b is not None:
                out[name] = slice(pos, pos + b.dimension)
                pos += b.dimension
        return out

    def evaluate(self, a, t) -> np.ndarray:
        """Rows ``X(a, t)`` for paired arrays; zero wherever ``a >= t``."""
        a = np.asarray(a, dtype=float).reshape(-1)
        t = np.asarray(t, dtype=float).reshape(-1)
        out = np.zeros((len(a), self.dimension))
        on = a < t
        if not on.any():
            return out
        ao, d = a[on], t[on] - a[on]
        cols = []
        if self.intercept:
            cols.append(np.ones((len(ao), 1)))
        for b, arg in zip(self.bases, (ao, d, ao * d)):
            if b is not None:
                cols.append(b.evaluate(arg))
        if cols:
            out[on] = np.concatenate(cols, axis=1)
        return out

    def to_dict(self) -> dict:
        d = {"intercept": self.intercept}
        for name, b in zip(BLOCKS, self.bases):
            d[name] = None if b is None else b.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "StructuralDesign":
        bases = [None if d.get(k) is None else SplineBasis.from_dict(d[k]) for k in BLOCKS]
        return cls(*bases, intercept=bool(d.get("intercept", False)))


def design_row(design: StructuralDesign, a: float, t: float) -> np.ndarray:
    if a < 0 or t < 0:
        raise ValueError("a and t must be nonnegative")
    return design.evaluate([a], [t])[0]


def knot_data(ds: Dataset) -> dict:
    """Values whose percentiles place the knots of each block."""
    init = ds.delta_a
    both = ds.delta_a & ds.delta_t
    a, d = ds.a_star[both], ds.t_star[both] - ds.a_star[both]
    return {"g1": ds.a_star[init], "g2": d, "g3": a * d}


def design_from_data(ds: Dataset, blocks=BLOCKS, intercept=False, knots=None,
                     percentiles=KNOT_PERCENTILES) -> StructuralDesign:
    """Build a design with data-driven knots.

    ``knots`` may override any block with a mapping
    ``{"interior": [...], "boundary": [lo, hi]}`` or a :class:`SplineBasis`.
    """
    knots = knots or {}
    values = knot_data(ds)
    bases = []
    for name in BLOCKS:
        if name in knots and knots[name] is not None:
            k = knots[name]
            bases.append(k if isinstance(k, SplineBasis) else SplineBasis(tuple(k["interior"]), tuple(k["boundary"])))
        elif name in blocks:
            try:
                bases.append(basis_from_values(values[name], percentiles))
            except ValueError as exc:
                raise ValidationError(f"{name}: {exc}") from None
        else:
            bases.append(None)
    return StructuralDesign(*bases, intercept=intercept)


@dataclass(frozen=True, eq=False)
class StructuralFit:
    beta: np.ndarray
    design: StructuralDesign
    baseline: StepFunction
    stratum: object = None
    loglik: float = float("nan")
    iterations: int = 0
    converged: bool = True
    score_norm: float = 0.0
    trace: tuple = ()
    n_events: int = 0
    t_max: float = float("inf")
    a_support: float = 0.0
    weight_diagnostics: dict = field(default_factory=dict)

    def coefficients(self) -> dict:
        return dict(zip(self.design.labels, self.beta.tolist()))

    def to_dict(self) -> dict:
        return {
            "stratum": self.stratum,
            "design": self.design.to_dict(),
            "beta": self.coefficients(),
            "baseline": self.baseline.to_dict(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "score_norm": self.score_norm,
            "trace": list(self.trace),
            "n_events": self.n_events,
            "t_max": self.t_max,
            "a_support": self.a_support,
            "weight_diagnostics": self.weight_diagnostics,
        }

    @classmethod
    def from_dict(cls, d) -> "StructuralFit":
        design = StructuralDesign.from_dict(d["design"])
        return cls(
            beta=np.array([d["beta"][k] for k in design.labels], dtype=float),
            design=design,
            baseline=StepFunction.from_dict(d["baseline"]),
            stratum=d.get("stratum"),
            loglik=float(d.get("loglik", float("nan"))),
            iterations=int(d.get("iterations", 0)),
            converged=bool(d.get("converged", True)),
            score_norm=float(d.get("score_norm", 0.0)),
            trace=tuple(d.get("trace", ())),
            n_events=int(d.get("n_events", 0)),
            t_max=float(d.get("t_max", float("inf"))),
            a_support=float(d.get("a_support", 0.0)),
            weight_diagnostics=d.get("weight_diagnostics", {}),
        )


def structural_engine(ds: Dataset, design: StructuralDesign, ws: WeightSet | None = None):
    """Pair engine for the weighted estimating equation; ``ws=None`` means unit weights.

    Returns the engine and the distinct death times.
    """
    u = np.unique(ds.t_star[ds.delta_t])
    if len(u) == 0:
        raise ValidationError("no deaths to fit")
    pair_event, subj = risk_pairs(ds.t_star, u)
    t = u[pair_event]
    a = ds.a_star[subj]
    init = ds.delta_a[subj] & (a < t)
    if ws is None:
        weight = np.ones(len(subj))
    else:
        weight = ws.wc_at_grid(subj, pair_event, u)
        weight[init] *= ws.w1[subj[init]]
        pre = ~init
        weight[pre] *= ws.w2_at_grid(subj[pre], pair_event[pre], u)
    dies = ds.delta_t[subj] & (ds.t_star[subj] == t)
    x = design.evaluate(a[init], t[init])
    return build_pair_engine(len(u), pair_event, weight, dies, init, x), u


def _baseline(engine, u, beta) -> StepFunction:
    s0 = engine.s0(beta)
    if np.any(~(s0 > 0)):
        raise PositivityError("positivity: empty weighted risk set")
    return StepFunction(u, engine.E / s0)


def fit_structural(ds: Dataset, design: StructuralDesign, ws: WeightSet | None = None, *,
                   stratum=None, tol=TOL, max_iter=MAX_ITER, damped_iter=DAMPED_ITER,
                   diagnostics=True, beta0=None) -> StructuralFit:
    """Solve the weighted estimating equation for ``beta`` and the baseline.

    Newton-Raphson starts from ``beta0`` (zero by default).
    """
    engine, u = structural_engine(ds, design, ws)
    res = newton_solve(engine.evaluate, design.dimension, names=design.labels,
                       col_scale=engine.col_scale, tol=tol, max_iter=max_iter, damped_iter=damped_iter, beta0=beta0)
    init = ds.a_star[ds.delta_a]
    return StructuralFit(
        beta=res.beta,
        design=design,
        baseline=_baseline(engine, u, res.beta),
        stratum=stratum,
        loglik=res.loglik,
        iterations=res.iterations,
        converged=res.converged,
        score_norm=res.score_norm,
        trace=tuple(res.trace),
        n_events=int(ds.delta_t.sum()),
        t_max=ds.t_max,
        a_support=float(init.max()) if len(init) else 0.0,
        weight_diagnostics=ws.diagnostics() if ws is not None and diagnostics else {},
    )


def breslow_baseline(ds: Dataset, design: StructuralDesign, ws: WeightSet | None, beta) -> StepFunction:
    engine, u = structural_engine(ds, design, ws)
    return _baseline(engine, u, np.asarray(beta, dtype=float))
