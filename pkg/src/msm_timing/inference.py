"""Nonparametric bootstrap for causal functionals of a pipeline fit."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import causal
from .data import Dataset
from .errors import BootstrapUnstableError, InputError, NumericalError
from .pipeline import PipelineConfig, PipelineFit, fit_pipeline

MAX_FAILURE_FRACTION = 0.10
FUNCTIONAL_KINDS = ("mortality", "survival", "difference", "ratio", "interval", "interval_difference")


def _fmt(x) -> str:
    return "inf" if x == float("inf") else f"{x:g}"


@dataclass(frozen=True)
class Functional:
    """A scalar summary of a :class:`PipelineFit`.

    Use the constructors (:meth:`mortality`, :meth:`difference`, ...) rather
    than filling the fields by hand.
    """

    kind: str
    a: float = 0.0
    a_prime: float = float("inf")
    t0: float = 52.0
    t1: float = 0.0
    t2: float = 0.0
    t3: float = 0.0
    t4: float = 0.0
    stratum: object = None

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise ValueError(f"unknown functional kind {self.kind!r}")

    @classmethod
    def mortality(cls, a, t0, stratum=None):
        return cls("mortality", a=float(a), t0=float(t0), stratum=stratum)

    @classmethod
    def survival(cls, a, t0, stratum=None):
        return cls("survival", a=float(a), t0=float(t0), stratum=stratum)

    @classmethod
    def difference(cls, a, a_prime, t0, stratum=None):
        return cls("difference", a=float(a), a_prime=float(a_prime), t0=float(t0), stratum=stratum)

    @classmethod
    def ratio(cls, a, a_prime, t0, stratum=None):
        return cls("ratio", a=float(a), a_prime=float(a_prime), t0=float(t0), stratum=stratum)

    @classmethod
    def interval(cls, t1, t2, t0, stratum=None):
        return cls("interval", t0=float(t0), t1=float(t1), t2=float(t2), stratum=stratum)

    @classmethod
    def interval_difference(cls, first, second, t0, stratum=None):
        (t1, t2), (t3, t4) = first, second
        return cls("interval_difference", t0=float(t0), t1=float(t1), t2=float(t2),
                   t3=float(t3), t4=float(t4), stratum=stratum)

    @property
    def name(self) -> str:
        tag = "" if self.stratum is None else f"[{self.stratum}]"
        k, t0 = self.kind, _fmt(self.t0)
        if k in ("mortality", "survival"):
            body = f"{k}(a={_fmt(self.a)},t0={t0})"
        elif k in ("difference", "ratio"):
            body = f"{k}(a={_fmt(self.a)},a'={_fmt(self.a_prime)},t0={t0})"
        elif k == "interval":
            body = f"interval([{_fmt(self.t1)},{_fmt(self.t2)}),t0={t0})"
        else:
            body = (f"interval_difference([{_fmt(self.t1)},{_fmt(self.t2)}),"
                    f"[{_fmt(self.t3)},{_fmt(self.t4)}),t0={t0})")
        return body + tag

    def __call__(self, fit: PipelineFit) -> float:
        sf = fit.fit(self.stratum)
        k = self.kind
        if k == "mortality":
            return causal.mortality_at(sf, self.a, self.t0)
        if k == "survival":
            return causal.survival_at(sf, self.a, self.t0)
        if k == "difference":
            return causal.contrast(sf, self.a, self.a_prime, self.t0)[0]
        if k == "ratio":
            return causal.contrast(sf, self.a, self.a_prime, self.t0)[1]
        first = causal.interval_mortality(sf, self.t1, self.t2, self.t0)
        if k == "interval":
            return first
        return first - causal.interval_mortality(sf, self.t3, self.t4, self.t0)


@dataclass(frozen=True)
class BootstrapPlan:
    replicates: int = 1000
    seed: object = 0
    functionals: tuple = ()
    refit_weights: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        object.__setattr__(self, "functionals", tuple(self.functionals))

    @property
    def seed_key(self) -> list:
        s = self.seed
        return [int(x) for x in s] if isinstance(s, (tuple, list)) else [int(s)]


@dataclass(frozen=True)
class FunctionalResult:
    name: str
    estimate: float
    se: float | None
    ci: tuple
    n_failed: int


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    rows: tuple
    replicate_values: np.ndarray  # successful replicates x functionals
    n_failed: int
    failures: tuple = field(default=())

    def table(self):
        cols = ["functional", "estimate", "se", "ci_lo", "ci_hi", "n_failed"]
        return cols, [[r.name, r.estimate, r.se, r.ci[0], r.ci[1], r.n_failed] for r in self.rows]

    def __eq__(self, other):
        if not isinstance(other, BootstrapResult):
            return NotImplemented
        return (self.rows == other.rows and self.n_failed == other.n_failed
                and np.array_equal(self.replicate_values, other.replicate_values))


def resample_indices(ds: Dataset, rng) -> np.ndarray:
    """Subjects drawn with replacement, separately within each stratum."""
    if ds.strata is None:
        return rng.integers(0, ds.n, ds.n)
    parts = []
    for label in ds.stratum_labels():
        members = np.flatnonzero(np.array([s == label for s in ds.strata], dtype=bool))
        parts.append(members[rng.integers(0, len(members), len(members))])
    return np.concatenate(parts)


def _fixed_models_fit(ds, cfg, designs, full: PipelineFit):
    from .pipeline import PipelineFit as _PF, StratumFit
    from .structural import fit_structural
    from .weights import build_weight_set

    out = {}
    for label in ds.stratum_labels():
        sub = ds if ds.strata is None else ds.stratum(label)
        ref = full.strata[label]
        ws = build_weight_set(sub, ref.treatment_model, ref.censoring_model, cfg.truncate)
        sf = fit_structural(sub, designs[label], ws, stratum=label, diagnostics=False,
                            beta0=ref.structural.beta)
        out[label] = StratumFit(label, ref.treatment_model, ref.censoring_model, ws, sf)
    return _PF(cfg, out)


def _replicates(ds, cfg, plan, designs, full, reps):
    """Run replicates ``reps``; returns ``(rep, values or None, error)`` tuples."""
    out = []
    with threadpool_limits(1):
        for r in reps:
            rng = np.random.default_rng([*plan.seed_key, r])
            boot = ds.take(resample_indices(ds, rng))
            try:
                if plan.refit_weights:
                    fit = fit_pipeline(boot, cfg, designs, diagnostics=False, starts=full.betas)
                else:
                    fit = _fixed_models_fit(boot, cfg, designs, full)
                out.append((r, [f(fit) for f in plan.functionals], None))
            except (NumericalError, InputError) as exc:
                out.append((r, None, f"{type(exc).__name__}: {exc}"))
    return out


def bootstrap(ds: Dataset, cfg: PipelineConfig, plan: BootstrapPlan, full: PipelineFit | None = None) -> BootstrapResult:
    """Percentile bootstrap with subject-level resampling.

    Knots stay at their full-data positions and each replicate's Newton
    iterations start from the full-data estimate. Replicate ``r`` draws from
    ``default_rng([*seed, r])``, so serial and parallel runs agree exactly.
    """
    if not plan.functionals:
        raise ValueError("bootstrap plan has no functionals")
    full = fit_pipeline(ds, cfg, diagnostics=False) if full is None else full
    point = [f(full) for f in plan.functionals]
    designs = full.designs
    reps = list(range(plan.replicates))
    if plan.workers > 1:
        chunks = [reps[i::plan.workers] for i in range(plan.workers)]
        with ProcessPoolExecutor(plan.workers) as pool:
            parts = pool.map(_replicates, *zip(*[(ds, cfg, plan, designs, full, c) for c in chunks]))
            results = [x for p in parts for x in p]
    else:
        results = _replicates(ds, cfg, plan, designs, full, reps)
    results.sort(key=lambda x: x[0])
    failures = tuple((r, err) for r, v, err in results if v is None)
    n_failed = len(failures)
    if n_failed > MAX_FAILURE_FRACTION * plan.replicates:
        raise BootstrapUnstableError(
            f"bootstrap unstable: {n_failed} of {plan.replicates} replicates failed", n_failed,
            plan.replicates, failures,
        )
    values = np.array([v for _, v, _ in results if v is not None], dtype=float).reshape(-1, len(point))
    rows = []
    for j, f in enumerate(plan.functionals):
        col = values[:, j]
        se = float(np.std(col, ddof=1)) if len(col) > 1 else None
        lo, hi = (float(x) for x in np.percentile(col, [2.5, 97.5])) if len(col) else (np.nan, np.nan)
        rows.append(FunctionalResult(f.name, float(point[j]), se, (lo, hi), n_failed))
    return BootstrapResult(tuple(rows), values, n_failed, failures)
