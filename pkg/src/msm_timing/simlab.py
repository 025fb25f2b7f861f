"""Synthetic data with known causal truth, and a Monte Carlo study harness.

Generative model, per subject:

* ``L ~ Bernoulli(p)``, a baseline confounder;
* initiation ``A ~ Exp(treatment_rate * exp(gamma * L))``;
* death hazard ``lambda_inf * exp(death_coef * L)`` before ``A`` and that
  times ``exp(g1(A) + g2(t - A) + g3(A (t - A)))`` after it;
* censoring ``C ~ Exp(censoring_rate * exp(censoring_coef * L))`` and
  administrative censoring at ``t_max``.

With constant or linear ``g`` the post-initiation exponent is linear in
``t - A`` and death times are drawn by exact inversion.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .data import Dataset
from .errors import NumericalError
from .pipeline import PipelineConfig, fit_pipeline

ESTIMATORS = ("weighted", "unweighted")


@dataclass(frozen=True)
class Effect:
    """``g(x) = intercept + slope * x``; ``kind`` is ``constant`` or ``linear``."""

    kind: str = "constant"
    intercept: float = 0.0
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"unsupported effect specification {self.kind!r}: use constant or linear")
        if self.kind == "constant" and self.slope != 0:
            raise ValueError("a constant effect has no slope")

    def __call__(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    @classmethod
    def parse(cls, spec) -> "Effect":
        if isinstance(spec, Effect):
            return spec
        if isinstance(spec, (int, float)):
            return cls("constant", float(spec))
        if isinstance(spec, dict):
            return cls(**spec)
        raise ValueError(f"cannot read effect specification {spec!r}")


@dataclass(frozen=True)
class SimConfig:
    n: int = 500
    lambda_inf: float = 0.01
    g1: Effect = field(default_factory=lambda: Effect("constant", -0.5))
    g2: Effect = field(default_factory=Effect)
    g3: Effect = field(default_factory=Effect)
    treatment_rate: float = 0.05
    gamma: float = 0.0
    censoring_rate: float = 0.01
    censoring_coef: float = 0.0
    confounder_p: float = 0.5
    death_coef: float = 0.7
    confounder_observed: bool = True
    t_max: float = 78.0
    seed: int = 0

    def __post_init__(self):
        for name in ("g1", "g2", "g3"):
            object.__setattr__(self, name, Effect.parse(getattr(self, name)))
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not (self.lambda_inf > 0 and self.treatment_rate > 0 and self.t_max > 0):
            raise ValueError("hazard rates and t_max must be positive")
        if self.censoring_rate < 0:
            raise ValueError("censoring rate must be nonnegative")
        if not 0 <= self.confounder_p <= 1:
            raise ValueError("confounder_p must be a probability")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "SimConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown simulation settings: {sorted(extra)}")
        return cls(**d)


SCENARIOS = {
    "1": dict(gamma=0.0, confounder_observed=True),
    "2": dict(gamma=1.0, confounder_observed=True),
    "3": dict(gamma=1.0, confounder_observed=False),
}


def scenario(name, **overrides) -> SimConfig:
    """Scenario 1 randomizes initiation; 2 confounds it through an observed L;
    3 hides L from the analyst."""
    key = str(name)
    if key not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    return SimConfig(**{**SCENARIOS[key], **overrides})


def _exponent(cfg: SimConfig, a):
    """Post-initiation log hazard ratio ``alpha + kappa * (t - a)``."""
    a = np.asarray(a, dtype=float)
    alpha = cfg.g1(a) + cfg.g2.intercept + cfg.g3.intercept
    kappa = cfg.g2.slope + cfg.g3.slope * a
    return alpha, kappa


def _post_cumhaz(rate, alpha, kappa, d):
    """``int_0^d rate * exp(alpha + kappa s) ds``."""
    with np.errstate(over="ignore", invalid="ignore"):
        lin = d * np.ones_like(kappa)
        curved = np.expm1(kappa * d) / np.where(kappa == 0, 1.0, kappa)
    return rate * np.exp(alpha) * np.where(kappa == 0, lin, curved)


def _invert_post(rate, alpha, kappa, r):
    """Solve ``_post_cumhaz(rate, alpha, kappa, d) = r`` for ``d``; inf when never reached."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = r * np.exp(-alpha) / rate
        arg = 1.0 + kappa * x
        curved = np.where(arg > 0, np.log1p(kappa * x) / np.where(kappa == 0, 1.0, kappa), np.inf)
    return np.where(kappa == 0, x, curved)


def death_times(cfg: SimConfig, a, frailty, e):
    """Death times under initiation at ``a`` (inf allowed) for unit exponential draws ``e``."""
    a = np.asarray(a, dtype=float)
    rate = cfg.lambda_inf * frailty
    before = e / rate
    early = before <= a
    a_fin = np.where(np.isfinite(a), a, 0.0)
    alpha, kappa = _exponent(cfg, a_fin)
    resid = e - rate * a_fin
    late = a_fin + _invert_post(rate, alpha, kappa, np.maximum(resid, 0.0))
    return np.where(early, before, late)


def _draw(cfg: SimConfig, rng):
    n = cfg.n
    L = (rng.random(n) < cfg.confounder_p).astype(float)
    A = rng.exponential(size=n) / (cfg.treatment_rate * np.exp(cfg.gamma * L))
    E = rng.exponential(size=n)
    C = rng.exponential(size=n)
    frailty = np.exp(cfg.death_coef * L)
    T = death_times(cfg, A, frailty, E)
    crate = cfg.censoring_rate * np.exp(cfg.censoring_coef * L)
    C = np.where(crate > 0, C / np.where(crate > 0, crate, 1.0), np.inf)
    return L, A, T, C


def simulate_dataset(cfg: SimConfig, rng=None) -> Dataset:
    """One simulated dataset; ``rng`` defaults to ``default_rng(cfg.seed)``."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    L, A, T, C = _draw(cfg, rng)
    t_star = np.minimum(np.minimum(T, C), cfg.t_max)
    delta_t = (T <= C) & (T <= cfg.t_max)
    delta_a = A < t_star
    a_star = np.minimum(A, t_star)
    cov = L[:, None] if cfg.confounder_observed else np.zeros((cfg.n, 0))
    names = ["L"] if cfg.confounder_observed else []
    return Dataset.from_baseline(a_star, delta_a, t_star, delta_t, cov, covariate_names=names, t_max=cfg.t_max)


def simulate_regime(cfg: SimConfig, a: float, rng=None) -> np.ndarray:
    """Potential death times ``T_a`` of ``cfg.n`` subjects under forced initiation at ``a``."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    L = (rng.random(cfg.n) < cfg.confounder_p).astype(float)
    e = rng.exponential(size=cfg.n)
    return death_times(cfg, np.full(cfg.n, float(a)), np.exp(cfg.death_coef * L), e)


def true_cumhaz(cfg: SimConfig, a: float, t0: float, frailty: float = 1.0) -> float:
    rate = cfg.lambda_inf * frailty
    if t0 <= a:
        return rate * t0
    alpha, kappa = _exponent(cfg, a)
    return float(rate * a + _post_cumhaz(rate, alpha, kappa, t0 - a))


def true_mortality(cfg: SimConfig, a: float, t0: float) -> float:
    """``P(T_a <= t0)``, averaged over the confounder distribution."""
    if t0 <= 0:
        return 0.0
    out = 0.0
    for l, p in ((0.0, 1 - cfg.confounder_p), (1.0, cfg.confounder_p)):
        if p > 0:
            out += p * -np.expm1(-true_cumhaz(cfg, a, t0, np.exp(cfg.death_coef * l)))
    return float(out)


# ---------------------------------------------------------------------------
# study harness


def estimator_config(cfg: SimConfig, estimator: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Pipeline settings for ``estimator``; weights use L whenever it is observed."""
    base = PipelineConfig() if base is None else base
    if estimator == "unweighted":
        return replace(base, treatment_covariates=(), censoring_covariates=(), weighted=False)
    if estimator != "weighted":
        raise ValueError(f"unknown estimator {estimator!r}")
    cov = ("L",) if cfg.confounder_observed else ()
    return replace(base, treatment_covariates=cov, censoring_covariates=cov, weighted=True)


# intercept plus linear terms in a and t - a: a generous fit for the
# constant true effect that keeps run-to-run variance low at n = 500
STUDY_PIPELINE = PipelineConfig(blocks=("g1", "g2"), intercept=True, percentiles=())


@dataclass(frozen=True)
class StudyPlan:
    runs: int = 100
    estimators: tuple = ESTIMATORS
    a_list: tuple = (0.0, 8.0)
    t0: float = 52.0
    replicates: int = 0
    pipeline: PipelineConfig = STUDY_PIPELINE
    workers: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ValueError(f"unknown estimator {e!r}")
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "a_list", tuple(float(a) for a in self.a_list))


def _functionals(plan: StudyPlan):
    from .inference import Functional

    return [Functional.mortality(a, plan.t0) for a in plan.a_list]


def _one_run(cfg: SimConfig, plan: StudyPlan, run: int) -> dict:
    """Estimates (and bootstrap CIs) of every functional for one simulated dataset."""
    from .inference import BootstrapPlan, bootstrap

    with threadpool_limits(1):
        ds = simulate_dataset(cfg, np.random.default_rng([cfg.seed, run]))
        funcs = _functionals(plan)
        out = {"run": run, "results": {}}
        for est in plan.estimators:
            pcfg = estimator_config(cfg, est, plan.pipeline)
            try:
                fit = fit_pipeline(ds, pcfg, diagnostics=False)
            except NumericalError as exc:
                out["results"][est] = {"error": str(exc)}
                continue
            res = {f.name: (f(fit), np.nan, np.nan) for f in funcs}
            if plan.replicates > 0:
                bp = BootstrapPlan(plan.replicates, seed=(cfg.seed, run), functionals=funcs)
                try:
                    boot = bootstrap(ds, pcfg, bp, full=fit)
                    res = {r.name: (r.estimate, r.ci[0], r.ci[1]) for r in boot.rows}
                except NumericalError as exc:
                    res["bootstrap_error"] = str(exc)
            out["results"][est] = res
        return out


@dataclass(frozen=True, eq=False)
class SimReport:
    """Aggregated study results; ``rows`` holds one dict per (estimator, functional)."""

    config: SimConfig
    plan: StudyPlan
    rows: list
    runs: list

    def table(self):
        cols = ["estimator", "functional", "truth", "mean_estimate", "mean_bias", "empirical_sd",
                "mc_se", "coverage", "n_covered_runs", "n_runs", "n_failed"]
        return cols, [[r[c] for c in cols] for r in self.rows]

    def row(self, estimator, functional) -> dict:
        for r in self.rows:
            if r["estimator"] == estimator and r["functional"] == functional:
                return r
        raise KeyError((estimator, functional))


def _aggregate(cfg: SimConfig, plan: StudyPlan, runs: list) -> list:
    runs = sorted(runs, key=lambda r: r["run"])
    rows = []
    for est in plan.estimators:
        for f in _functionals(plan):
            truth = true_mortality(cfg, f.a, f.t0)
            ok = [r["results"][est][f.name] for r in runs if "error" not in r["results"][est]]
            vals = np.array([v[0] for v in ok])
            ci = np.array([v[1:] for v in ok if np.isfinite(v[1])]).reshape(-1, 2)
            m = len(vals)
            sd = float(vals.std(ddof=1)) if m > 1 else float("nan")
            cover = float(np.mean((ci[:, 0] <= truth) & (truth <= ci[:, 1]))) if len(ci) else float("nan")
            rows.append({
                "estimator": est,
                "functional": f.name,
                "truth": truth,
                "mean_estimate": float(vals.mean()) if m else float("nan"),
                "mean_bias": float(vals.mean() - truth) if m else float("nan"),
                "empirical_sd": sd,
                "mc_se": float(sd / np.sqrt(m)) if m > 1 else float("nan"),
                "coverage": cover,
                "n_covered_runs": len(ci),
                "n_runs": m,
                "n_failed": len(runs) - m,
            })
    return rows


def default_workers() -> int:
    env = os.environ.get("MSM_TIMING_THREADS")
    if env:
        return max(1, int(env))
    return 1


def run_study(cfg: SimConfig, plan: StudyPlan | None = None, **kwargs) -> SimReport:
    """Repeat simulate -> fit -> evaluate; runs use streams ``default_rng([seed, run])``."""
    plan = StudyPlan(**kwargs) if plan is None else replace(plan, **kwargs)
    if plan.workers > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            runs = list(pool.map(_one_run, [cfg] * plan.runs, [plan] * plan.runs, range(plan.runs)))
    else:
        runs = [_one_run(cfg, plan, r) for r in range(plan.runs)]
    return SimReport(cfg, plan, _aggregate(cfg, plan, runs), sorted(runs, key=lambda r: r["run"]))
