"""End-to-end fit: weight models, weights and the structural model, per stratum."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .coxfit import FittedHazardModel, HazardSpec, censoring_events, fit_cox
from .data import Dataset
from .splines import KNOT_PERCENTILES
from .structural import BLOCKS, StructuralDesign, StructuralFit, design_from_data, fit_structural
from .weights import WeightSet, build_weight_set, unit_model


@dataclass(frozen=True)
class PipelineConfig:
    """Settings of a full fit.

    ``blocks`` lists the spline blocks of the structural design and
    ``intercept`` adds the constant initiation column. ``knots`` overrides
    data-driven knots per block.
    """

    treatment_covariates: tuple = ()
    censoring_covariates: tuple = ()
    censoring_treatment_history: bool = False
    blocks: tuple = BLOCKS
    intercept: bool = True
    knots: dict | None = None
    percentiles: tuple = KNOT_PERCENTILES
    truncate: float | None = None
    weighted: bool = True

    def __post_init__(self):
        for name in ("treatment_covariates", "censoring_covariates", "blocks", "percentiles"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        bad = set(self.blocks) - set(BLOCKS)
        if bad:
            raise ValueError(f"unknown design blocks: {sorted(bad)}")

    @property
    def treatment_spec(self) -> HazardSpec:
        return HazardSpec(self.treatment_covariates)

    @property
    def censoring_spec(self) -> HazardSpec:
        return HazardSpec(self.censoring_covariates, self.censoring_treatment_history)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown pipeline settings: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class StratumFit:
    label: object
    treatment_model: FittedHazardModel
    censoring_model: FittedHazardModel
    weights: WeightSet | None
    structural: StructuralFit


@dataclass(frozen=True, eq=False)
class PipelineFit:
    config: PipelineConfig
    strata: dict = field(default_factory=dict)

    def fit(self, stratum=None) -> StructuralFit:
        """Structural fit of ``stratum``; may be omitted when there is only one."""
        if stratum is None:
            if len(self.strata) != 1:
                raise ValueError("stratum label required for a stratified fit")
            return next(iter(self.strata.values())).structural
        return self.strata[stratum].structural

    @property
    def designs(self) -> dict:
        return {k: s.structural.design for k, s in self.strata.items()}

    @property
    def betas(self) -> dict:
        return {k: s.structural.beta for k, s in self.strata.items()}


def fit_weight_models(ds: Dataset, cfg: PipelineConfig):
    """Treatment and censoring models; covariate-free or event-free cases use unit models."""
    if not cfg.weighted or not cfg.treatment_covariates or not ds.delta_a.any():
        tm = unit_model("initiation")
    else:
        tm = fit_cox(ds, cfg.treatment_spec, "initiation")
    spec = cfg.censoring_spec
    if not cfg.weighted or spec.dimension == 0 or not censoring_events(ds).any():
        cm = unit_model("censoring")
    else:
        cm = fit_cox(ds, spec, "censoring")
    return tm, cm


def fit_stratum(ds: Dataset, cfg: PipelineConfig, design: StructuralDesign | None = None,
                label=None, diagnostics=True, beta0=None) -> StratumFit:
    tm, cm = fit_weight_models(ds, cfg)
    ws = build_weight_set(ds, tm, cm, cfg.truncate)
    if design is None:
        design = design_from_data(ds, cfg.blocks, cfg.intercept, cfg.knots, cfg.percentiles)
    sf = fit_structural(ds, design, ws, stratum=label, diagnostics=diagnostics, beta0=beta0)
    return StratumFit(label, tm, cm, ws, sf)


def fit_pipeline(ds: Dataset, cfg: PipelineConfig | None = None, designs: dict | None = None,
                 diagnostics=True, starts: dict | None = None) -> PipelineFit:
    """Fit every stratum of ``ds`` separately.

    ``designs`` maps stratum labels to fixed structural designs (used by the
    bootstrap to keep knots at their full-data positions); ``starts`` maps
    them to Newton starting values.
    """
    cfg = PipelineConfig() if cfg is None else cfg
    designs = designs or {}
    starts = starts or {}
    out = {}
    for label in ds.stratum_labels():
        sub = ds if ds.strata is None else ds.stratum(label)
        out[label] = fit_stratum(sub, cfg, designs.get(label), label, diagnostics, starts.get(label))
    return PipelineFit(cfg, out)
