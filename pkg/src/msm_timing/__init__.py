"""Marginal structural proportional-hazards models for the timing of treatment initiation.

Typical use::

    ds = load_dataset("cohort.csv", schema)
    fit = fit_pipeline(ds, PipelineConfig(treatment_covariates=("cd4",)))
    mortality_at(fit.fit(), a=8.0, t0=52.0)
"""

from .causal import (
    Endpoint, SurvivalCurve, contrast, interval_mortality, mortality_at, optimal_initiation, survival_curve,
)
from .coxfit import (
    FittedHazardModel, HazardSpec, conditional_density_mass, conditional_survival, fit_cox,
    fit_cox_time_varying,
)
from .data import (
    CovariatePath, Dataset, ObservationPattern, Schema, SubjectRecord, apply_administrative_censoring,
    classify_pattern, load_dataset, write_dataset,
)
from .errors import (
    BootstrapUnstableError, ConvergenceError, InputError, NumericalError, ParseError, PositivityError,
    SeparationError, SingularInformationError, ValidationError,
)
from .inference import BootstrapPlan, BootstrapResult, Functional, bootstrap
from .pipeline import PipelineConfig, PipelineFit, fit_pipeline
from .simlab import SimConfig, SimReport, StudyPlan, run_study, scenario, simulate_dataset, true_mortality
from .splines import SplineBasis, evaluate_basis, select_knots
from .structural import StructuralDesign, StructuralFit, breslow_baseline, design_row, fit_structural
from .survcore import MarginalLaw, StepFunction, nelson_aalen, risk_indicator, to_marginal_law
from .weights import WeightSet, estimate_censoring_weights, estimate_treatment_weights, truncate_weights

__version__ = "0.1.0"
