"""Sharp bounds on counterfactual policy transforms over finite structural
models, robust policy selection and finite-sample guarantees."""

from .complexity import (
    ImplicitRademacher,
    RademacherDraw,
    RestrictedClass,
    empirical_covering_number,
    rademacher_complexity,
    rademacher_hlb,
    restrict_hlb,
)
from .decision import (
    Certificate,
    EmeSelection,
    certificate_cn,
    certificate_value,
    default_epsilon,
    eme_from_curve,
    eme_select,
    true_regret,
)
from .envelope import (
    EnvelopeCurve,
    EnvelopePoint,
    WeightedMeasure,
    empirical_measure,
    envelope_curve,
    lower_envelope,
    upper_envelope,
)
from .errors import BudgetError, ContractError
from .experiment import (
    ExperimentReport,
    default_coverage_truth,
    default_rate_truth,
    run_experiment,
)
from .levelset import (
    DeltaSchedule,
    LevelSetResult,
    StepBound,
    default_schedule,
    delta_star,
    empirical_regret_curve,
    flat_transform,
    level_set,
    level_set_sandwich,
    regret_curve,
    sharp_transform,
    step_bound,
    t_sequence,
)
from .model import (
    CounterfactualMap,
    ErrorBoundConstants,
    FactualMap,
    MomentSpec,
    Objective,
    PolicyGrid,
    Sample,
    StructuralModel,
    SupportSpec,
    ThetaGrid,
    h_integrand,
    mu_star,
    validate_model,
)
from .oracle import OracleValue, lp_value_at_theta, oracle_envelope, pointwise_value, solve_lp
from .program_eval import PeTruth, ProgramEvalConfig, build_program_evaluation
from .sdc import SdcConfig, SdcTruth, build_sdc, sdc_support, tau_hat
from .serialize import (
    SPEC_VERSION,
    load_document,
    model_from_document,
    read_sample,
    read_weights,
    truth_from_document,
    write_curve_csv,
    write_json,
    write_sample,
    write_weights,
)
from .simulate import draw_sample, model_for, population_measure

__version__ = SPEC_VERSION

__all__ = [
    "BudgetError",
    "Certificate",
    "ContractError",
    "CounterfactualMap",
    "DeltaSchedule",
    "EmeSelection",
    "EnvelopeCurve",
    "EnvelopePoint",
    "ErrorBoundConstants",
    "ExperimentReport",
    "FactualMap",
    "ImplicitRademacher",
    "LevelSetResult",
    "MomentSpec",
    "Objective",
    "OracleValue",
    "PeTruth",
    "PolicyGrid",
    "ProgramEvalConfig",
    "RademacherDraw",
    "RestrictedClass",
    "Sample",
    "SdcConfig",
    "SdcTruth",
    "SPEC_VERSION",
    "StepBound",
    "StructuralModel",
    "SupportSpec",
    "ThetaGrid",
    "WeightedMeasure",
    "build_program_evaluation",
    "build_sdc",
    "sdc_support",
    "certificate_cn",
    "certificate_value",
    "default_coverage_truth",
    "default_epsilon",
    "default_rate_truth",
    "default_schedule",
    "delta_star",
    "draw_sample",
    "eme_from_curve",
    "eme_select",
    "empirical_covering_number",
    "empirical_measure",
    "empirical_regret_curve",
    "envelope_curve",
    "flat_transform",
    "h_integrand",
    "level_set",
    "level_set_sandwich",
    "load_document",
    "lower_envelope",
    "lp_value_at_theta",
    "model_for",
    "model_from_document",
    "mu_star",
    "oracle_envelope",
    "pointwise_value",
    "population_measure",
    "rademacher_complexity",
    "rademacher_hlb",
    "read_sample",
    "read_weights",
    "regret_curve",
    "restrict_hlb",
    "run_experiment",
    "sharp_transform",
    "solve_lp",
    "step_bound",
    "t_sequence",
    "tau_hat",
    "true_regret",
    "truth_from_document",
    "upper_envelope",
    "validate_model",
    "write_curve_csv",
    "write_json",
    "write_sample",
    "write_weights",
]
