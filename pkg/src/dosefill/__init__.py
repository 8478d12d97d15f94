"""Simulation and live-conduct engine for model-based phase I dose-escalation
trials with backfilling."""

from .metrics import (
    ACCEPTABLE_BAND,
    MetricsConfig,
    ScenarioSummary,
    aggregate,
    classify_selection,
    run_benchmark,
)
from .model import (
    BUILTIN_PRIORS,
    DoseSummaries,
    DoseToxicityModel,
    Observation,
    PosteriorDraws,
    PriorHyper,
    UndefinedCVError,
    VAGUE_PRIOR,
    cv_mtd,
    dose_summaries,
    fit,
    log_posterior,
    mtd_draws,
    tite_weight,
    tox_prob,
)
from .rules import (
    DoseTally,
    RuleConfig,
    StopDecision,
    StopReason,
    TrialSnapshot,
    evaluate_stopping,
    hard_safety_excluded,
    within_kfold_cap,
)
from .sampler import SamplerConfig, SamplerError
from .scenarios import (
    DoseGrid,
    PatientProfile,
    Scenario,
    builtin_scenarios,
    dump_scenarios,
    extend_cycle_prob,
    load_scenarios,
    sample_profile,
    target_for_followup,
)
from .trial import (
    ConfigMismatchError,
    DesignConfig,
    HypotheticalOutcome,
    MalformedHypotheticalError,
    PosteriorCache,
    TrialResult,
    TrialState,
    recommend_next_dose,
    run_trial,
    what_if,
)

__version__ = "0.1.0"

__all__ = [
    "ACCEPTABLE_BAND",
    "BUILTIN_PRIORS",
    "ConfigMismatchError",
    "DesignConfig",
    "DoseGrid",
    "DoseSummaries",
    "DoseTally",
    "DoseToxicityModel",
    "HypotheticalOutcome",
    "MalformedHypotheticalError",
    "MetricsConfig",
    "Observation",
    "PatientProfile",
    "PosteriorCache",
    "PosteriorDraws",
    "PriorHyper",
    "RuleConfig",
    "SamplerConfig",
    "SamplerError",
    "Scenario",
    "ScenarioSummary",
    "StopDecision",
    "StopReason",
    "TrialResult",
    "TrialSnapshot",
    "TrialState",
    "UndefinedCVError",
    "VAGUE_PRIOR",
    "aggregate",
    "builtin_scenarios",
    "classify_selection",
    "cv_mtd",
    "dose_summaries",
    "dump_scenarios",
    "evaluate_stopping",
    "extend_cycle_prob",
    "fit",
    "hard_safety_excluded",
    "load_scenarios",
    "log_posterior",
    "mtd_draws",
    "recommend_next_dose",
    "run_benchmark",
    "run_trial",
    "sample_profile",
    "target_for_followup",
    "tite_weight",
    "tox_prob",
    "what_if",
    "within_kfold_cap",
]
