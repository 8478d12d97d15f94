"""Enforcement and stopping rules for the escalation designs.

Two enforcement rules constrain which doses may be assigned next (a
Beta-binomial hard-safety exclusion that cascades upward, and a k-fold cap on
dose jumps); six stopping rules end the trial.  Stopping is evaluated in a
fixed priority order: hard safety, lowest dose unsafe, maximum patients,
highest dose very safe, sufficient information, precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from scipy.special import betainc

from .model import DoseSummaries
from .validation import check_count, check_open_probability


class StopReason(str, Enum):
    NONE = "none"
    SUFFICIENT_INFORMATION = "sufficient-information"
    LOWEST_UNSAFE = "lowest-unsafe"
    HIGHEST_VERY_SAFE = "highest-very-safe"
    PRECISION = "precision"
    HARD_SAFETY = "hard-safety"
    MAX_PATIENTS = "max-patients"


#: Stop reasons that end the trial without any dose recommendation.
NO_RECOMMENDATION_REASONS = frozenset(
    {StopReason.HARD_SAFETY, StopReason.LOWEST_UNSAFE}
)


@dataclass(frozen=True)
class RuleConfig:
    """Thresholds for the enforcement and stopping rules."""

    tau1: float = 0.3
    psi: float = 0.95
    kfold: float = 2.0
    unsafe_prob: float = 0.80
    safe_prob: float = 0.80
    cv_limit: float = 0.30
    min_escalation_cohorts_for_precision: int = 3
    cohorts_for_sufficient_info: int = 3
    n_max: int = 54

    def __post_init__(self) -> None:
        check_open_probability(self.tau1, "tau1")
        check_open_probability(self.psi, "psi")
        check_open_probability(self.unsafe_prob, "unsafe_prob")
        check_open_probability(self.safe_prob, "safe_prob")
        if self.kfold <= 1.0:
            raise ValueError("kfold must exceed 1")
        if self.cv_limit <= 0.0:
            raise ValueError("cv_limit must be positive")
        check_count(self.min_escalation_cohorts_for_precision, "precision cohorts", 1)
        check_count(self.cohorts_for_sufficient_info, "sufficient-info cohorts", 1)
        check_count(self.n_max, "n_max", 1)

    def to_dict(self) -> dict:
        return {
            "tau1": self.tau1,
            "psi": self.psi,
            "kfold": self.kfold,
            "unsafe_prob": self.unsafe_prob,
            "safe_prob": self.safe_prob,
            "cv_limit": self.cv_limit,
            "min_escalation_cohorts_for_precision": self.min_escalation_cohorts_for_precision,
            "cohorts_for_sufficient_info": self.cohorts_for_sufficient_info,
            "n_max": self.n_max,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RuleConfig":
        return cls(**payload)


@dataclass(frozen=True)
class DoseTally:
    """Observed counts at one dose."""

    patients: int = 0
    dlts: int = 0
    escalation_cohorts: int = 0
    backfill_cohorts: int = 0

    def __post_init__(self) -> None:
        if min(self.patients, self.dlts, self.escalation_cohorts, self.backfill_cohorts) < 0:
            raise ValueError("tally counts must be nonnegative")
        if self.dlts > self.patients:
            raise ValueError("cannot observe more DLTs than patients")

    @property
    def cohorts(self) -> int:
        return self.escalation_cohorts + self.backfill_cohorts


@dataclass(frozen=True)
class StopDecision:
    stopped: bool
    reason: StopReason
    recommends_dose: bool

    def __post_init__(self) -> None:
        if (self.reason is StopReason.NONE) != (not self.stopped):
            raise ValueError("reason must be NONE exactly when not stopped")
        if self.reason in NO_RECOMMENDATION_REASONS and self.recommends_dose:
            raise ValueError(f"{self.reason.value} never recommends a dose")


CONTINUE = StopDecision(stopped=False, reason=StopReason.NONE, recommends_dose=True)


def hard_safety_excluded(
    dlts: int, n: int, tau1: float = 0.3, psi: float = 0.95
) -> bool:
    """True when P(p > tau1) > psi under a Beta(1 + dlts, 1 + n - dlts) posterior.

    The caller cascades the exclusion to every higher dose.
    """
    check_count(n, "n", 0)
    check_count(dlts, "dlts", 0)
    if dlts > n:
        raise ValueError("dlts cannot exceed n")
    tail = 1.0 - betainc(1 + dlts, 1 + n - dlts, tau1)
    return bool(tail > psi)


def within_kfold_cap(
    candidate_dose: float, max_experimented_dose: float, kfold: float = 2.0
) -> bool:
    """True when the candidate dose obeys the k-fold-rise cap."""
    if max_experimented_dose <= 0.0:
        raise ValueError("max_experimented_dose must be positive")
    return candidate_dose <= kfold * max_experimented_dose


def excluded_flags(
    counts: tuple[tuple[int, int], ...], tau1: float, psi: float
) -> tuple[bool, ...]:
    """Per-dose hard-safety exclusion with the upward cascade applied.

    `counts` holds (observed DLTs, evaluable patients) per dose; a dose is
    evaluable once at least one cycle has been observed.
    """
    flags = []
    tripped = False
    for dlts, n in counts:
        tripped = tripped or hard_safety_excluded(dlts, n, tau1, psi)
        flags.append(tripped)
    return tuple(flags)


@dataclass(frozen=True)
class TrialSnapshot:
    """The facts about a trial the stopping rules consume."""

    n_enrolled: int
    tallies: tuple[DoseTally, ...]
    #: escalation (non-backfill) cohorts with at least one observed cycle
    escalation_cohorts_observed: int
    #: (observed DLTs, evaluable patients) per dose for the hard-safety rule
    hard_safety_counts: tuple[tuple[int, int], ...]


def evaluate_stopping(
    snapshot: TrialSnapshot,
    summaries: DoseSummaries,
    mtd_cv: float | None,
    next_dose_idx: int,
    config: RuleConfig,
) -> StopDecision:
    """Check the six stopping rules in priority order and return the first hit.

    `mtd_cv` may be None when the CV is unavailable (for instance an undefined
    median); the precision rule then cannot fire.  `next_dose_idx` is the
    0-based dose proposed for the next cohort.
    """
    tallies = snapshot.tallies
    flags = excluded_flags(snapshot.hard_safety_counts, config.tau1, config.psi)

    if flags[0]:
        return StopDecision(True, StopReason.HARD_SAFETY, recommends_dose=False)

    tail_above = summaries.tail_above[config.tau1]
    tail_below = summaries.tail_below[config.tau1]
    if tallies[0].cohorts >= 1 and tail_above[0] > config.unsafe_prob:
        return StopDecision(True, StopReason.LOWEST_UNSAFE, recommends_dose=False)

    if snapshot.n_enrolled >= config.n_max:
        return StopDecision(True, StopReason.MAX_PATIENTS, recommends_dose=True)

    if tallies[-1].cohorts >= 1 and tail_below[-1] > config.safe_prob:
        return StopDecision(True, StopReason.HIGHEST_VERY_SAFE, recommends_dose=True)

    if tallies[next_dose_idx].escalation_cohorts >= config.cohorts_for_sufficient_info:
        return StopDecision(True, StopReason.SUFFICIENT_INFORMATION, recommends_dose=True)

    precision_ready = (
        snapshot.escalation_cohorts_observed
        >= config.min_escalation_cohorts_for_precision
    )
    if precision_ready and mtd_cv is not None and 0.0 <= mtd_cv < config.cv_limit:
        return StopDecision(True, StopReason.PRECISION, recommends_dose=True)

    return CONTINUE
