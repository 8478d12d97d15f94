"""Single-trial engine: event-timed enrollment, start-up, backfilling, rules.

One decision happens every treatment cycle.  The engine refits the posterior
on everything observed so far, proposes the next dose (a one-level step while
a multi-cycle design is still in its DLT-free start-up, the model's
recommendation otherwise), checks the stopping rules, and then enrolls the
next wave: one escalation cohort plus, when the escalation just moved above a
dose for the first time, that dose's backfill cohorts.

Outcome draws use one RNG stream per patient, derived from the trial seed and
a per-kind counter, so switching the backfill policy never perturbs the
escalation patients' outcomes.  Posterior fits are seeded from the dataset
content (see `PosteriorCache`), making every decision a pure function of the
data.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import (
    Observation,
    PosteriorDraws,
    PriorHyper,
    UndefinedCVError,
    VAGUE_PRIOR,
    cv_mtd,
    dose_summaries,
    DoseSummaries,
    fit,
    mtd_draws,
)
from .rules import (
    CONTINUE,
    DoseTally,
    RuleConfig,
    StopDecision,
    StopReason,
    TrialSnapshot,
    evaluate_stopping,
    excluded_flags,
    within_kfold_cap,
)
from .sampler import SamplerConfig
from .scenarios import DoseGrid, PatientProfile, Scenario, sample_profile, target_for_followup
from .validation import check_count

ESCALATION = "escalation"
BACKFILL = "backfill"

# spawn-key namespaces for the per-trial RNG streams
_STREAM_ESC_PATIENT = 0
_STREAM_BF_PATIENT = 1
_STREAM_ESC_ACTIVITY = 2
_STREAM_BF_ACTIVITY = 3


class ConfigMismatchError(ValueError):
    """Design and scenario disagree about the dose grid."""


class MalformedHypotheticalError(ValueError):
    """A what-if query references unknown patients or inconsistent cycles."""


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class DesignConfig:
    """Everything fixed at design time for one trial variant."""

    grid: DoseGrid
    prior: PriorHyper = VAGUE_PRIOR
    rules: RuleConfig = RuleConfig()
    cohort_size: int = 3
    followup_cycles: int = 1
    cycle_weeks: int = 6
    backfill_policy: str = "none"
    backfill_cohorts_per_dose: int = 2
    sampler: SamplerConfig = SamplerConfig()
    restrict_recommendation_to_experimented: bool = False

    def __post_init__(self) -> None:
        check_count(self.cohort_size, "cohort_size", minimum=1)
        check_count(self.followup_cycles, "followup_cycles", minimum=1)
        check_count(self.cycle_weeks, "cycle_weeks", minimum=1)
        check_count(self.backfill_cohorts_per_dose, "backfill_cohorts_per_dose", 0)
        if self.backfill_policy not in ("none", "partial", "full"):
            raise ValueError("backfill_policy must be none, partial or full")
        if self.rules.n_max % self.cohort_size != 0 or self.rules.n_max < self.cohort_size:
            raise ValueError("n_max must be a positive multiple of cohort_size")

    @property
    def target(self) -> float:
        """Design target tau_S for the configured follow-up length."""
        return target_for_followup(self.rules.tau1, self.followup_cycles)

    def to_dict(self) -> dict:
        return {
            "doses": list(self.grid.doses),
            "prior": self.prior.to_dict(),
            "rules": self.rules.to_dict(),
            "cohort_size": self.cohort_size,
            "followup_cycles": self.followup_cycles,
            "cycle_weeks": self.cycle_weeks,
            "backfill_policy": self.backfill_policy,
            "backfill_cohorts_per_dose": self.backfill_cohorts_per_dose,
            "sampler": {
                "chains": self.sampler.chains,
                "burnin": self.sampler.burnin,
                "draws": self.sampler.draws,
                "adapt_interval": self.sampler.adapt_interval,
                "target_accept": self.sampler.target_accept,
            },
            "restrict_recommendation_to_experimented": self.restrict_recommendation_to_experimented,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DesignConfig":
        sampler = SamplerConfig(**payload.get("sampler", {}))
        return cls(
            grid=DoseGrid(tuple(payload["doses"])),
            prior=PriorHyper.from_dict(payload.get("prior", VAGUE_PRIOR.to_dict())),
            rules=RuleConfig.from_dict(payload.get("rules", {})),
            cohort_size=payload.get("cohort_size", 3),
            followup_cycles=payload.get("followup_cycles", 1),
            cycle_weeks=payload.get("cycle_weeks", 6),
            backfill_policy=payload.get("backfill_policy", "none"),
            backfill_cohorts_per_dose=payload.get("backfill_cohorts_per_dose", 2),
            sampler=sampler,
            restrict_recommendation_to_experimented=payload.get(
                "restrict_recommendation_to_experimented", False
            ),
        )


@dataclass
class PatientRecord:
    dose_idx: int
    enroll_week: int
    kind: str
    profile: PatientProfile

    def cycles_observed(self, week: int, cycle_weeks: int, total_cycles: int) -> int:
        return min(total_cycles, max(0, (week - self.enroll_week) // cycle_weeks))


@dataclass
class CohortRecord:
    dose_idx: int
    enroll_week: int
    kind: str
    activity_signal: bool


@dataclass
class TrialState:
    """Mutable trial history; a pure fold of the enrollment/observation events."""

    week: int = 0
    patients: list[PatientRecord] = field(default_factory=list)
    cohorts: list[CohortRecord] = field(default_factory=list)
    excluded: tuple[bool, ...] = ()
    surpassed: set[int] = field(default_factory=set)
    backfilled: set[int] = field(default_factory=set)
    model_phase: bool = False
    esc_patients: int = 0
    bf_patients: int = 0
    esc_cohorts: int = 0
    bf_cohorts: int = 0


@dataclass(frozen=True)
class PatientView:
    """One patient's observation status at some week.

    `dlt_cycle` is the observed DLT cycle when it has already happened
    within the observed window, else None.
    """

    dose_idx: int
    kind: str
    cycles_observed: int
    dlt_cycle: int | None = None

    @property
    def dlt_observed(self) -> bool:
        return self.dlt_cycle is not None


@dataclass(frozen=True)
class CohortView:
    """A cohort's assignment and whether its first cycle has been observed."""

    dose_idx: int
    kind: str
    observed: bool


@dataclass(frozen=True)
class EngineInputs:
    """The facts one decision is based on."""

    n_enrolled: int
    tallies: tuple[DoseTally, ...]
    hard_safety_counts: tuple[tuple[int, int], ...]
    escalation_cohorts_observed: int
    top_escalation_idx: int
    max_experimented_dose: float | None
    any_dlt_observed: bool
    observations: tuple[Observation, ...]


@dataclass(frozen=True)
class Position:
    """A decision: posterior summaries, exclusions, proposal and stop status."""

    summaries: DoseSummaries
    cv: float | None
    excluded: tuple[bool, ...]
    in_startup: bool
    next_dose_idx: int
    decision: StopDecision


@dataclass(frozen=True)
class TrialResult:
    scenario_label: str
    seed: int
    policy: str
    cycles: int
    recommendation: int | None  # 1-based dose level, None on safety stops
    stop_reason: StopReason
    n_enrolled: int
    n_dlts: int
    duration_weeks: int
    tallies: tuple[DoseTally, ...]
    trace: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_label,
            "seed": self.seed,
            "policy": self.policy,
            "cycles": self.cycles,
            "recommendation": self.recommendation,
            "stop_reason": self.stop_reason.value,
            "n_enrolled": self.n_enrolled,
            "n_dlts": self.n_dlts,
            "duration_weeks": self.duration_weeks,
            "tallies": [
                {
                    "patients": t.patients,
                    "dlts": t.dlts,
                    "escalation_cohorts": t.escalation_cohorts,
                    "backfill_cohorts": t.backfill_cohorts,
                }
                for t in self.tallies
            ],
            "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrialResult":
        return cls(
            scenario_label=payload["scenario"],
            seed=payload["seed"],
            policy=payload["policy"],
            cycles=payload["cycles"],
            recommendation=payload["recommendation"],
            stop_reason=StopReason(payload["stop_reason"]),
            n_enrolled=payload["n_enrolled"],
            n_dlts=payload["n_dlts"],
            duration_weeks=payload["duration_weeks"],
            tallies=tuple(DoseTally(**t) for t in payload["tallies"]),
            trace=tuple(payload["trace"]),
        )


@dataclass(frozen=True)
class CachedPosterior:
    summaries: DoseSummaries
    cv: float | None
    draws: PosteriorDraws | None = None


class PosteriorCache:
    """Memoized posterior summaries keyed by the exact dataset.

    The fit seed is derived from a content hash of (data, prior, sampler,
    grid, target), so identical data always produce identical draws.  That
    makes cached and freshly computed results interchangeable, keeps batch
    output independent of worker scheduling, and shares posterior noise
    across policy variants evaluated on the same data.
    """

    def __init__(self, design: DesignConfig, max_entries: int = 150_000):
        self.design = design
        self.thresholds = (design.rules.tau1,)
        self.max_entries = max_entries
        self._prefix = repr(
            (
                design.prior.to_dict(),
                design.sampler.key(),
                design.grid.doses,
                design.target,
                self.thresholds,
            )
        ).encode()
        self._store: dict[bytes, CachedPosterior] = {}
        self.hits = 0
        self.misses = 0

    def _key(self, observations: Sequence[Observation]) -> bytes:
        groups: dict[tuple[float, float, bool], int] = {}
        for obs in observations:
            k = (obs.dose, obs.weight, bool(obs.dlt))
            groups[k] = groups.get(k, 0) + 1
        canon = tuple((d, w, y, groups[(d, w, y)]) for d, w, y in sorted(groups))
        return hashlib.sha256(self._prefix + repr(canon).encode()).digest()

    def posterior(self, observations: Sequence[Observation]) -> CachedPosterior:
        key = self._key(observations)
        hit = self._store.get(key)
        if hit is not None:
            self.hits += 1
            return hit
        self.misses += 1
        seed = int.from_bytes(key[:8], "big")
        draws = fit(
            observations,
            prior=self.design.prior,
            config=self.design.sampler,
            seed=seed,
        )
        summaries = dose_summaries(draws, self.design.grid, self.thresholds)
        try:
            cv = cv_mtd(mtd_draws(draws, self.design.target))
        except UndefinedCVError:
            cv = None
        # draws are not retained: summaries and cv are all the engine needs,
        # and dropping them keeps large batch caches small
        value = CachedPosterior(summaries=summaries, cv=cv)
        if len(self._store) >= self.max_entries:
            self._store.clear()
        self._store[key] = value
        return value


def recommend_next_dose(
    summaries: DoseSummaries,
    admissible: Sequence[int],
    target: float,
    max_experimented_dose: float | None = None,
    kfold: float = 2.0,
) -> int:
    """0-based index of the admissible dose closest to the target.

    Candidates violating the k-fold cap relative to the highest experimented
    dose are skipped; exact distance ties go to the lower dose.
    """
    if not admissible:
        raise ValueError("admissible dose set is empty")
    best_idx: int | None = None
    best_dist = float("inf")
    for j in sorted(admissible):
        dose = summaries.doses[j]
        if max_experimented_dose is not None and not within_kfold_cap(
            dose, max_experimented_dose, kfold
        ):
            continue
        dist = abs(summaries.mean_tox[j] - target)
        if dist < best_dist:
            best_dist = dist
            best_idx = j
    if best_idx is None:
        # every admissible dose sits above the cap; fall back to the highest
        # admissible dose at or below the experimented maximum
        below = [j for j in admissible if summaries.doses[j] <= max_experimented_dose]
        best_idx = max(below) if below else min(admissible)
    return best_idx


def _views(design: DesignConfig, state: TrialState, week: int) -> list[PatientView]:
    views = []
    for p in state.patients:
        u = p.cycles_observed(week, design.cycle_weeks, design.followup_cycles)
        dlt_cycle = p.profile.dlt_cycle if p.profile.has_dlt_by(u) else None
        views.append(
            PatientView(dose_idx=p.dose_idx, kind=p.kind, cycles_observed=u, dlt_cycle=dlt_cycle)
        )
    return views


def _observations(design: DesignConfig, views: Sequence[PatientView]) -> tuple[Observation, ...]:
    out = []
    total = design.followup_cycles
    for v in views:
        if v.cycles_observed <= 0:
            continue
        dose = design.grid[v.dose_idx]
        if v.dlt_observed:
            out.append(Observation(dose=dose, dlt=True, weight=1.0))
        else:
            out.append(
                Observation(dose=dose, dlt=False, weight=v.cycles_observed / total)
            )
    return tuple(out)


def _cohort_views(
    cohorts: Sequence[CohortRecord], week: int, cycle_weeks: int
) -> tuple[CohortView, ...]:
    return tuple(
        CohortView(
            dose_idx=c.dose_idx,
            kind=c.kind,
            observed=week - c.enroll_week >= cycle_weeks,
        )
        for c in cohorts
    )


def _inputs_from_views(
    design: DesignConfig,
    views: Sequence[PatientView],
    cohorts: Sequence[CohortView],
) -> EngineInputs:
    n_doses = len(design.grid)
    patients = [0] * n_doses
    dlts = [0] * n_doses
    evaluable = [0] * n_doses
    esc_cohorts = [0] * n_doses
    bf_cohorts = [0] * n_doses
    esc_observed = 0
    top_esc = 0
    max_dose = None
    for v in views:
        patients[v.dose_idx] += 1
        if v.dlt_observed:
            dlts[v.dose_idx] += 1
        if v.cycles_observed >= 1:
            evaluable[v.dose_idx] += 1
        dose = design.grid[v.dose_idx]
        max_dose = dose if max_dose is None else max(max_dose, dose)
    for c in cohorts:
        if c.kind == ESCALATION:
            esc_cohorts[c.dose_idx] += 1
            top_esc = max(top_esc, c.dose_idx)
            if c.observed:
                esc_observed += 1
        else:
            bf_cohorts[c.dose_idx] += 1
    tallies = tuple(
        DoseTally(
            patients=patients[j],
            dlts=dlts[j],
            escalation_cohorts=esc_cohorts[j],
            backfill_cohorts=bf_cohorts[j],
        )
        for j in range(n_doses)
    )
    return EngineInputs(
        n_enrolled=len(views),
        tallies=tallies,
        hard_safety_counts=tuple((dlts[j], evaluable[j]) for j in range(n_doses)),
        escalation_cohorts_observed=esc_observed,
        top_escalation_idx=top_esc,
        max_experimented_dose=max_dose,
        any_dlt_observed=any(v.dlt_observed for v in views),
        observations=_observations(design, views),
    )


def evaluate_position(
    design: DesignConfig, inputs: EngineInputs, cache: PosteriorCache
) -> Position:
    """Fit the posterior and derive exclusions, the next-dose proposal and
    the stopping decision for one trial position."""
    rules = design.rules
    post = cache.posterior(inputs.observations)
    flags = excluded_flags(inputs.hard_safety_counts, rules.tau1, rules.psi)

    in_startup = design.followup_cycles > 1 and not inputs.any_dlt_observed
    if flags[0]:
        next_idx = 0  # placeholder: the hard-safety stop fires first
    elif in_startup:
        next_idx = min(inputs.top_escalation_idx + 1, len(design.grid) - 1)
        while next_idx > 0 and flags[next_idx]:
            next_idx -= 1
        if inputs.max_experimented_dose is not None:
            while next_idx > 0 and not within_kfold_cap(
                design.grid[next_idx], inputs.max_experimented_dose, rules.kfold
            ):
                next_idx -= 1
    else:
        admissible = [j for j in range(len(design.grid)) if not flags[j]]
        next_idx = recommend_next_dose(
            post.summaries,
            admissible,
            design.target,
            inputs.max_experimented_dose,
            rules.kfold,
        )

    snapshot = TrialSnapshot(
        n_enrolled=inputs.n_enrolled,
        tallies=inputs.tallies,
        escalation_cohorts_observed=inputs.escalation_cohorts_observed,
        hard_safety_counts=inputs.hard_safety_counts,
    )
    decision = evaluate_stopping(snapshot, post.summaries, post.cv, next_idx, rules)
    return Position(
        summaries=post.summaries,
        cv=post.cv,
        excluded=flags,
        in_startup=in_startup,
        next_dose_idx=next_idx,
        decision=decision,
    )


def _enroll_cohort(
    design: DesignConfig,
    scenario: Scenario,
    state: TrialState,
    seed: int,
    dose_idx: int,
    kind: str,
    week: int,
) -> None:
    if kind == ESCALATION:
        activity_rng = derive_rng(seed, _STREAM_ESC_ACTIVITY, state.esc_cohorts)
        state.esc_cohorts += 1
    else:
        activity_rng = derive_rng(seed, _STREAM_BF_ACTIVITY, state.bf_cohorts)
        state.bf_cohorts += 1
    signal = bool(activity_rng.random() < scenario.activity[dose_idx])
    state.cohorts.append(
        CohortRecord(dose_idx=dose_idx, enroll_week=week, kind=kind, activity_signal=signal)
    )
    for _ in range(design.cohort_size):
        if kind == ESCALATION:
            stream = derive_rng(seed, _STREAM_ESC_PATIENT, state.esc_patients)
            state.esc_patients += 1
        else:
            stream = derive_rng(seed, _STREAM_BF_PATIENT, state.bf_patients)
            state.bf_patients += 1
        profile = sample_profile(scenario, dose_idx, design.followup_cycles, stream)
        state.patients.append(
            PatientRecord(dose_idx=dose_idx, enroll_week=week, kind=kind, profile=profile)
        )


def _activity_seen_at_or_below(
    state: TrialState, dose_idx: int, week: int, cycle_weeks: int
) -> bool:
    # a cohort's signal is read at the end of its first cycle
    for c in state.cohorts:
        if (
            c.activity_signal
            and c.dose_idx <= dose_idx
            and c.enroll_week + cycle_weeks <= week
        ):
            return True
    return False


def _enroll_wave(
    design: DesignConfig,
    scenario: Scenario,
    state: TrialState,
    seed: int,
    next_idx: int,
    week: int,
) -> dict:
    n_max = design.rules.n_max
    newly_surpassed = [j for j in range(next_idx) if j not in state.surpassed]
    state.surpassed.update(range(next_idx))

    if design.backfill_policy == "full":
        eligible = newly_surpassed
    elif design.backfill_policy == "partial":
        eligible = [
            j
            for j in newly_surpassed
            if _activity_seen_at_or_below(state, j, week, design.cycle_weeks)
        ]
    else:
        eligible = []

    assert len(state.patients) + design.cohort_size <= n_max
    _enroll_cohort(design, scenario, state, seed, next_idx, ESCALATION, week)
    backfill_levels = []
    for j in sorted(eligible):
        for _ in range(design.backfill_cohorts_per_dose):
            if len(state.patients) + design.cohort_size > n_max:
                break
            _enroll_cohort(design, scenario, state, seed, j, BACKFILL, week)
            state.backfilled.add(j)
            backfill_levels.append(j + 1)
    return {"escalation_level": next_idx + 1, "backfill_levels": backfill_levels}


def _completion_week(design: DesignConfig, patient: PatientRecord) -> int:
    total = design.followup_cycles
    cycles = total
    if patient.profile.dlt_cycle is not None:
        cycles = min(patient.profile.dlt_cycle, total)
    return patient.enroll_week + design.cycle_weeks * cycles


def _final_recommendation(
    design: DesignConfig, state: TrialState, cache: PosteriorCache, week: int
) -> tuple[int | None, DoseSummaries]:
    views = _views(design, state, week)
    cohort_views = _cohort_views(state.cohorts, week, design.cycle_weeks)
    inputs = _inputs_from_views(design, views, cohort_views)
    post = cache.posterior(inputs.observations)
    flags = excluded_flags(inputs.hard_safety_counts, design.rules.tau1, design.rules.psi)
    admissible = [j for j in range(len(design.grid)) if not flags[j]]
    if design.restrict_recommendation_to_experimented:
        tried = {p.dose_idx for p in state.patients}
        admissible = [j for j in admissible if j in tried]
    if not admissible:
        return None, post.summaries
    best, best_dist = None, float("inf")
    for j in admissible:
        dist = abs(post.summaries.mean_tox[j] - design.target)
        if dist < best_dist:
            best, best_dist = j, dist
    return best, post.summaries


def run_trial(
    design: DesignConfig,
    scenario: Scenario,
    seed: int,
    cache: PosteriorCache | None = None,
) -> TrialResult:
    """Simulate one complete trial; bit-identical for identical inputs."""
    if tuple(scenario.grid.doses) != tuple(design.grid.doses):
        raise ConfigMismatchError("scenario dose grid does not match the design grid")
    if cache is None:
        cache = PosteriorCache(design)
    state = TrialState()
    trace: list[dict] = []
    _enroll_cohort(design, scenario, state, seed, 0, ESCALATION, week=0)

    decision = CONTINUE
    while True:
        state.week += design.cycle_weeks
        week = state.week
        views = _views(design, state, week)
        cohort_views = _cohort_views(state.cohorts, week, design.cycle_weeks)
        inputs = _inputs_from_views(design, views, cohort_views)
        position = evaluate_position(design, inputs, cache)
        state.excluded = position.excluded
        state.model_phase = not position.in_startup
        decision = position.decision
        trace.append(
            {
                "week": week,
                "n_enrolled": inputs.n_enrolled,
                "n_dlts_observed": sum(d for d, _ in inputs.hard_safety_counts),
                "mean_tox": list(position.summaries.mean_tox),
                "cv_mtd": position.cv,
                "startup": position.in_startup,
                "excluded_levels": [j + 1 for j, f in enumerate(position.excluded) if f],
                "proposed_level": position.next_dose_idx + 1,
                "stop_reason": decision.reason.value if decision.stopped else None,
                "wave": None,
            }
        )
        if decision.stopped:
            break
        wave = _enroll_wave(design, scenario, state, seed, position.next_dose_idx, week)
        trace[-1]["wave"] = wave

    duration = max(_completion_week(design, p) for p in state.patients)
    recommendation = None
    stop_reason = decision.reason
    if decision.recommends_dose:
        rec_idx, _ = _final_recommendation(design, state, cache, duration)
        if rec_idx is None:
            # completed follow-up pushed even the lowest dose over the hard
            # safety bound: report a hard-safety stop with no recommendation
            stop_reason = StopReason.HARD_SAFETY
        else:
            recommendation = rec_idx + 1

    final_views = _views(design, state, duration)
    final_inputs = _inputs_from_views(
        design, final_views, _cohort_views(state.cohorts, duration, design.cycle_weeks)
    )
    n_dlts = sum(1 for p in state.patients if p.profile.dlt_cycle is not None)
    return TrialResult(
        scenario_label=scenario.label,
        seed=seed,
        policy=design.backfill_policy,
        cycles=design.followup_cycles,
        recommendation=recommendation,
        stop_reason=stop_reason,
        n_enrolled=len(state.patients),
        n_dlts=n_dlts,
        duration_weeks=duration,
        tallies=final_inputs.tallies,
        trace=tuple(trace),
    )


@dataclass(frozen=True)
class HypotheticalOutcome:
    patient: int
    cycle: int
    dlt: bool


@dataclass(frozen=True)
class WhatIfResult:
    recommendation_level: int
    decision: StopDecision
    mean_tox: tuple[float, ...]
    cv: float | None
    excluded_levels: tuple[int, ...]


def what_if_on_views(
    design: DesignConfig,
    views: Sequence[PatientView],
    cohorts: Sequence[CohortView],
    hypothetical: Sequence[HypotheticalOutcome],
    cache: PosteriorCache | None = None,
) -> WhatIfResult:
    """Evaluate the next recommendation and rule status under hypothetical
    future (or restated) outcomes.  Pure: nothing is mutated."""
    if cache is None:
        cache = PosteriorCache(design)
    total = design.followup_cycles
    merged: dict[int, dict] = {}
    for h in hypothetical:
        if h.patient < 0 or h.patient >= len(views):
            raise MalformedHypotheticalError(f"unknown patient {h.patient}")
        if not 1 <= h.cycle <= total:
            raise MalformedHypotheticalError(f"cycle {h.cycle} outside 1..{total}")
        v = views[h.patient]
        if h.cycle <= v.cycles_observed:
            actual = v.dlt_cycle == h.cycle
            if bool(h.dlt) != actual:
                raise MalformedHypotheticalError(
                    f"patient {h.patient} cycle {h.cycle} contradicts observed data"
                )
        entry = merged.setdefault(h.patient, {"max_cycle": 0, "dlt_cycle": None})
        entry["max_cycle"] = max(entry["max_cycle"], h.cycle)
        if h.dlt and entry["dlt_cycle"] is None:
            entry["dlt_cycle"] = h.cycle

    adjusted: list[PatientView] = []
    for i, v in enumerate(views):
        extra = merged.get(i)
        if extra is None:
            adjusted.append(v)
            continue
        u = max(v.cycles_observed, extra["max_cycle"])
        dlt_cycle = v.dlt_cycle if v.dlt_cycle is not None else extra["dlt_cycle"]
        adjusted.append(
            PatientView(dose_idx=v.dose_idx, kind=v.kind, cycles_observed=u, dlt_cycle=dlt_cycle)
        )
    inputs = _inputs_from_views(design, adjusted, cohorts)
    position = evaluate_position(design, inputs, cache)
    return WhatIfResult(
        recommendation_level=position.next_dose_idx + 1,
        decision=position.decision,
        mean_tox=position.summaries.mean_tox,
        cv=position.cv,
        excluded_levels=tuple(j + 1 for j, f in enumerate(position.excluded) if f),
    )


def what_if(
    design: DesignConfig,
    state: TrialState,
    hypothetical: Sequence[HypotheticalOutcome],
    cache: PosteriorCache | None = None,
) -> WhatIfResult:
    """`what_if_on_views` against a live TrialState at its current week."""
    views = _views(design, state, state.week)
    cohort_views = _cohort_views(state.cohorts, state.week, design.cycle_weeks)
    return what_if_on_views(design, views, cohort_views, hypothetical, cache)
