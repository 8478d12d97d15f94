"""Operating characteristics: selection classification, aggregation and the
non-parametric benchmark.

A selection is *correct* when it names the scenario's true MTD, or when a
safety stop fires in a scenario whose every dose is truly over-toxic (and,
optionally, when a very-safe stop fires in a scenario whose every dose sits
far below target).  A selection is *acceptable* when the chosen dose's true
cycle-1 DLT probability lies inside the acceptable band.

The benchmark gives every simulated patient a complete latent tolerance
profile at the full sample size and selects the dose whose empirical toxicity
rate is closest to target; it bounds what any design could achieve.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .rules import NO_RECOMMENDATION_REASONS, StopReason
from .scenarios import Scenario, extend_cycle_prob, target_for_followup
from .trial import TrialResult

ACCEPTABLE_BAND = (0.18, 0.33)


@dataclass(frozen=True)
class MetricsConfig:
    acceptable_band: tuple[float, float] = ACCEPTABLE_BAND
    #: count a very-safe stop as correct when the scenario has no MTD and
    #: every dose is below the acceptable band
    safe_stop_correct_when_no_mtd: bool = True

    @property
    def overdose_bound(self) -> float:
        return self.acceptable_band[1]


@dataclass(frozen=True)
class ScenarioSummary:
    """Cross-run aggregate for one (scenario, design variant) cell."""

    scenario: str
    policy: str
    cycles: int
    prior: str
    n_trials: int
    pcs: float
    pas: float
    mean_n: float
    mean_duration: float | None
    mean_dlts: float
    pct_dlt: float
    mean_overdosed: float
    selections: tuple[int, ...]
    n_no_recommendation: int
    stop_reasons: dict[str, int] = field(default_factory=dict)

    def histogram_total(self) -> int:
        return sum(self.selections) + self.n_no_recommendation


def classify_selection(
    result: TrialResult,
    scenario: Scenario,
    config: MetricsConfig = MetricsConfig(),
) -> tuple[bool, bool]:
    """(correct, acceptable) flags for one finished trial."""
    lower, upper = config.acceptable_band
    correct = False
    if result.recommendation is not None and scenario.mtd_index is not None:
        correct = result.recommendation == scenario.mtd_index
    if result.stop_reason in NO_RECOMMENDATION_REASONS:
        correct = min(scenario.p1) > upper
    if (
        config.safe_stop_correct_when_no_mtd
        and scenario.mtd_index is None
        and max(scenario.p1) < lower
    ):
        correct = result.stop_reason is StopReason.HIGHEST_VERY_SAFE
    acceptable = False
    if result.recommendation is not None:
        acceptable = lower <= scenario.p1[result.recommendation - 1] <= upper
    return correct, acceptable


def aggregate(
    results: list[TrialResult],
    scenario: Scenario,
    prior_label: str = "vague",
    config: MetricsConfig = MetricsConfig(),
) -> ScenarioSummary:
    """Fold per-trial results into a ScenarioSummary (permutation invariant)."""
    if not results:
        raise ValueError("no results to aggregate")
    n_doses = len(scenario.grid)
    selections = [0] * n_doses
    n_none = 0
    n_correct = 0
    n_acceptable = 0
    stop_reasons: dict[str, int] = {}
    sizes, durations, dlts, pcts, overdosed = [], [], [], [], []
    for r in results:
        correct, acceptable = classify_selection(r, scenario, config)
        n_correct += correct
        n_acceptable += acceptable
        if r.recommendation is None:
            n_none += 1
        else:
            selections[r.recommendation - 1] += 1
        stop_reasons[r.stop_reason.value] = stop_reasons.get(r.stop_reason.value, 0) + 1
        sizes.append(r.n_enrolled)
        durations.append(r.duration_weeks)
        dlts.append(r.n_dlts)
        pcts.append(100.0 * r.n_dlts / r.n_enrolled)
        over = sum(
            t.patients
            for t, p1 in zip(r.tallies, scenario.p1)
            if p1 > config.overdose_bound
        )
        overdosed.append(over)
    n = len(results)

    def mean(values):
        # sorted reduction keeps the fold bit-identical under permutation
        return float(np.mean(np.sort(np.asarray(values, dtype=float))))

    return ScenarioSummary(
        scenario=scenario.label,
        policy=results[0].policy,
        cycles=results[0].cycles,
        prior=prior_label,
        n_trials=n,
        pcs=n_correct / n,
        pas=n_acceptable / n,
        mean_n=mean(sizes),
        mean_duration=mean(durations),
        mean_dlts=mean(dlts),
        pct_dlt=mean(pcts),
        mean_overdosed=mean(overdosed),
        selections=tuple(selections),
        n_no_recommendation=n_none,
        stop_reasons=stop_reasons,
    )


def run_benchmark(
    scenario: Scenario,
    n_max: int = 54,
    cycles: int = 1,
    tau1: float = 0.3,
    sims: int = 5000,
    seed: int = 0,
    config: MetricsConfig = MetricsConfig(),
    safety_classification: bool = True,
) -> ScenarioSummary:
    """Non-parametric benchmark summary for one scenario.

    Every simulated trial gives all `n_max` patients a latent tolerance
    u ~ U(0,1) and the complete profile y_j = 1{u <= p_j}; the empirical
    per-dose rates pick the dose closest to target.  No stopping rules apply
    and the full sample size is always used (duration is undefined).  With
    `safety_classification` the benchmark declares no-dose when every
    empirical rate exceeds the acceptable band's upper edge.
    """
    p_true = np.array(
        [extend_cycle_prob(p, cycles) for p in scenario.p1], dtype=float
    )
    if np.any(np.diff(p_true) < 0.0):
        raise ValueError("benchmark requires monotone nondecreasing toxicity")
    target = target_for_followup(tau1, cycles)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(hash_label(scenario.label),)))
    u = rng.random((sims, n_max))
    y = u[:, :, None] <= p_true[None, None, :]
    p_hat = y.mean(axis=1)
    dist = np.abs(p_hat - target)
    pick = np.argmin(dist, axis=1)  # argmin takes the first (lower) dose on ties
    upper = config.overdose_bound
    no_dose = np.zeros(sims, dtype=bool)
    if safety_classification:
        no_dose = np.all(p_hat > upper, axis=1)

    selections = [0] * len(scenario.grid)
    n_correct = 0
    n_acceptable = 0
    lower = config.acceptable_band[0]
    all_unsafe = min(scenario.p1) > upper
    for s in range(sims):
        if no_dose[s]:
            n_correct += all_unsafe
            continue
        level = int(pick[s]) + 1
        selections[level - 1] += 1
        if scenario.mtd_index is not None and level == scenario.mtd_index:
            n_correct += 1
        if lower <= scenario.p1[level - 1] <= upper:
            n_acceptable += 1
    return ScenarioSummary(
        scenario=scenario.label,
        policy="benchmark",
        cycles=cycles,
        prior="none",
        n_trials=sims,
        pcs=n_correct / sims,
        pas=n_acceptable / sims,
        mean_n=float(n_max),
        mean_duration=None,
        mean_dlts=0.0,
        pct_dlt=0.0,
        mean_overdosed=0.0,
        selections=tuple(selections),
        n_no_recommendation=int(no_dose.sum()),
        stop_reasons={},
    )


def hash_label(label: str) -> int:
    # stable small integer from a label, for seed derivation
    return sum((i + 1) * b for i, b in enumerate(label.encode())) % (2**31)


SUMMARY_COLUMNS = (
    "scenario",
    "policy",
    "cycles",
    "prior",
    "n_trials",
    "pcs",
    "pas",
    "mean_n",
    "mean_duration_weeks",
    "mean_dlts",
    "pct_dlt",
    "mean_overdosed",
)


def summaries_to_csv(
    summaries: list[ScenarioSummary],
    manifest_hash: str,
    master_seed: int,
) -> str:
    """Fixed-column CSV with the manifest hash and seed embedded up front."""
    n_doses = max(len(s.selections) for s in summaries)
    reasons = sorted({r for s in summaries for r in s.stop_reasons})
    buf = io.StringIO()
    buf.write(f"# manifest_hash={manifest_hash}\n")
    buf.write(f"# master_seed={master_seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    header = (
        list(SUMMARY_COLUMNS)
        + [f"sel_{j + 1}" for j in range(n_doses)]
        + ["sel_none"]
        + [f"stop_{r}" for r in reasons]
    )
    writer.writerow(header)
    for s in summaries:
        row = [
            s.scenario,
            s.policy,
            s.cycles,
            s.prior,
            s.n_trials,
            repr(s.pcs),
            repr(s.pas),
            repr(s.mean_n),
            "" if s.mean_duration is None else repr(s.mean_duration),
            repr(s.mean_dlts),
            repr(s.pct_dlt),
            repr(s.mean_overdosed),
        ]
        row += [s.selections[j] if j < len(s.selections) else 0 for j in range(n_doses)]
        row += [s.n_no_recommendation]
        row += [s.stop_reasons.get(r, 0) for r in reasons]
        writer.writerow(row)
    return buf.getvalue()


def summaries_to_long_csv(
    summaries: list[ScenarioSummary],
    manifest_hash: str,
    master_seed: int,
) -> str:
    """Plot-ready long format: one (scenario, policy, metric, value) per row."""
    buf = io.StringIO()
    buf.write(f"# manifest_hash={manifest_hash}\n")
    buf.write(f"# master_seed={master_seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario", "policy", "cycles", "prior", "metric", "value"])
    for s in summaries:
        metrics = {
            "pcs": s.pcs,
            "pas": s.pas,
            "mean_n": s.mean_n,
            "mean_duration_weeks": s.mean_duration,
            "mean_dlts": s.mean_dlts,
            "pct_dlt": s.pct_dlt,
            "mean_overdosed": s.mean_overdosed,
        }
        for name, value in metrics.items():
            if value is None:
                continue
            writer.writerow([s.scenario, s.policy, s.cycles, s.prior, name, repr(value)])
    return buf.getvalue()
