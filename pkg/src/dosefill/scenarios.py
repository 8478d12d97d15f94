"""Dose grids, true toxicity scenarios and simulated patient outcomes.

A scenario fixes, for every dose on the grid, the probability of a DLT during
the first treatment cycle and the probability that a cohort treated at that
dose shows an activity signal.  When follow-up spans several cycles, the
conditional chance of a first DLT decays geometrically: the hazard in cycle s
is the cycle-1 probability divided by 3**(s-1), so the cumulative probability
of a DLT by cycle s is

    p_s = 1 - prod_{k=1..s} (1 - p_1 / 3**(k-1)).

The 17 built-in scenarios cover the standard benchmark set for a six-dose
grid (1.5, 2.5, 3.5, 4.5, 6.0, 7.0 MBq).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .validation import (
    check_count,
    check_increasing,
    check_open_probability,
    check_positive,
    check_probability,
    check_probability_vector,
)

# Per-cycle damping factor of the conditional DLT hazard.
HAZARD_DECAY = 3.0

DEFAULT_DOSES = (1.5, 2.5, 3.5, 4.5, 6.0, 7.0)

# Probability of at least one complete response in a cohort, per dose,
# used to gate partial backfilling. Shared by all built-in scenarios.
DEFAULT_ACTIVITY = (0.00, 0.15, 0.30, 0.45, 0.60, 0.75)


@dataclass(frozen=True)
class DoseGrid:
    """Ordered set of dose values (MBq), strictly increasing and positive."""

    doses: tuple[float, ...]

    def __post_init__(self) -> None:
        doses = tuple(float(d) for d in self.doses)
        object.__setattr__(self, "doses", doses)
        if len(doses) < 2:
            raise ValueError("a dose grid needs at least two doses")
        for d in doses:
            check_positive(d, "dose")
        check_increasing(doses, "doses")

    def __len__(self) -> int:
        return len(self.doses)

    def __iter__(self) -> Iterator[float]:
        return iter(self.doses)

    def __getitem__(self, idx: int) -> float:
        return self.doses[idx]


@dataclass(frozen=True)
class Scenario:
    """True dose-toxicity configuration for one simulated world.

    ``mtd_index`` is the 1-based dose level of the true MTD (as quoted in
    per-level tables), or ``None`` when no dose is on target.
    """

    label: str
    grid: DoseGrid
    p1: tuple[float, ...]
    activity: tuple[float, ...]
    mtd_index: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "p1", check_probability_vector(self.p1, "p1"))
        object.__setattr__(
            self, "activity", check_probability_vector(self.activity, "activity")
        )
        if len(self.p1) != len(self.grid):
            raise ValueError("p1 must match the dose grid length")
        if len(self.activity) != len(self.grid):
            raise ValueError("activity must match the dose grid length")
        if self.mtd_index is not None:
            idx = check_count(self.mtd_index, "mtd_index", minimum=1)
            if idx > len(self.grid):
                raise ValueError("mtd_index beyond the dose grid")
            object.__setattr__(self, "mtd_index", idx)

    def cumulative_prob(self, dose_idx: int, cycles: int) -> float:
        """P(DLT by the end of `cycles` cycles) at 0-based dose index."""
        return extend_cycle_prob(self.p1[dose_idx], cycles)


@dataclass(frozen=True)
class PatientProfile:
    """Realized outcome of one simulated patient.

    ``dlt_cycle`` is the 1-based cycle of the patient's DLT, or ``None`` if
    no DLT occurs within follow-up.
    """

    dlt_cycle: int | None = None

    def has_dlt_by(self, cycles_observed: int) -> bool:
        return self.dlt_cycle is not None and self.dlt_cycle <= cycles_observed


def conditional_hazard(p1: float, s: int) -> float:
    """Conditional probability of a first DLT in cycle s (1-based)."""
    check_probability(p1, "p1")
    check_count(s, "s", minimum=1)
    return p1 / HAZARD_DECAY ** (s - 1)


def extend_cycle_prob(p1: float, s: int) -> float:
    """Cumulative probability of a DLT by the end of cycle s.

    Monotone nondecreasing in s, with p_1 = p1.
    """
    check_probability(p1, "p1")
    check_count(s, "s", minimum=1)
    cumulative = 0.0
    for k in range(s):
        cumulative += (1.0 - cumulative) * (p1 / HAZARD_DECAY**k)
    return cumulative


def target_for_followup(tau1: float, cycles: int) -> float:
    """Design target for a follow-up of `cycles` cycles, tau_S.

    The cycle-1 target is extended with the same hazard decay as the true
    curves, e.g. tau1=0.3 over three cycles gives 0.391.
    """
    check_open_probability(tau1, "tau1")
    return extend_cycle_prob(tau1, cycles)


def sample_profile(
    scenario: Scenario,
    dose_idx: int,
    cycles: int,
    rng: np.random.Generator,
) -> PatientProfile:
    """Draw one patient outcome at the given 0-based dose index.

    The marginal law matches `extend_cycle_prob`: P(dlt_cycle <= s) = p_s.
    Consumes at most `cycles` uniforms from the supplied stream.
    """
    check_count(cycles, "cycles", minimum=1)
    p1 = scenario.p1[dose_idx]
    for s in range(1, cycles + 1):
        if rng.random() < conditional_hazard(p1, s):
            return PatientProfile(dlt_cycle=s)
    return PatientProfile(dlt_cycle=None)


# Table of built-in scenarios: cycle-1 DLT probability per dose, and the
# 1-based MTD level where one dose sits exactly on the design target.
_BUILTIN_P1: tuple[tuple[tuple[float, ...], int | None], ...] = (
    ((0.30, 0.40, 0.50, 0.60, 0.70, 0.80), 1),
    ((0.20, 0.30, 0.40, 0.50, 0.60, 0.70), 2),
    ((0.10, 0.20, 0.30, 0.40, 0.50, 0.60), 3),
    ((0.05, 0.10, 0.20, 0.30, 0.40, 0.50), 4),
    ((0.05, 0.10, 0.15, 0.20, 0.30, 0.40), 5),
    ((0.02, 0.05, 0.10, 0.15, 0.20, 0.30), 6),
    ((0.15, 0.20, 0.25, 0.30, 0.45, 0.60), 4),
    ((0.05, 0.15, 0.30, 0.35, 0.40, 0.45), 3),
    ((0.40, 0.45, 0.50, 0.55, 0.60, 0.65), None),
    ((0.05, 0.15, 0.25, 0.35, 0.45, 0.55), 3),
    ((0.15, 0.20, 0.35, 0.40, 0.45, 0.50), 2),
    ((0.05, 0.10, 0.15, 0.20, 0.25, 0.40), 5),
    ((0.06, 0.07, 0.08, 0.09, 0.11, 0.12), None),
    ((0.10, 0.14, 0.21, 0.30, 0.46, 0.58), 4),
    ((0.16, 0.30, 0.50, 0.70, 0.89, 0.95), 2),
    ((0.55, 0.91, 0.99, 1.00, 1.00, 1.00), None),
    ((0.05, 0.05, 0.05, 0.80, 0.80, 0.80), 3),
)


def builtin_scenarios() -> tuple[Scenario, ...]:
    """The 17 benchmark scenarios on the default six-dose grid."""
    grid = DoseGrid(DEFAULT_DOSES)
    return tuple(
        Scenario(
            label=str(i + 1),
            grid=grid,
            p1=p1,
            activity=DEFAULT_ACTIVITY,
            mtd_index=mtd,
        )
        for i, (p1, mtd) in enumerate(_BUILTIN_P1)
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "label": scenario.label,
        "doses": list(scenario.grid.doses),
        "p1": list(scenario.p1),
        "activity": list(scenario.activity),
        "mtd_index": scenario.mtd_index,
    }


def scenario_from_dict(payload: dict) -> Scenario:
    return Scenario(
        label=str(payload["label"]),
        grid=DoseGrid(tuple(payload["doses"])),
        p1=tuple(payload["p1"]),
        activity=tuple(payload["activity"]),
        mtd_index=payload.get("mtd_index"),
    )


def dump_scenarios(scenarios: Sequence[Scenario], path: str | Path) -> None:
    payload = [scenario_to_dict(s) for s in scenarios]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_scenarios(path: str | Path) -> tuple[Scenario, ...]:
    payload = json.loads(Path(path).read_text())
    if isinstance(payload, dict):
        payload = [payload]
    return tuple(scenario_from_dict(item) for item in payload)
