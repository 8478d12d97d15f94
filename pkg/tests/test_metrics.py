import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dosefill.metrics import (
    ACCEPTABLE_BAND,
    MetricsConfig,
    aggregate,
    classify_selection,
    run_benchmark,
    summaries_to_csv,
    summaries_to_long_csv,
)
from dosefill.rules import DoseTally, StopReason
from dosefill.scenarios import DEFAULT_ACTIVITY, Scenario, builtin_scenarios
from dosefill.trial import TrialResult
from oracles import benchmark_select_bruteforce

SCENARIOS = builtin_scenarios()
GRID = SCENARIOS[0].grid


def make_result(
    recommendation,
    stop_reason=StopReason.PRECISION,
    n=12,
    dlts=2,
    duration=36,
    patients_per_dose=None,
    scenario="3",
):
    per_dose = patients_per_dose or [n, 0, 0, 0, 0, 0]
    tallies = tuple(
        DoseTally(patients=p, dlts=min(dlts, p), escalation_cohorts=max(1, p // 3))
        for p in per_dose
    )
    return TrialResult(
        scenario_label=scenario,
        seed=0,
        policy="none",
        cycles=1,
        recommendation=recommendation,
        stop_reason=stop_reason,
        n_enrolled=n,
        n_dlts=dlts,
        duration_weeks=duration,
        tallies=tallies,
        trace=(),
    )


class TestClassifySelection:
    def test_correct_and_acceptable_at_true_mtd(self):
        result = make_result(recommendation=2, scenario="2")
        correct, acceptable = classify_selection(result, SCENARIOS[1])
        assert correct and acceptable  # scenario 2 dose 2 has p1 = 0.30

    def test_safety_stop_correct_when_all_unsafe(self):
        result = make_result(
            recommendation=None, stop_reason=StopReason.LOWEST_UNSAFE, scenario="9"
        )
        correct, acceptable = classify_selection(result, SCENARIOS[8])
        assert correct and not acceptable  # scenario 9: min p1 = 0.40 > 0.33

    def test_safety_stop_incorrect_when_safe_doses_exist(self):
        result = make_result(
            recommendation=None, stop_reason=StopReason.HARD_SAFETY, scenario="3"
        )
        correct, _ = classify_selection(result, SCENARIOS[2])
        assert not correct

    def test_near_miss_is_acceptable_but_incorrect(self):
        result = make_result(recommendation=2, scenario="3")
        correct, acceptable = classify_selection(result, SCENARIOS[2])
        assert not correct
        assert acceptable  # p1 = 0.20 lies inside [0.18, 0.33]

    def test_scenario13_very_safe_stop_counts_correct(self):
        result = make_result(
            recommendation=6, stop_reason=StopReason.HIGHEST_VERY_SAFE, scenario="13"
        )
        correct, acceptable = classify_selection(result, SCENARIOS[12])
        assert correct
        assert not acceptable  # p1(d6) = 0.12 below the band
        toggled = MetricsConfig(safe_stop_correct_when_no_mtd=False)
        assert not classify_selection(result, SCENARIOS[12], toggled)[0]

    def test_scenario13_other_stops_incorrect(self):
        result = make_result(
            recommendation=6, stop_reason=StopReason.SUFFICIENT_INFORMATION, scenario="13"
        )
        assert not classify_selection(result, SCENARIOS[12])[0]


class TestAggregate:
    def test_single_trial_means(self):
        summary = aggregate([make_result(3, n=12, duration=36)], SCENARIOS[2])
        assert summary.mean_n == 12
        assert summary.mean_duration == 36
        assert summary.n_trials == 1

    def test_half_correct(self):
        results = [make_result(3, scenario="3"), make_result(2, scenario="3")]
        summary = aggregate(results, SCENARIOS[2])
        assert summary.pcs == 0.5

    def test_overdose_exposure_counts_patients_at_toxic_doses(self):
        # scenario 3: p1 = (.1, .2, .3, .4, .5, .6); doses 4..6 exceed 0.33
        result = make_result(3, patients_per_dose=[3, 3, 3, 3, 0, 0], n=12)
        summary = aggregate([result], SCENARIOS[2])
        assert summary.mean_overdosed == 3.0

    def test_histogram_sums_to_trials(self):
        results = [
            make_result(1),
            make_result(3),
            make_result(None, stop_reason=StopReason.HARD_SAFETY),
        ]
        summary = aggregate(results, SCENARIOS[2])
        assert summary.histogram_total() == 3
        assert summary.n_no_recommendation == 1

    def test_permutation_invariance(self):
        results = [
            make_result(1, n=6, duration=12),
            make_result(2, n=12, duration=24),
            make_result(None, stop_reason=StopReason.LOWEST_UNSAFE, n=9, duration=18),
            make_result(4, n=21, duration=54),
        ]
        base = aggregate(results, SCENARIOS[2])
        rng = random.Random(7)
        for _ in range(5):
            shuffled = results[:]
            rng.shuffle(shuffled)
            assert aggregate(shuffled, SCENARIOS[2]) == base

    def test_pct_dlt_is_mean_of_per_trial_percentages(self):
        results = [make_result(2, n=10, dlts=1), make_result(2, n=20, dlts=8)]
        summary = aggregate(results, SCENARIOS[2])
        assert summary.pct_dlt == pytest.approx((10.0 + 40.0) / 2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([], SCENARIOS[0])


class TestBenchmark:
    def test_mean_n_is_n_max_and_duration_absent(self):
        summary = run_benchmark(SCENARIOS[0], n_max=54, sims=200, seed=1)
        assert summary.mean_n == 54.0
        assert summary.mean_duration is None
        assert summary.policy == "benchmark"

    def test_histogram_sums_to_sims(self):
        summary = run_benchmark(SCENARIOS[8], n_max=54, sims=300, seed=2)
        assert summary.histogram_total() == 300

    def test_hand_profile_construction(self):
        # three patients with fixed tolerances, thresholded against the curve
        p_true = [0.2, 0.4, 0.6, 0.7, 0.8, 0.9]
        tolerances = [0.1, 0.5, 0.9]
        y = [[1 if u <= p else 0 for p in p_true] for u in tolerances]
        assert y[0] == [1, 1, 1, 1, 1, 1]
        assert y[1] == [0, 0, 1, 1, 1, 1]
        assert y[2] == [0, 0, 0, 0, 0, 1]
        p_hat = [sum(col) / 3 for col in zip(*y)]
        assert p_hat == pytest.approx([1 / 3, 1 / 3, 2 / 3, 2 / 3, 2 / 3, 1.0])
        assert benchmark_select_bruteforce(p_true, tolerances, 0.3) == 0

    def test_degenerate_all_certain_selects_lowest(self):
        scn = Scenario(
            label="sat", grid=GRID, p1=(1.0,) * 6, activity=DEFAULT_ACTIVITY
        )
        summary = run_benchmark(scn, n_max=12, sims=50, seed=3, safety_classification=False)
        assert summary.selections[0] == 50

    def test_consistency_with_large_sample(self):
        # exactly one dose on target: PCS approaches 1 as n_max grows
        summary = run_benchmark(SCENARIOS[2], n_max=4998, sims=60, seed=4)
        assert summary.pcs > 0.9

    def test_requires_monotone_curve(self):
        scn = Scenario(
            label="bad",
            grid=GRID,
            p1=(0.3, 0.2, 0.4, 0.5, 0.6, 0.7),
            activity=DEFAULT_ACTIVITY,
        )
        with pytest.raises(ValueError):
            run_benchmark(scn, n_max=12, sims=10, seed=0)

    def test_safety_classification_on_all_unsafe(self):
        with_rule = run_benchmark(SCENARIOS[15], n_max=54, sims=400, seed=5)
        without = run_benchmark(
            SCENARIOS[15], n_max=54, sims=400, seed=5, safety_classification=False
        )
        assert with_rule.pcs > 0.9  # scenario 16: every dose above the band
        assert without.pcs == 0.0
        assert without.selections[0] == max(without.selections)

    def test_three_cycle_benchmark_uses_extended_curve(self):
        one = run_benchmark(SCENARIOS[2], cycles=1, n_max=54, sims=500, seed=6)
        three = run_benchmark(SCENARIOS[2], cycles=3, n_max=54, sims=500, seed=6)
        # same latent draws, different curves and targets; both valid summaries
        assert one.cycles == 1 and three.cycles == 3
        assert one.histogram_total() == three.histogram_total() == 500


class TestCsvOutput:
    def summaries(self):
        results = [make_result(2), make_result(3)]
        return [aggregate(results, SCENARIOS[2])]

    def test_header_embeds_manifest_hash_and_seed(self):
        text = summaries_to_csv(self.summaries(), "abc123", 99)
        lines = text.splitlines()
        assert lines[0] == "# manifest_hash=abc123"
        assert lines[1] == "# master_seed=99"
        assert lines[2].startswith("scenario,policy,cycles,prior,n_trials,pcs,pas,")

    def test_fixed_column_order(self):
        text = summaries_to_csv(self.summaries(), "h", 1)
        header = text.splitlines()[2].split(",")
        assert header[:12] == [
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
        ]
        assert "sel_1" in header and "sel_none" in header

    def test_long_format(self):
        text = summaries_to_long_csv(self.summaries(), "h", 1)
        lines = text.splitlines()
        assert lines[2] == "scenario,policy,cycles,prior,metric,value"
        metrics = {line.split(",")[4] for line in lines[3:]}
        assert {"pcs", "pas", "mean_n", "mean_duration_weeks"} <= metrics


class TestBandInvariants:
    @settings(max_examples=1000, deadline=None)
    @given(
        rec=st.one_of(st.none(), st.integers(1, 6)),
        reason=st.sampled_from(list(StopReason)),
        scenario_idx=st.integers(0, 16),
    )
    def test_correct_mtd_selection_is_acceptable_when_band_holds(
        self, rec, reason, scenario_idx
    ):
        if reason is StopReason.NONE:
            return
        if (rec is None) != (
            reason in (StopReason.HARD_SAFETY, StopReason.LOWEST_UNSAFE)
        ):
            return
        scenario = SCENARIOS[scenario_idx]
        result = make_result(rec, stop_reason=reason, scenario=scenario.label)
        correct, acceptable = classify_selection(result, scenario)
        if (
            correct
            and rec is not None
            and rec == scenario.mtd_index
            and ACCEPTABLE_BAND[0] <= scenario.p1[rec - 1] <= ACCEPTABLE_BAND[1]
        ):
            assert acceptable
