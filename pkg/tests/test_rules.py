import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dosefill.model import DoseSummaries
from dosefill.rules import (
    CONTINUE,
    DoseTally,
    RuleConfig,
    StopDecision,
    StopReason,
    TrialSnapshot,
    evaluate_stopping,
    excluded_flags,
    hard_safety_excluded,
    within_kfold_cap,
)
from oracles import beta_tail_exact

DOSES = (1.5, 2.5, 3.5, 4.5, 6.0, 7.0)


def make_summaries(means, tail_above=None, tail_below=None, tau=0.3):
    n = len(means)
    above = tuple(tail_above) if tail_above else (0.0,) * n
    below = tuple(tail_below) if tail_below else tuple(1.0 - a for a in above)
    return DoseSummaries(
        doses=DOSES[:n],
        mean_tox=tuple(means),
        tail_above={tau: above},
        tail_below={tau: below},
    )


def make_snapshot(
    n_enrolled=0,
    tallies=None,
    esc_observed=0,
    hard_counts=None,
    n_doses=6,
):
    tallies = tallies or tuple(DoseTally() for _ in range(n_doses))
    hard_counts = hard_counts or tuple((t.dlts, t.patients) for t in tallies)
    return TrialSnapshot(
        n_enrolled=n_enrolled,
        tallies=tallies,
        escalation_cohorts_observed=esc_observed,
        hard_safety_counts=hard_counts,
    )


class TestHardSafety:
    def test_paper_boundary_table(self):
        assert hard_safety_excluded(3, 3) is True
        assert hard_safety_excluded(4, 6) is True
        assert hard_safety_excluded(5, 9) is True
        assert hard_safety_excluded(2, 3) is False
        assert hard_safety_excluded(3, 6) is False
        assert hard_safety_excluded(4, 9) is False

    def test_no_data_not_excluded(self):
        assert hard_safety_excluded(0, 0) is False

    def test_beta_tail_value_from_independent_oracle(self):
        # Beta(3, 2) upper tail at 0.3 from the binomial-sum identity
        assert beta_tail_exact(2, 3, 0.3) == pytest.approx(0.9163, abs=5e-5)

    def test_matches_binomial_sum_oracle_exhaustively(self):
        for n in range(0, 13):
            for d in range(0, n + 1):
                expected = beta_tail_exact(d, n, 0.3) > 0.95
                assert hard_safety_excluded(d, n, 0.3, 0.95) == expected, (d, n)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            hard_safety_excluded(4, 3)
        with pytest.raises(ValueError):
            hard_safety_excluded(-1, 3)

    @settings(max_examples=1000, deadline=None)
    @given(n=st.integers(0, 60), d=st.integers(0, 60))
    def test_monotone_in_dlts_for_fixed_n(self, n, d):
        if d >= n:
            return
        if hard_safety_excluded(d, n):
            assert hard_safety_excluded(d + 1, n)


class TestExclusionCascade:
    def test_cascade_applies_upward(self):
        counts = ((0, 3), (3, 3), (0, 3), (0, 0))
        flags = excluded_flags(counts, 0.3, 0.95)
        assert flags == (False, True, True, True)

    def test_no_exclusions(self):
        counts = ((0, 3), (1, 3), (0, 0))
        assert excluded_flags(counts, 0.3, 0.95) == (False, False, False)


class TestKfoldCap:
    def test_two_fold_rule(self):
        assert within_kfold_cap(3.5, 1.5, 2.0) is False
        assert within_kfold_cap(2.5, 1.5, 2.0) is True

    def test_boundary_equality_allowed(self):
        assert within_kfold_cap(7.0, 3.5, 2.0) is True

    def test_requires_positive_reference(self):
        with pytest.raises(ValueError):
            within_kfold_cap(2.5, 0.0)


class TestStopDecisionType:
    def test_reason_consistency(self):
        with pytest.raises(ValueError):
            StopDecision(stopped=False, reason=StopReason.PRECISION, recommends_dose=True)
        with pytest.raises(ValueError):
            StopDecision(stopped=True, reason=StopReason.NONE, recommends_dose=True)

    def test_safety_stops_never_recommend(self):
        with pytest.raises(ValueError):
            StopDecision(stopped=True, reason=StopReason.HARD_SAFETY, recommends_dose=True)
        with pytest.raises(ValueError):
            StopDecision(stopped=True, reason=StopReason.LOWEST_UNSAFE, recommends_dose=True)


class TestEvaluateStopping:
    config = RuleConfig()

    def test_fresh_trial_continues(self):
        decision = evaluate_stopping(
            make_snapshot(), make_summaries([0.1] * 6), None, 0, self.config
        )
        assert decision == CONTINUE

    def test_hard_safety_stop_has_priority(self):
        tallies = tuple(
            DoseTally(patients=3, dlts=3, escalation_cohorts=1) if j == 0 else DoseTally()
            for j in range(6)
        )
        # even with every other rule triggered, hard safety reports first
        summaries = make_summaries([0.9] * 6, tail_above=[1.0] * 6)
        snapshot = make_snapshot(n_enrolled=54, tallies=tallies, esc_observed=9)
        decision = evaluate_stopping(snapshot, summaries, 0.01, 0, self.config)
        assert decision.reason is StopReason.HARD_SAFETY
        assert decision.stopped and not decision.recommends_dose

    def test_lowest_unsafe_requires_assigned_cohort(self):
        summaries = make_summaries([0.5] * 6, tail_above=[0.9] + [0.5] * 5)
        no_cohort = evaluate_stopping(
            make_snapshot(), summaries, None, 1, self.config
        )
        assert not no_cohort.stopped
        tallies = (DoseTally(patients=3, dlts=1, escalation_cohorts=1),) + tuple(
            DoseTally() for _ in range(5)
        )
        decision = evaluate_stopping(
            make_snapshot(n_enrolled=3, tallies=tallies), summaries, None, 1, self.config
        )
        assert decision.reason is StopReason.LOWEST_UNSAFE
        assert not decision.recommends_dose

    def test_max_patients(self):
        tallies = (DoseTally(patients=54, dlts=5, escalation_cohorts=18),) + tuple(
            DoseTally() for _ in range(5)
        )
        decision = evaluate_stopping(
            make_snapshot(n_enrolled=54, tallies=tallies, esc_observed=18),
            make_summaries([0.1] * 6),
            None,
            0,
            self.config,
        )
        assert decision.reason is StopReason.MAX_PATIENTS
        assert decision.recommends_dose

    def test_highest_very_safe_requires_cohort_at_top(self):
        summaries = make_summaries([0.05] * 6, tail_below=[1.0] * 6)
        without = evaluate_stopping(
            make_snapshot(), summaries, None, 5, self.config
        )
        assert not without.stopped
        tallies = tuple(DoseTally() for _ in range(5)) + (
            DoseTally(patients=3, dlts=0, escalation_cohorts=1),
        )
        decision = evaluate_stopping(
            make_snapshot(n_enrolled=3, tallies=tallies), summaries, None, 5, self.config
        )
        assert decision.reason is StopReason.HIGHEST_VERY_SAFE
        assert decision.recommends_dose

    def test_sufficient_information_counts_escalation_cohorts_only(self):
        tallies = (
            DoseTally(patients=15, dlts=2, escalation_cohorts=2, backfill_cohorts=3),
        ) + tuple(DoseTally() for _ in range(5))
        snapshot = make_snapshot(n_enrolled=15, tallies=tallies, esc_observed=2)
        summaries = make_summaries([0.3] * 6)
        decision = evaluate_stopping(snapshot, summaries, None, 0, self.config)
        assert not decision.stopped  # only 2 escalation cohorts at the dose
        tallies = (
            DoseTally(patients=18, dlts=2, escalation_cohorts=3, backfill_cohorts=3),
        ) + tuple(DoseTally() for _ in range(5))
        snapshot = make_snapshot(n_enrolled=18, tallies=tallies, esc_observed=3)
        decision = evaluate_stopping(snapshot, summaries, None, 0, self.config)
        assert decision.reason is StopReason.SUFFICIENT_INFORMATION

    def test_precision_needs_three_observed_escalation_cohorts(self):
        tallies = (DoseTally(patients=6, dlts=1, escalation_cohorts=2),) + tuple(
            DoseTally() for _ in range(5)
        )
        summaries = make_summaries([0.3] * 6)
        early = evaluate_stopping(
            make_snapshot(n_enrolled=6, tallies=tallies, esc_observed=2),
            summaries,
            0.05,
            1,
            self.config,
        )
        assert not early.stopped
        tallies = (DoseTally(patients=9, dlts=1, escalation_cohorts=3),) + tuple(
            DoseTally() for _ in range(5)
        )
        ready = evaluate_stopping(
            make_snapshot(n_enrolled=9, tallies=tallies, esc_observed=3),
            summaries,
            0.05,
            1,
            self.config,
        )
        assert ready.reason is StopReason.PRECISION
        assert ready.recommends_dose

    def test_precision_ignores_negative_or_missing_cv(self):
        tallies = (DoseTally(patients=9, dlts=1, escalation_cohorts=3),) + tuple(
            DoseTally() for _ in range(5)
        )
        snapshot = make_snapshot(n_enrolled=9, tallies=tallies, esc_observed=3)
        summaries = make_summaries([0.3] * 6)
        for cv in (None, -0.2, 0.31):
            decision = evaluate_stopping(snapshot, summaries, cv, 1, self.config)
            assert not decision.stopped

    def test_pure_function(self):
        snapshot = make_snapshot()
        summaries = make_summaries([0.2] * 6)
        a = evaluate_stopping(snapshot, summaries, None, 0, self.config)
        b = evaluate_stopping(snapshot, summaries, None, 0, self.config)
        assert a == b


class TestRuleConfig:
    def test_defaults_match_design(self):
        config = RuleConfig()
        assert config.tau1 == 0.3
        assert config.psi == 0.95
        assert config.kfold == 2.0
        assert config.unsafe_prob == 0.80
        assert config.safe_prob == 0.80
        assert config.cv_limit == 0.30
        assert config.n_max == 54

    def test_validation(self):
        with pytest.raises(ValueError):
            RuleConfig(kfold=1.0)
        with pytest.raises(ValueError):
            RuleConfig(tau1=0.0)
        with pytest.raises(ValueError):
            RuleConfig(n_max=0)

    def test_round_trip(self):
        config = RuleConfig(tau1=0.25, n_max=30)
        assert RuleConfig.from_dict(config.to_dict()) == config


class TestDoseTally:
    def test_counts_validated(self):
        with pytest.raises(ValueError):
            DoseTally(patients=2, dlts=3)
        with pytest.raises(ValueError):
            DoseTally(patients=-1)

    def test_cohort_sum(self):
        tally = DoseTally(patients=9, dlts=1, escalation_cohorts=2, backfill_cohorts=1)
        assert tally.cohorts == 3
