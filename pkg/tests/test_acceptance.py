"""Acceptance gate: every release criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per
criterion.  The desk-scale comparison (criteria 7-10) defaults to 1000
simulated trials per scenario and policy; set DOSEFILL_ACCEPTANCE_SIMS to
lower it during development.
"""

import math
import os
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dosefill.batch import RunManifest, benchmark_batch, simulate_batch, write_simulation_outputs
from dosefill.model import (
    Observation,
    PosteriorDraws,
    VAGUE_PRIOR,
    cv_mtd,
    dose_summaries,
    fit,
    mtd_draws,
    tite_weight,
    tox_prob,
)
from dosefill.rules import hard_safety_excluded
from dosefill.sampler import SamplerConfig
from dosefill.scenarios import builtin_scenarios, extend_cycle_prob
from dosefill.trial import DesignConfig
from oracles import beta_tail_exact, posterior_quadrature

SCENARIOS = builtin_scenarios()
GRID = SCENARIOS[0].grid
SIMS = int(os.environ.get("DOSEFILL_ACCEPTANCE_SIMS", "1000"))
MASTER_SEED = 20240615

#: documented draw count for the oracle-equivalence criterion
ORACLE_SAMPLER = SamplerConfig(chains=30, burnin=600, draws=150000)


def report(criterion: str, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: PASS — {detail}")


class TestCriterion1CycleExtension:
    def test_exact_cycle_probabilities(self):
        assert abs(extend_cycle_prob(0.3, 2) - 0.37) < 1e-12
        assert abs(extend_cycle_prob(0.3, 3) - 0.391) < 1e-12
        report("1", "p2(0.3)=0.37 and p3(0.3)=0.391 to 1e-12")


class TestCriterion2HardSafetyBoundary:
    def test_boundary_table_with_independent_oracle(self):
        triggers = [(3, 3), (4, 6), (5, 9)]
        clears = [(2, 3), (3, 6), (4, 9)]
        for d, n in triggers:
            assert hard_safety_excluded(d, n, 0.3, 0.95) is True
        for d, n in clears:
            assert hard_safety_excluded(d, n, 0.3, 0.95) is False
            # independent binomial-sum oracle agrees the tail is below psi
            assert beta_tail_exact(d, n, 0.3) <= 0.95
        for d, n in triggers:
            assert beta_tail_exact(d, n, 0.3) > 0.95
        report("2", "trigger at 3/3, 4/6, 5/9; clear at 2/3, 3/6, 4/9 (oracle-checked)")


class TestCriterion3TiteWeights:
    def test_weight_law_exact(self):
        for total in range(1, 9):
            for u in range(0, total + 1):
                assert tite_weight(u, total, dlt=False) == u / total
                assert tite_weight(u, total, dlt=True) == 1.0
        report("3", "w = u/S without DLT and w = 1 with DLT, exactly")


class TestCriterion4MtdRoundTrip:
    def test_round_trip_on_ten_thousand_draws(self):
        rng = np.random.default_rng(4)
        beta0 = rng.uniform(-8, 8, size=10_000)
        beta1 = np.exp(rng.uniform(-2.5, 2.5, size=10_000))
        taus = rng.uniform(0.05, 0.95, size=10_000)
        draws = PosteriorDraws(
            draws=np.column_stack([beta0, beta1]),
            accept_rate=1.0,
            effective_draws=10_000.0,
        )
        worst = 0.0
        for tau in (0.3, 0.391):
            doses = mtd_draws(draws, tau)
            back = tox_prob(doses, beta0, beta1)
            worst = max(worst, float(np.max(np.abs(back - tau))))
        # per-draw random targets as well
        doses = (np.log(taus / (1 - taus)) - beta0) / beta1
        back = tox_prob(doses, beta0, beta1)
        worst = max(worst, float(np.max(np.abs(back - taus))))
        assert worst < 1e-12
        report("4", f"max |F(MTD(tau)) - tau| = {worst:.2e} over 10^4 draws")


class TestCriterion5OracleEquivalence:
    DATASETS = [
        [("d", 1.5, 1.0, False)] * 3,
        [("d", 7.0, 1.0, True)] * 2 + [("d", 7.0, 1.0, False)],
        [("d", 1.5, 1.0, False)] * 3 + [("d", 2.5, 1.0, False)] * 2 + [("d", 2.5, 1.0, True)],
        [("d", 1.5, 1 / 3, False), ("d", 1.5, 2 / 3, False), ("d", 2.5, 1.0, True), ("d", 3.5, 1.0, False)],
        [],
        [("d", 1.5, 1.0, False)] * 3 + [("d", 2.5, 1.0, False)] * 3 + [("d", 3.5, 1.0, True)] * 2 + [("d", 3.5, 1.0, False)],
        [("d", 4.5, 1.0, True)] * 3 + [("d", 3.5, 1.0, False)] * 3,
        [("d", 1.5, 1.0, True)] + [("d", 1.5, 1.0, False)] * 2,
        [("d", 6.0, 2 / 3, False)] * 6 + [("d", 7.0, 1 / 3, False)] * 6,
        [("d", 2.5, 1.0, False)] * 6 + [("d", 3.5, 1.0, True)] * 3 + [("d", 4.5, 1.0, True)] * 3,
        [("d", 1.5, 1.0, False)] * 2 + [("d", 2.5, 2 / 3, False)] * 2 + [("d", 3.5, 1.0, True)],
        [("d", 7.0, 1.0, False)] * 3,
    ]

    def test_fit_matches_quadrature(self):
        start = time.time()
        prior = VAGUE_PRIOR
        pr = (prior.c1, prior.c2, prior.v1, prior.v2)
        worst_mean, worst_tail = 0.0, 0.0
        assert len(self.DATASETS) >= 10
        for i, spec_rows in enumerate(self.DATASETS):
            rows = [(d, w, y) for (_, d, w, y) in spec_rows]
            assert len(rows) <= 12
            oracle = posterior_quadrature(rows, pr, list(GRID.doses), (0.3,))
            obs = [Observation(dose=d, weight=w, dlt=y) for d, w, y in rows]
            draws = fit(obs, prior, ORACLE_SAMPLER, seed=1000 + i)
            summ = dose_summaries(draws, GRID, (0.3,))
            worst_mean = max(
                worst_mean,
                max(abs(a - b) for a, b in zip(summ.mean_tox, oracle["mean_tox"])),
            )
            worst_tail = max(
                worst_tail,
                max(
                    abs(a - b)
                    for a, b in zip(summ.tail_above[0.3], oracle["tail_above"][0.3])
                ),
            )
        elapsed = time.time() - start
        assert worst_mean < 0.01, f"posterior mean off oracle by {worst_mean:.4f}"
        assert worst_tail < 0.015, f"tail probability off oracle by {worst_tail:.4f}"
        assert elapsed < 60.0, f"oracle suite took {elapsed:.1f}s"
        report(
            "5",
            f"{len(self.DATASETS)} datasets: worst mean err {worst_mean:.4f} (<0.01), "
            f"worst tail err {worst_tail:.4f} (<0.015), {elapsed:.1f}s (<60s), "
            f"{ORACLE_SAMPLER.draws} draws",
        )


class TestCriterion6Determinism:
    def test_byte_identical_outputs_across_runs_and_workers(self, tmp_path):
        from dosefill.scenarios import scenario_to_dict

        design = DesignConfig(
            grid=GRID,
            backfill_policy="full",
            sampler=SamplerConfig(chains=16, burnin=128, draws=2048),
        )
        scenarios = tuple(scenario_to_dict(SCENARIOS[i]) for i in (0, 3, 15))
        outputs = []
        for run, workers in (("a", 1), ("b", 2), ("c", 1)):
            manifest = RunManifest(
                design=design.to_dict(),
                scenarios=scenarios,
                sims=24,
                seed=99,
                out_dir=str(tmp_path / run),
                workers=workers,
            )
            summaries, results = simulate_batch(manifest)
            paths = write_simulation_outputs(manifest, summaries, results)
            outputs.append(
                (paths["summary"].read_bytes(), paths["archive"].read_bytes())
            )
        assert outputs[0] == outputs[1] == outputs[2]
        report("6", "summary.csv and trials.jsonl.gz byte-identical for workers 1, 2, rerun")


@pytest.fixture(scope="module")
def desk_scale():
    """One desk-scale batch per policy: 17 scenarios, S=1, vague prior."""
    from dosefill.scenarios import scenario_to_dict

    start = time.time()
    results = {}
    for policy in ("none", "full"):
        design = DesignConfig(grid=GRID, backfill_policy=policy, followup_cycles=1)
        manifest = RunManifest(
            design=design.to_dict(),
            scenarios=tuple(scenario_to_dict(s) for s in SCENARIOS),
            sims=SIMS,
            seed=MASTER_SEED,
            out_dir="unused",
            workers=2,
            prior_label="vague",
        )
        summaries, _ = simulate_batch(manifest)
        results[policy] = {s.scenario: s for s in summaries}
    results["elapsed"] = time.time() - start
    return results


class TestCriterion7SampleSizeAndDuration:
    def test_backfilling_cost_and_speedup(self, desk_scale):
        labels = [s.label for s in SCENARIOS]
        dn = np.mean(
            [
                desk_scale["full"][l].mean_n - desk_scale["none"][l].mean_n
                for l in labels
            ]
        )
        dd = np.mean(
            [
                desk_scale["none"][l].mean_duration - desk_scale["full"][l].mean_duration
                for l in labels
            ]
        )
        assert 6.0 <= dn <= 18.0, f"mean_n(full) - mean_n(none) = {dn:.2f}"
        assert 2.0 <= dd <= 10.0, f"duration(none) - duration(full) = {dd:.2f}"
        assert desk_scale["elapsed"] < 1800, f"desk scale took {desk_scale['elapsed']:.0f}s"
        report(
            "7",
            f"{SIMS} sims/scenario: +{dn:.1f} patients (in [6,18]), "
            f"-{dd:.1f} weeks (in [2,10]), {desk_scale['elapsed']:.0f}s (<30min)",
        )


class TestCriterion8SelectionAccuracy:
    def test_pcs_rarely_drops_with_backfilling(self, desk_scale):
        labels = [s.label for s in SCENARIOS]
        at_least = sum(
            desk_scale["full"][l].pcs >= desk_scale["none"][l].pcs - 0.02
            for l in labels
        )
        assert at_least >= 14, f"PCS(full) >= PCS(none) - 0.02 in only {at_least}/17"
        report("8a", f"PCS(full) >= PCS(none)-0.02 in {at_least}/17 scenarios (>=14)")

    def test_scenario13_gain(self, desk_scale):
        # Known-red criterion: with backfilled data the precision rule fires
        # before the highest-dose-very-safe rule, so the very-safe-stop rate
        # (scenario 13's correctness event) drops rather than rises; the
        # recommendation itself stays at the top dose either way.  See the
        # analysis notes shipped with the run records.
        gain13 = desk_scale["full"]["13"].pcs - desk_scale["none"]["13"].pcs
        if gain13 >= 0.04:
            report("8b", f"scenario 13 PCS gain {gain13 * 100:.1f}pp (>=4pp)")
        else:
            print(
                f"\nACCEPTANCE 8b: FAIL — scenario 13 PCS gain {gain13 * 100:.1f}pp < 4pp "
                "(structural: backfill data accelerate the precision stop, which "
                "preempts the very-safe stop that defines correctness here)"
            )
        assert gain13 >= 0.04, f"scenario 13 PCS gain {gain13:.3f} < 0.04"


class TestCriterion9BenchmarkDominates:
    def test_benchmark_bounds_design_pcs(self, desk_scale):
        from dosefill.scenarios import scenario_to_dict

        design = DesignConfig(grid=GRID, followup_cycles=1)
        manifest = RunManifest(
            design=design.to_dict(),
            scenarios=tuple(scenario_to_dict(s) for s in SCENARIOS),
            sims=max(SIMS, 1000),
            seed=MASTER_SEED,
            out_dir="unused",
        )
        bench = {s.scenario: s for s in benchmark_batch(manifest)}
        labels = [s.label for s in SCENARIOS]
        bench_avg = np.mean([bench[l].pcs for l in labels])
        for policy in ("none", "full"):
            design_avg = np.mean([desk_scale[policy][l].pcs for l in labels])
            assert bench_avg >= design_avg, (
                f"benchmark {bench_avg:.3f} < design({policy}) {design_avg:.3f}"
            )
        report(
            "9",
            f"benchmark mean PCS {bench_avg:.3f} >= design mean PCS "
            f"({desk_scale['none']['1'].n_trials} sims, both policies)",
        )


class TestCriterion10DltExposure:
    def test_dlt_percentage_does_not_rise(self, desk_scale):
        labels = [s.label for s in SCENARIOS]
        full = np.mean([desk_scale["full"][l].pct_dlt for l in labels])
        none = np.mean([desk_scale["none"][l].pct_dlt for l in labels])
        assert full <= none + 0.5, f"pct DLT rose: full {full:.2f} vs none {none:.2f}"
        report(
            "10",
            f"mean %DLT full {full:.2f} <= none {none:.2f} + 0.5pp",
        )


class TestAggregateInvariantsOnRealRuns:
    def test_pcs_bounded_by_pas_plus_correct_stops(self, desk_scale):
        lower, upper = 0.18, 0.33
        for policy in ("none", "full"):
            for scenario in SCENARIOS:
                if scenario.mtd_index is not None and not (
                    lower <= scenario.p1[scenario.mtd_index - 1] <= upper
                ):
                    continue  # MTD outside the acceptable band (scenario 17)
                s = desk_scale[policy][scenario.label]
                if min(scenario.p1) > upper:
                    correct_stops = (
                        s.stop_reasons.get("hard-safety", 0)
                        + s.stop_reasons.get("lowest-unsafe", 0)
                    ) / s.n_trials
                elif scenario.mtd_index is None and max(scenario.p1) < lower:
                    correct_stops = s.stop_reasons.get("highest-very-safe", 0) / s.n_trials
                else:
                    correct_stops = 0.0
                assert s.pcs <= s.pas + correct_stops + 1e-12, (
                    policy,
                    scenario.label,
                )


class TestPropertySuites:
    """Module invariants re-run under the property harness (>= 1000 cases)."""

    @settings(max_examples=1000, deadline=None)
    @given(p1=st.floats(0, 1), s=st.integers(1, 10))
    def test_cycle_extension_monotone(self, p1, s):
        assert extend_cycle_prob(p1, s + 1) >= extend_cycle_prob(p1, s)

    @settings(max_examples=1000, deadline=None)
    @given(
        beta0=st.floats(-8, 8),
        log_beta1=st.floats(-2.5, 2.5),
        tau=st.floats(0.02, 0.98),
    )
    def test_mtd_tox_round_trip(self, beta0, log_beta1, tau):
        beta1 = math.exp(log_beta1)
        dose = (math.log(tau / (1 - tau)) - beta0) / beta1
        assert float(tox_prob(dose, beta0, beta1)) == pytest.approx(tau, abs=1e-12)

    @settings(max_examples=1000, deadline=None)
    @given(
        values=st.lists(st.floats(0.05, 50), min_size=2, max_size=40),
        scale=st.floats(0.01, 50),
    )
    def test_cv_scale_invariant(self, values, scale):
        arr = np.array(values)
        if np.median(arr) == 0:
            return
        assert cv_mtd(arr) == pytest.approx(cv_mtd(arr * scale), rel=1e-9, abs=1e-12)

    @settings(max_examples=1000, deadline=None)
    @given(n=st.integers(0, 40), d=st.integers(0, 40))
    def test_hard_safety_monotone_in_dlts(self, n, d):
        if d >= n:
            return
        if hard_safety_excluded(d, n):
            assert hard_safety_excluded(d + 1, n)

    def test_report_line(self):
        report("properties", "module invariants green at >= 1000 cases each")
