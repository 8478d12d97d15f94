"""Batch simulation, benchmarking, prior calibration and report generation.

Work is split into (scenario, replicate-chunk) tasks executed either inline
or on a process pool.  Every trial is seeded from (master seed, scenario
position, replicate), and posterior fits are seeded from dataset content, so
results are byte-identical no matter how many workers run or how the pool
schedules the tasks.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .metrics import (
    MetricsConfig,
    ScenarioSummary,
    aggregate,
    run_benchmark,
    summaries_to_csv,
    summaries_to_long_csv,
)
from .model import BUILTIN_PRIORS, PriorHyper
from .scenarios import Scenario, builtin_scenarios, scenario_from_dict, scenario_to_dict
from .trial import DesignConfig, PosteriorCache, TrialResult, run_trial

CHUNK = 250


@dataclass(frozen=True)
class RunManifest:
    """Everything that determines a batch run's outputs.

    The manifest hash covers only result-determining fields; the output
    directory and worker count are excluded so reruns and different pool
    sizes reproduce byte-identical files.
    """

    design: dict
    scenarios: tuple[dict, ...]
    sims: int
    seed: int
    out_dir: str = "out"
    workers: int = 1
    prior_label: str = "custom"

    def semantic_dict(self) -> dict:
        return {
            "design": self.design,
            "scenarios": list(self.scenarios),
            "sims": self.sims,
            "seed": self.seed,
            "prior_label": self.prior_label,
        }

    def hash(self) -> str:
        canon = json.dumps(self.semantic_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


# one summary cache per design semantics, shared across tasks in a process
_CACHES: dict[bytes, PosteriorCache] = {}


def _cache_for(design: DesignConfig) -> PosteriorCache:
    cache = PosteriorCache(design)
    found = _CACHES.get(cache._prefix)
    if found is not None:
        return found
    _CACHES[cache._prefix] = cache
    return cache


def _run_chunk(args: tuple) -> tuple[int, int, list[dict]]:
    design_payload, scenario_payload, scenario_pos, start, stop, seed = args
    design = DesignConfig.from_dict(design_payload)
    scenario = scenario_from_dict(scenario_payload)
    cache = _cache_for(design)
    out = []
    for rep in range(start, stop):
        trial_seed = _trial_seed(seed, scenario_pos, rep)
        result = run_trial(design, scenario, trial_seed, cache=cache)
        out.append(result.to_dict())
    return scenario_pos, start, out


def _trial_seed(master_seed: int, scenario_pos: int, rep: int) -> int:
    payload = f"{master_seed}:{scenario_pos}:{rep}".encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


def simulate_batch(
    manifest: RunManifest,
    metrics: MetricsConfig = MetricsConfig(),
) -> tuple[list[ScenarioSummary], list[list[TrialResult]]]:
    """Run sims x scenarios trials and aggregate per scenario."""
    design = DesignConfig.from_dict(manifest.design)
    scenarios = [scenario_from_dict(s) for s in manifest.scenarios]
    tasks = []
    for pos, scenario in enumerate(scenarios):
        for start in range(0, manifest.sims, CHUNK):
            stop = min(start + CHUNK, manifest.sims)
            tasks.append(
                (manifest.design, scenario_to_dict(scenario), pos, start, stop, manifest.seed)
            )

    chunks: dict[tuple[int, int], list[dict]] = {}
    if manifest.workers > 1:
        with ProcessPoolExecutor(max_workers=manifest.workers) as pool:
            for pos, start, payloads in pool.map(_run_chunk, tasks):
                chunks[(pos, start)] = payloads
    else:
        for task in tasks:
            pos, start, payloads = _run_chunk(task)
            chunks[(pos, start)] = payloads

    all_results: list[list[TrialResult]] = []
    summaries: list[ScenarioSummary] = []
    for pos, scenario in enumerate(scenarios):
        results = []
        for start in range(0, manifest.sims, CHUNK):
            results.extend(TrialResult.from_dict(p) for p in chunks[(pos, start)])
        all_results.append(results)
        summaries.append(aggregate(results, scenario, manifest.prior_label, metrics))
    return summaries, all_results


def write_simulation_outputs(
    manifest: RunManifest,
    summaries: list[ScenarioSummary],
    all_results: list[list[TrialResult]],
) -> dict[str, Path]:
    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mhash = manifest.hash()
    paths = {}

    summary_path = out_dir / "summary.csv"
    summary_path.write_text(summaries_to_csv(summaries, mhash, manifest.seed))
    paths["summary"] = summary_path

    archive_path = out_dir / "trials.jsonl.gz"
    # fixed mtime and no filename in the gzip header keep reruns byte-identical
    with open(archive_path, "wb") as raw:
        with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
            with io.TextIOWrapper(gz, encoding="utf-8") as fh:
                fh.write(
                    json.dumps({"manifest_hash": mhash, "master_seed": manifest.seed}) + "\n"
                )
                for results in all_results:
                    for r in results:
                        fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    paths["archive"] = archive_path

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps({**manifest.semantic_dict(), "hash": mhash}, indent=2, sort_keys=True) + "\n"
    )
    paths["manifest"] = manifest_path
    return paths


def benchmark_batch(
    manifest: RunManifest,
    metrics: MetricsConfig = MetricsConfig(),
    safety_classification: bool = True,
) -> list[ScenarioSummary]:
    design = DesignConfig.from_dict(manifest.design)
    scenarios = [scenario_from_dict(s) for s in manifest.scenarios]
    return [
        run_benchmark(
            scenario,
            n_max=design.rules.n_max,
            cycles=design.followup_cycles,
            tau1=design.rules.tau1,
            sims=manifest.sims,
            seed=manifest.seed,
            config=metrics,
            safety_classification=safety_classification,
        )
        for scenario in scenarios
    ]


def write_benchmark_outputs(
    manifest: RunManifest, summaries: list[ScenarioSummary]
) -> Path:
    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "benchmark.csv"
    path.write_text(summaries_to_csv(summaries, manifest.hash(), manifest.seed))
    return path


@dataclass(frozen=True)
class CalibrationResult:
    best: PriorHyper
    best_label: str
    table: list[dict]


def calibrate(
    candidates: list[tuple[str, PriorHyper]],
    manifest: RunManifest,
    metrics: MetricsConfig = MetricsConfig(),
) -> CalibrationResult:
    """Score prior candidates by mean PCS over the manifest's scenarios.

    Ties break by higher mean PAS, then lower mean sample size; the score
    table carries one row per candidate.
    """
    if not candidates:
        raise ValueError("calibration needs at least one candidate prior")
    table = []
    scored = []
    for label, prior in candidates:
        design_payload = dict(manifest.design)
        design_payload["prior"] = prior.to_dict()
        sub = RunManifest(
            design=design_payload,
            scenarios=manifest.scenarios,
            sims=manifest.sims,
            seed=manifest.seed,
            out_dir=manifest.out_dir,
            workers=manifest.workers,
            prior_label=label,
        )
        summaries, _ = simulate_batch(sub, metrics)
        mean_pcs = sum(s.pcs for s in summaries) / len(summaries)
        mean_pas = sum(s.pas for s in summaries) / len(summaries)
        mean_n = sum(s.mean_n for s in summaries) / len(summaries)
        table.append(
            {
                "label": label,
                "prior": prior.to_dict(),
                "mean_pcs": mean_pcs,
                "mean_pas": mean_pas,
                "mean_n": mean_n,
            }
        )
        scored.append(((-mean_pcs, -mean_pas, mean_n), label, prior))
    scored.sort(key=lambda item: item[0])
    _, best_label, best = scored[0]
    return CalibrationResult(best=best, best_label=best_label, table=table)


def write_calibration_outputs(
    manifest: RunManifest, result: CalibrationResult
) -> Path:
    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "calibration.csv"
    lines = [
        f"# manifest_hash={manifest.hash()}",
        f"# master_seed={manifest.seed}",
        "label,c1,c2,v1,v2,mean_pcs,mean_pas,mean_n,selected",
    ]
    for row in result.table:
        p = row["prior"]
        selected = int(row["label"] == result.best_label)
        lines.append(
            f"{row['label']},{p['c1']!r},{p['c2']!r},{p['v1']!r},{p['v2']!r},"
            f"{row['mean_pcs']!r},{row['mean_pas']!r},{row['mean_n']!r},{selected}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def load_archive(path: str | Path) -> tuple[dict, list[TrialResult]]:
    """Read back a per-trial result archive written by simulate."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"archive not found: {path}")
    opener = gzip.open if path.suffix == ".gz" else open
    results = []
    header: dict = {}
    with opener(path, "rt") as fh:
        first = fh.readline()
        header = json.loads(first)
        if "scenario" in header:  # archive without a header line
            results.append(TrialResult.from_dict(header))
            header = {}
        for line in fh:
            results.append(TrialResult.from_dict(json.loads(line)))
    return header, results


def report_from_archive(
    archive_path: str | Path,
    out_dir: str | Path,
    metrics: MetricsConfig = MetricsConfig(),
) -> dict[str, Path]:
    """Rebuild figure-ready long-format CSVs from a result archive."""
    header, results = load_archive(archive_path)
    by_scenario: dict[str, list[TrialResult]] = {}
    for r in results:
        by_scenario.setdefault(r.scenario_label, []).append(r)
    builtin = {s.label: s for s in builtin_scenarios()}
    summaries = []
    for label, rs in sorted(by_scenario.items(), key=lambda kv: _label_key(kv[0])):
        scenario = builtin.get(label)
        if scenario is None:
            raise ValueError(
                f"archive references scenario {label!r} with no built-in truth; "
                "re-run report against the original scenario file"
            )
        summaries.append(aggregate(rs, scenario, "archive", metrics))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mhash = header.get("manifest_hash", "unknown")
    seed = header.get("master_seed", -1)
    paths = {}
    long_path = out / "report_long.csv"
    long_path.write_text(summaries_to_long_csv(summaries, mhash, seed))
    paths["long"] = long_path
    wide_path = out / "report_summary.csv"
    wide_path.write_text(summaries_to_csv(summaries, mhash, seed))
    paths["summary"] = wide_path
    return paths


def _label_key(label: str):
    return (0, int(label)) if label.isdigit() else (1, label)


def builtin_prior(label: str) -> PriorHyper:
    try:
        return BUILTIN_PRIORS[label]
    except KeyError:
        raise KeyError(
            f"unknown builtin prior {label!r}; options: {sorted(BUILTIN_PRIORS)}"
        ) from None
