"""Command-line interface: simulate, benchmark, calibrate, report, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .batch import (
    RunManifest,
    benchmark_batch,
    builtin_prior,
    calibrate,
    report_from_archive,
    simulate_batch,
    write_benchmark_outputs,
    write_calibration_outputs,
    write_simulation_outputs,
)
from .model import BUILTIN_PRIORS, PriorHyper
from .scenarios import builtin_scenarios, dump_scenarios, load_scenarios, scenario_to_dict
from .trial import DesignConfig


def _parse_scenarios(spec: str):
    """Scenario selector: '1-17', '1,3,9', or a path to a scenario JSON file."""
    if Path(spec).exists():
        return list(load_scenarios(spec))
    builtin = builtin_scenarios()
    picked = []
    for token in spec.split(","):
        token = token.strip()
        if "-" in token:
            lo, hi = token.split("-", 1)
            picked.extend(range(int(lo), int(hi) + 1))
        else:
            picked.append(int(token))
    for number in picked:
        if not 1 <= number <= len(builtin):
            raise SystemExit(f"scenario {number} outside 1..{len(builtin)}")
    return [builtin[number - 1] for number in picked]


def _parse_prior(spec: str) -> tuple[str, PriorHyper]:
    if spec in BUILTIN_PRIORS:
        return spec, builtin_prior(spec)
    path = Path(spec)
    if path.exists():
        return path.stem, PriorHyper.from_dict(json.loads(path.read_text()))
    raise SystemExit(
        f"prior {spec!r} is neither a builtin id {sorted(BUILTIN_PRIORS)} nor a file"
    )


def _design_from_args(args) -> DesignConfig:
    if args.design:
        base = DesignConfig.from_dict(json.loads(Path(args.design).read_text()))
    else:
        base = DesignConfig(grid=builtin_scenarios()[0].grid)
    _, prior = _parse_prior(args.prior)
    rules = base.rules.to_dict()
    for flag, key in (
        ("tau1", "tau1"),
        ("psi", "psi"),
        ("kfold", "kfold"),
        ("unsafe_prob", "unsafe_prob"),
        ("safe_prob", "safe_prob"),
        ("cv_limit", "cv_limit"),
        ("n_max", "n_max"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            rules[key] = value
    payload = base.to_dict()
    payload["prior"] = prior.to_dict()
    payload["rules"] = rules
    payload["backfill_policy"] = args.policy
    payload["followup_cycles"] = args.cycles
    return DesignConfig.from_dict(payload)


def _manifest_from_args(args) -> RunManifest:
    design = _design_from_args(args)
    scenarios = _parse_scenarios(args.scenarios)
    prior_label, _ = _parse_prior(args.prior)
    return RunManifest(
        design=design.to_dict(),
        scenarios=tuple(scenario_to_dict(s) for s in scenarios),
        sims=args.sims,
        seed=args.seed,
        out_dir=args.out,
        workers=args.workers,
        prior_label=prior_label,
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenarios", default="1-17", help="ids like '1-17' or '1,3,9', or a scenario JSON file")
    parser.add_argument("--sims", type=int, default=1000, help="simulated trials per scenario")
    parser.add_argument("--seed", type=int, default=2024, help="master seed")
    parser.add_argument("--policy", choices=("none", "partial", "full"), default="none")
    parser.add_argument("--cycles", type=int, choices=(1, 3), default=1)
    parser.add_argument("--prior", default="vague", help="builtin prior id or JSON file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--design", help="DesignConfig JSON file to start from")
    parser.add_argument("--tau1", type=float, default=None)
    parser.add_argument("--psi", type=float, default=None)
    parser.add_argument("--kfold", type=float, default=None)
    parser.add_argument("--unsafe-prob", dest="unsafe_prob", type=float, default=None)
    parser.add_argument("--safe-prob", dest="safe_prob", type=float, default=None)
    parser.add_argument("--cv-limit", dest="cv_limit", type=float, default=None)
    parser.add_argument("--n-max", dest="n_max", type=int, default=None)


def _cmd_simulate(args) -> int:
    manifest = _manifest_from_args(args)
    summaries, results = simulate_batch(manifest)
    paths = write_simulation_outputs(manifest, summaries, results)
    for s in summaries:
        print(
            f"scenario {s.scenario}: pcs={s.pcs:.3f} pas={s.pas:.3f} "
            f"mean_n={s.mean_n:.1f} mean_duration={s.mean_duration:.1f}w"
        )
    print(f"summary: {paths['summary']}")
    print(f"archive: {paths['archive']}")
    return 0


def _cmd_benchmark(args) -> int:
    manifest = _manifest_from_args(args)
    summaries = benchmark_batch(manifest)
    path = write_benchmark_outputs(manifest, summaries)
    for s in summaries:
        print(f"scenario {s.scenario}: benchmark pcs={s.pcs:.3f} pas={s.pas:.3f}")
    print(f"benchmark: {path}")
    return 0


def _cmd_calibrate(args) -> int:
    manifest = _manifest_from_args(args)
    if args.candidates:
        payload = json.loads(Path(args.candidates).read_text())
        candidates = [
            (item.get("label", f"candidate-{i}"), PriorHyper.from_dict(item))
            for i, item in enumerate(payload)
        ]
    else:
        candidates = [(label, prior) for label, prior in BUILTIN_PRIORS.items()]
    result = calibrate(candidates, manifest)
    path = write_calibration_outputs(manifest, result)
    print(f"best prior: {result.best_label} {result.best.to_dict()}")
    print(f"table: {path}")
    return 0


def _cmd_report(args) -> int:
    paths = report_from_archive(args.archive, args.out)
    print(f"long: {paths['long']}")
    print(f"summary: {paths['summary']}")
    return 0


def _cmd_export_scenarios(args) -> int:
    dump_scenarios(list(builtin_scenarios()), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(data_dir=args.data_dir, token=args.token, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dosefill",
        description="Dose-escalation trial simulation and conduct with backfilling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="batch-simulate trials and aggregate")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("benchmark", help="non-parametric benchmark summaries")
    _add_common(p)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("calibrate", help="score candidate priors by mean PCS")
    _add_common(p)
    p.add_argument("--candidates", help="JSON file with candidate priors")
    p.set_defaults(func=_cmd_calibrate)
    p.set_defaults(scenarios="1,3,4,6,9,13")

    p = sub.add_parser("report", help="figure-ready CSVs from a result archive")
    p.add_argument("archive", help="trials.jsonl(.gz) archive path")
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("export-scenarios", help="write the built-in scenarios as JSON")
    p.add_argument("--out", default="scenarios.json")
    p.set_defaults(func=_cmd_export_scenarios)

    p = sub.add_parser("serve", help="run the live-conduct HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8440)
    p.add_argument("--data-dir", default=None, help="event-log directory (or DOSEFILL_DATA_DIR)")
    p.add_argument("--token", default=None, help="static auth token (or DOSEFILL_TOKEN)")
    p.add_argument("--ui", default=None, help="directory of built UI static files")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
