"""Command-line entry point: ``vecoffload {run,bench,failure-drill,penalty-study,validate}``.

Exit codes: 0 success, 1 usage or scenario parse/validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from . import experiments
from .decision import PsoConfig
from .detection import classify_all, trace_report
from .scenario_io import (
    ScenarioError,
    format_rows,
    load_scenario,
    timeline_rows,
    trace_rows,
    write_json,
    write_rows,
)
from .scenarios import BUILTIN
from .simulator import ScenarioConfig, run_scenario

log = logging.getLogger("vecoffload")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

_EXT = {"csv": "csv", "json-lines": "jsonl"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _scenario(arg: str, seed: Optional[int]) -> ScenarioConfig:
    if arg.startswith("builtin:"):
        name = arg.split(":", 1)[1]
        if name not in BUILTIN:
            raise ScenarioError("scenario", f"unknown builtin {name!r}; choose from {sorted(BUILTIN)}")
        config = BUILTIN[name]()
    else:
        config = load_scenario(arg)
    if seed is not None:
        config = replace(config, rng_seed=seed)
    return config


def _out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    config = _scenario(args.scenario, args.seed)
    trace = run_scenario(config)
    trace = replace(trace, records=classify_all(trace.records, config.outcome_policy))
    out = _out(args.out)
    ext = _EXT[args.format]
    write_rows(out / f"trace.{ext}", trace_rows(trace), args.format)
    write_rows(out / f"timeline.{ext}", timeline_rows(trace), args.format, ["t_ms", "server", "registry", "up"])
    summary = trace_report(trace, config.outcome_policy).as_dict()
    write_json(out / "summary.json", summary)
    print(f"{summary['decisions']} decisions, success rate {summary['success_rate']:.4f}, targets {summary['target_counts']}")
    return EXIT_OK


def cmd_bench(args) -> int:
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    pso = PsoConfig(
        particles=args.particles, iterations=args.iterations, rng_seed=args.seed if args.seed is not None else 0
    )
    result = experiments.bench(
        args.tasks,
        args.servers,
        args.instances,
        seed=args.seed or 0,
        solvers=solvers,
        pso_config=pso,
        timing=not args.no_timing,
        repetitions=args.repetitions,
    )
    out = _out(args.out)
    ext = _EXT[args.format]
    write_rows(out / f"bench_instances.{ext}", result.instances, args.format)
    write_rows(out / f"bench_summary.{ext}", result.summary, args.format)
    sys.stdout.write(format_rows(result.summary, "csv"))
    if result.timing:
        write_rows(out / f"bench_timing.{ext}", result.timing, args.format)
        sys.stdout.write(format_rows(result.timing, "csv"))
    return EXIT_OK


def cmd_failure_drill(args) -> int:
    config = _scenario(args.scenario, args.seed)
    if not config.failures.events:
        raise ScenarioError("failures.events", "failure drill needs a nonempty schedule")
    trace = run_scenario(config)
    trace = replace(trace, records=classify_all(trace.records, config.outcome_policy))
    reports = [r.as_dict() for r in experiments.failure_drill(config, trace)]
    out = _out(args.out)
    ext = _EXT[args.format]
    write_rows(out / f"failure_report.{ext}", reports, args.format)
    write_rows(out / f"trace.{ext}", trace_rows(trace), args.format)
    write_rows(out / f"timeline.{ext}", timeline_rows(trace), args.format, ["t_ms", "server", "registry", "up"])
    sys.stdout.write(format_rows(reports, "csv"))
    return EXIT_OK


def _parse_sweep(text: Optional[str]) -> Sequence[Tuple[float, float]]:
    if not text:
        return experiments.DEFAULT_WEIGHT_SWEEP
    pairs = []
    for chunk in text.split(";"):
        try:
            a, b = (float(v) for v in chunk.split(","))
        except ValueError:
            raise ScenarioError("weights", f"expected 'w_dir,w_dist;...', got {chunk!r}") from None
        pairs.append((a, b))
    return pairs


def cmd_penalty_study(args) -> int:
    config = _scenario(args.scenario, args.seed)
    rows = experiments.penalty_study(config, _parse_sweep(args.weights))
    out = _out(args.out)
    write_rows(out / f"penalty_study.{_EXT[args.format]}", rows, args.format)
    print(f"{len(rows)} rows written to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _scenario(args.scenario, args.seed)
    print(
        f"ok: {len(config.servers)} servers, {len(config.services)} services, "
        f"{config.n_ticks} ticks of {config.decision_interval} ms"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vecoffload", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, scenario=True, out=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario YAML path or builtin:NAME")
        if out:
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--format", choices=sorted(_EXT), default="csv")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p = sub.add_parser("run", help="simulate a scenario and write its decision trace")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="compare solvers against brute force on random instances")
    common(p, scenario=False)
    p.add_argument("--tasks", type=int, default=10)
    p.add_argument("--servers", type=int, default=10)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--solvers", default="bf,pso,greedy")
    p.add_argument("--particles", type=int, default=10)
    p.add_argument("--iterations", type=int, default=80)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="skip wall-clock measurement (deterministic output)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("failure-drill", help="report detection latency and stale decisions per failure")
    common(p)
    p.set_defaults(func=cmd_failure_drill)

    p = sub.add_parser("penalty-study", help="per-tick decisions across a sweep of penalty weights")
    common(p)
    p.add_argument("--weights", default=None, help="sweep as 'w_dir,w_dist;w_dir,w_dist;...'")
    p.set_defaults(func=cmd_penalty_study)

    p = sub.add_parser("validate", help="parse and validate a scenario file")
    common(p, out=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, FileNotFoundError) else EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
