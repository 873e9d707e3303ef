"""Command-line entry point.

Subcommands: ``check`` (parse + validate FCL), ``infer`` (score one
record), ``run`` (stream pipeline), ``gen`` (synthetic cohort), ``bench``
(measurement grids).  Human-readable output goes to stdout and
diagnostics to stderr; exit codes are 0 success, 1 runtime error,
2 usage error, 3 validation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from . import clinical, cohort
from .engine import EngineError, MissingVariable, RiskCategory, infer
from .fcl import FclError, FclSyntaxError, parse_fcl, print_fcl, validate_model
from .model import FuzzyModel
from .stream import (
    LineSource,
    NdjsonSink,
    ReplaySource,
    SimulatedClock,
    SinkFailure,
    TcpSource,
    WallClock,
    WindowSpec,
    process,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _load_model(args, parser: argparse.ArgumentParser) -> FuzzyModel | int:
    """Resolve --builtin/--extended/path into a model, or an exit code."""
    if getattr(args, "builtin", False):
        return clinical.builtin_model()
    if getattr(args, "extended", False):
        return clinical.extended_model()
    path = getattr(args, "model", None) or getattr(args, "fcl_path", None)
    if path in (None, "builtin"):
        return clinical.builtin_model()
    if path == "extended":
        return clinical.extended_model()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _err(f"cannot read model file: {exc}")
        return EXIT_RUNTIME
    try:
        return parse_fcl(text)
    except FclError as exc:
        _err(f"{path}: {exc}")
        return EXIT_VALIDATION


# ---- check -------------------------------------------------------------------


def cmd_check(args) -> int:
    try:
        text = Path(args.fcl_path).read_text(encoding="utf-8")
    except OSError as exc:
        _err(f"cannot read {args.fcl_path}: {exc}")
        return EXIT_RUNTIME
    try:
        model = parse_fcl(text)
    except FclError as exc:
        kind = "syntax" if isinstance(exc, FclSyntaxError) else "semantic"
        _err(f"{args.fcl_path}: {kind} error: {exc}")
        return EXIT_VALIDATION
    diags = validate_model(model)
    for diag in diags:
        _err(f"{args.fcl_path}: {diag.severity}: {diag.location}: {diag.message}")
    if any(d.is_error for d in diags):
        return EXIT_VALIDATION
    sys.stdout.write(print_fcl(model))
    return EXIT_OK


# ---- infer -------------------------------------------------------------------


def _resolve_inputs(model: FuzzyModel, pairs: dict[str, float]) -> dict[str, float]:
    known = set(model.input_names())
    resolved: dict[str, float] = {}
    unknown: list[str] = []
    for key, value in pairs.items():
        name = key if key in known else clinical.INPUT_ALIASES.get(key, key)
        if name in known:
            resolved[name] = value
        else:
            unknown.append(key)
    if unknown:
        raise KeyError(", ".join(sorted(unknown)))
    return resolved


def _read_record(parser: argparse.ArgumentParser) -> dict[str, float]:
    line = sys.stdin.readline()
    if not line.strip():
        parser.error("no key=value pairs given and no NDJSON record on stdin")
    try:
        event = clinical.event_from_json(line)
        return clinical.event_inputs(event)
    except ValueError:
        pass
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        parser.error(f"stdin record is not valid JSON: {exc}")
    if not isinstance(obj, dict):
        parser.error("stdin record must be a JSON object")
    try:
        return {str(k): float(v) for k, v in obj.items()}
    except (TypeError, ValueError):
        parser.error("stdin record values must be numeric")
    raise AssertionError("unreachable")


def cmd_infer(args, parser: argparse.ArgumentParser) -> int:
    model = _load_model(args, parser)
    if isinstance(model, int):
        return model

    pairs: dict[str, float] = {}
    if args.inputs:
        for item in args.inputs:
            if "=" not in item:
                parser.error(f"expected key=value, got {item!r}")
            key, _, raw = item.partition("=")
            try:
                pairs[key.strip()] = float(raw)
            except ValueError:
                parser.error(f"value for {key!r} is not numeric: {raw!r}")
    else:
        pairs = _read_record(parser)

    try:
        inputs = _resolve_inputs(model, pairs)
    except KeyError as exc:
        parser.error(f"unknown input variable(s): {exc.args[0]}")
    missing = sorted(set(model.required_inputs()) - inputs.keys())
    if missing:
        parser.error("missing value for variable(s): " + ", ".join(missing))

    try:
        result = infer(model, inputs)
    except EngineError as exc:
        _err(f"inference failed: {exc}")
        return EXIT_RUNTIME

    if args.json:
        obj = {
            "score": round(result.score, 4),
            "category": result.category,
            "fired": [{"rule": f.rule_id, "strength": round(f.strength, 4)} for f in result.fired],
            "memberships": {
                mv.variable: {t: round(d, 4) for t, d in mv.entries.items()}
                for mv in result.memberships
            },
            "clamped": sorted(mv.variable for mv in result.memberships if mv.clamped),
        }
        print(json.dumps(obj, separators=(",", ":")))
        return EXIT_OK

    print(f"model: {model.name}")
    print("memberships:")
    for mv in result.memberships:
        degrees = ", ".join(f"{t}: {d:.4f}" for t, d in mv.entries.items())
        suffix = "  [clamped]" if mv.clamped else ""
        print(f"  {mv.variable} = {inputs[mv.variable]:g} -> {degrees}{suffix}")
    print("fired rules:")
    if result.fired:
        for f in result.fired:
            print(f"  {f.rule_id}  strength {f.strength:.4f}")
    else:
        print("  (none)")
    print(f"score: {result.score:.4f}")
    print(f"category: {result.category}")
    return EXIT_OK


# ---- run ---------------------------------------------------------------------


def cmd_run(args, parser: argparse.ArgumentParser) -> int:
    model = _load_model(args, parser)
    if isinstance(model, int):
        return model
    clock = SimulatedClock() if args.simulated_clock else WallClock()

    tcp_source = None
    if args.source == "-":
        source = LineSource(sys.stdin, clock)
    elif args.source.startswith("tcp:"):
        try:
            port = int(args.source.split(":", 1)[1])
        except ValueError:
            parser.error(f"bad tcp source {args.source!r}; expected tcp:PORT")
        source = tcp_source = TcpSource(port, clock)
        _err(f"listening on port {tcp_source.port}")
    else:
        if not Path(args.source).exists():
            _err(f"source file not found: {args.source}")
            return EXIT_RUNTIME
        source = ReplaySource(args.source, args.format, args.rate, clock)

    sinks = {}
    try:
        if args.out:
            sinks["alert_sink"] = NdjsonSink(args.out)
        if args.stats:
            sinks["stats_sink"] = NdjsonSink(args.stats)
        if args.assessments:
            sinks["assessment_sink"] = NdjsonSink(args.assessments)
    except OSError as exc:
        _err(f"cannot open sink: {exc}")
        return EXIT_RUNTIME

    threshold = RiskCategory.from_label(args.threshold)
    try:
        summary = process(
            source, model, WindowSpec(args.window), clock=clock,
            threshold=threshold, **sinks,
        )
    except SinkFailure as failure:
        _err(f"aborted: {failure}")
        print(failure.summary.render())
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        if tcp_source is not None:
            tcp_source.stop()
        return EXIT_RUNTIME
    except OSError as exc:
        _err(f"source failed: {exc}")
        return EXIT_RUNTIME
    finally:
        for sink in sinks.values():
            sink.close()
    print(summary.render())
    return EXIT_OK


# ---- gen ---------------------------------------------------------------------


def cmd_gen(args, parser: argparse.ArgumentParser) -> int:
    if args.n <= 0:
        parser.error(f"--n must be positive, got {args.n}")
    spec = cohort.GeneratorSpec(n=args.n, seed=args.seed)
    events = cohort.generate(spec)
    try:
        cohort.write_cohort(events, args.out, args.format)
    except OSError as exc:
        _err(f"cannot write cohort: {exc}")
        return EXIT_RUNTIME
    print(f"generated {spec.n} events (seed {spec.seed}, format {args.format}) -> {args.out}")
    return EXIT_OK


# ---- bench -------------------------------------------------------------------


def _parse_floats(raw: str, parser: argparse.ArgumentParser, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError:
        parser.error(f"{flag} expects a comma-separated list of numbers, got {raw!r}")


def cmd_bench(args, parser: argparse.ArgumentParser) -> int:
    durations = _parse_floats(args.durations, parser, "--durations")
    rules = tuple(int(r) for r in _parse_floats(args.rules, parser, "--rules"))
    try:
        plan = bench_mod.BenchPlan(
            durations_s=durations,
            rule_counts=rules,
            repetitions=args.reps,
            simulated=args.simulated_clock,
            rate=args.rate,
            window_s=args.window,
        )
    except ValueError as exc:
        parser.error(str(exc))

    report = bench_mod.run_throughput(plan)
    rows = list(report.rows)

    print(f"{'duration_s':>10} {'rules':>6} {'rep':>4} {'events':>10} {'status':>7}")
    for row in report.rows:
        print(f"{row.duration_s:>10g} {row.rule_count:>6} {row.rep:>4} "
              f"{row.events_processed:>10} {row.status:>7}")

    for duration, ok in bench_mod.rule_count_trend(report).items():
        print(f"trend events-nonincreasing-in-rules @ {duration:g}s: {'PASS' if ok else 'FAIL'}")
    for count, ok in bench_mod.duration_trend(report).items():
        print(f"trend events-increasing-in-duration @ {count} rules: {'PASS' if ok else 'FAIL'}")

    if args.deploy_latency:
        medians, deploy_rows = bench_mod.run_deploy_latency(rules, args.reps, args.window)
        rows.extend(deploy_rows)
        for count, latency in medians:
            print(f"deploy latency @ {count} rules: {latency:.1f} us (median)")

    if args.out:
        try:
            bench_mod.write_report(rows, args.out, args.format)
        except OSError as exc:
            _err(f"cannot write report: {exc}")
            return EXIT_RUNTIME
        print(f"report -> {args.out}")

    if any(row.status != "ok" for row in rows):
        _err("one or more benchmark cells failed")
        return EXIT_RUNTIME
    return EXIT_OK


# ---- parser wiring -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cardiocep",
        description="Fuzzy rule-based CEP engine for cardiovascular risk streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="parse and validate an FCL file; print canonical form")
    p_check.add_argument("fcl_path", help="path to an FCL file")

    p_infer = sub.add_parser("infer", help="score one record against a model")
    group = p_infer.add_mutually_exclusive_group()
    group.add_argument("--builtin", action="store_true", help="use the built-in clinical model")
    group.add_argument("--extended", action="store_true", help="use the extended clinical model")
    group.add_argument("--fcl", dest="fcl_path", help="path to an FCL model file")
    p_infer.add_argument("--json", action="store_true", help="emit one NDJSON object instead of text")
    p_infer.add_argument("inputs", nargs="*", metavar="key=value",
                         help="inference inputs; omit to read one NDJSON record from stdin")

    p_run = sub.add_parser("run", help="run the streaming pipeline over a source")
    p_run.add_argument("--source", required=True,
                       help="file path, '-' for stdin NDJSON, or tcp:PORT")
    p_run.add_argument("--format", default="canonical-csv",
                       choices=["kaggle-cardio", "canonical-csv", "ndjson"])
    p_run.add_argument("--window", type=float, default=5.0, help="window length in seconds")
    p_run.add_argument("--model", default="builtin",
                       help="'builtin', 'extended', or a path to an FCL file")
    p_run.add_argument("--out", default=os.environ.get("CARDIOCEP_ALERTS"),
                       help="alert NDJSON path (env default CARDIOCEP_ALERTS)")
    p_run.add_argument("--stats", default=os.environ.get("CARDIOCEP_STATS"),
                       help="window stats NDJSON path (env default CARDIOCEP_STATS)")
    p_run.add_argument("--assessments", default=None, help="full assessment NDJSON path")
    p_run.add_argument("--threshold", default="Medium",
                       choices=[c.label for c in RiskCategory], help="alert threshold")
    p_run.add_argument("--rate", type=float, default=100.0, help="file replay rate, events/second")
    p_run.add_argument("--simulated-clock", action="store_true")

    p_gen = sub.add_parser("gen", help="generate a synthetic cohort")
    p_gen.add_argument("--n", type=int, default=1000)
    p_gen.add_argument("--seed", type=int, default=42)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--format", default="canonical-csv", choices=["canonical-csv", "ndjson"])

    p_bench = sub.add_parser("bench", help="run the throughput / deploy-latency grid")
    p_bench.add_argument("--durations", default="5,10,15,20,25", help="comma-separated seconds")
    p_bench.add_argument("--rules", default="5,10,15,20,25", help="comma-separated rule counts")
    p_bench.add_argument("--reps", type=int, default=3)
    p_bench.add_argument("--out", default=os.environ.get("CARDIOCEP_REPORT"),
                         help="report path (env default CARDIOCEP_REPORT)")
    p_bench.add_argument("--format", default="csv", choices=["csv", "ndjson"])
    p_bench.add_argument("--simulated-clock", action="store_true")
    p_bench.add_argument("--rate", type=float, default=None,
                         help="fixed source rate; required with --simulated-clock")
    p_bench.add_argument("--window", type=float, default=5.0)
    p_bench.add_argument("--deploy-latency", action="store_true",
                         help="also measure rule deployment latency per rule count")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "check":
        return cmd_check(args)
    if args.command == "infer":
        return cmd_infer(args, parser)
    if args.command == "run":
        return cmd_run(args, parser)
    if args.command == "gen":
        return cmd_gen(args, parser)
    if args.command == "bench":
        return cmd_bench(args, parser)
    parser.error(f"unknown command {args.command!r}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
