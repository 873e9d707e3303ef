"""Measurement harness: throughput across window budgets and rule counts,
plus rule-deployment latency.

Absolute event counts are hardware data and are not comparable across
machines; the reproducible findings are the trends (more rules -> fewer
events per budget, longer budget -> more events), so the report helpers
evaluate those as majority-of-repetitions properties.  "Rule count n"
always means the first n rules of the extended clinical model, so runs
are comparable.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
import time
from dataclasses import dataclass, field, replace as dc_replace
from pathlib import Path

from .clinical import extended_model, rule_prefix_model
from .cohort import GeneratorSpec, generate
from .fcl import parse_fcl, print_fcl
from .model import FuzzyModel
from .stream import SimulatedClock, StreamEngine, WallClock, WindowSpec

CSV_HEADER = "duration_s,rule_count,rep,events_processed,mean_event_latency_us,deploy_latency_us,status"


@dataclass(frozen=True)
class BenchPlan:
    durations_s: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0)
    rule_counts: tuple[int, ...] = (5, 10, 15, 20, 25)
    repetitions: int = 3
    simulated: bool = False
    rate: float | None = None  # events/second; None = unbounded (real clock only)
    window_s: float = 5.0
    source_seed: int = 7
    source_size: int = 256

    def __post_init__(self) -> None:
        if not self.durations_s or any(d <= 0 for d in self.durations_s):
            raise ValueError("durations must be positive")
        if not self.rule_counts or any(r <= 0 for r in self.rule_counts):
            raise ValueError("rule counts must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.simulated and self.rate is None:
            raise ValueError("a simulated-clock plan needs a fixed rate")


@dataclass(frozen=True)
class BenchRow:
    duration_s: float
    rule_count: int
    rep: int
    events_processed: int
    mean_event_latency_us: float | None
    deploy_latency_us: float | None
    status: str  # "ok" | "failed"


@dataclass
class BenchReport:
    plan: BenchPlan
    rows: list[BenchRow] = field(default_factory=list)

    def cell(self, duration_s: float, rule_count: int, rep: int) -> BenchRow:
        for row in self.rows:
            if (row.duration_s, row.rule_count, row.rep) == (duration_s, rule_count, rep):
                return row
        raise KeyError(f"no row for ({duration_s}, {rule_count}, {rep})")


def _source_events(plan: BenchPlan):
    return generate(GeneratorSpec(n=plan.source_size, seed=plan.source_seed))


def _run_cell(model: FuzzyModel, duration_s: float, plan: BenchPlan, events) -> tuple[int, float]:
    clock = SimulatedClock() if plan.simulated else WallClock()
    engine = StreamEngine(model, WindowSpec(plan.window_s), clock)
    n_events = len(events)
    started = time.perf_counter()
    if plan.rate is None:
        i = 0
        while clock.now_s() < duration_s:
            event = events[i % n_events]
            engine.feed(dc_replace(event, ts_ms=clock.now_ms()))
            i += 1
    else:
        i = 1
        while True:
            t = i / plan.rate
            if t > duration_s:
                break
            clock.wait_until(t)
            event = events[(i - 1) % n_events]
            engine.feed(dc_replace(event, ts_ms=round(t * 1000)))
            i += 1
    wall = time.perf_counter() - started
    summary = engine.close()
    return summary.events_scored, wall


def run_throughput(plan: BenchPlan) -> BenchReport:
    """Run the full (duration x rule-count x repetition) grid sequentially.

    A failing cell is recorded with status ``failed`` and the grid
    continues; every planned cell appears in the report exactly once.
    """
    base = extended_model()
    events = _source_events(plan)
    report = BenchReport(plan)
    for duration in plan.durations_s:
        for count in plan.rule_counts:
            model = rule_prefix_model(base, count)
            for rep in range(1, plan.repetitions + 1):
                try:
                    processed, wall = _run_cell(model, duration, plan, events)
                    mean_us = (wall / processed * 1e6) if processed else None
                    report.rows.append(BenchRow(duration, count, rep, processed, mean_us, None, "ok"))
                except Exception:
                    report.rows.append(BenchRow(duration, count, rep, 0, None, None, "failed"))
    return report


def run_deploy_latency(
    rule_counts=(5, 10, 15, 20, 25),
    repetitions: int = 3,
    window_s: float = 5.0,
) -> tuple[list[tuple[int, float]], list[BenchRow]]:
    """Deploy rule sets of each size into a running pipeline; median latency.

    Each candidate is deployed the way rules arrive in practice: as FCL
    text that must be parsed, validated, and compiled before the swap, so
    the measured latency covers the whole deployment path.
    """
    base = extended_model()
    clock = SimulatedClock()
    engine = StreamEngine(base, WindowSpec(window_s), clock)
    events = _source_events(BenchPlan(simulated=True, rate=1.0))
    for event in events[:8]:
        clock.advance(0.01)
        engine.feed(dc_replace(event, ts_ms=clock.now_ms()))

    results: list[tuple[int, float]] = []
    rows: list[BenchRow] = []
    for count in rule_counts:
        texts = [
            print_fcl(rule_prefix_model(base, count, name=f"deploy_{count}_{rep}"))
            for rep in range(1, repetitions + 1)
        ]
        latencies: list[float] = []
        for rep, text in enumerate(texts, start=1):
            try:
                started = time.perf_counter()
                engine.deploy(parse_fcl(text))
                latency = (time.perf_counter() - started) * 1e6
                latencies.append(latency)
                rows.append(BenchRow(0.0, count, rep, 0, None, latency, "ok"))
            except Exception:
                rows.append(BenchRow(0.0, count, rep, 0, None, None, "failed"))
            clock.advance(window_s)
            engine.feed(dc_replace(events[rep % len(events)], ts_ms=clock.now_ms()))
        if latencies:
            results.append((count, statistics.median(latencies)))
    engine.close()
    return results, rows


# ---- trend evaluation --------------------------------------------------------


def _majority(repetitions: int) -> int:
    return math.ceil(2 * repetitions / 3)


def rule_count_trend(report: BenchReport) -> dict[float, bool]:
    """Per duration: events non-increasing in rule count, in a two-thirds
    majority of repetitions."""
    plan = report.plan
    counts = sorted(plan.rule_counts)
    verdict: dict[float, bool] = {}
    for duration in plan.durations_s:
        holds = 0
        for rep in range(1, plan.repetitions + 1):
            series = [report.cell(duration, c, rep) for c in counts]
            if any(row.status != "ok" for row in series):
                continue
            values = [row.events_processed for row in series]
            if all(values[i] >= values[i + 1] for i in range(len(values) - 1)):
                holds += 1
        verdict[duration] = holds >= _majority(plan.repetitions)
    return verdict


def duration_trend(report: BenchReport) -> dict[int, bool]:
    """Per rule count: events strictly increasing in duration, in a
    two-thirds majority of repetitions."""
    plan = report.plan
    durations = sorted(plan.durations_s)
    verdict: dict[int, bool] = {}
    for count in plan.rule_counts:
        holds = 0
        for rep in range(1, plan.repetitions + 1):
            series = [report.cell(d, count, rep) for d in durations]
            if any(row.status != "ok" for row in series):
                continue
            values = [row.events_processed for row in series]
            if all(values[i] < values[i + 1] for i in range(len(values) - 1)):
                holds += 1
        verdict[count] = holds >= _majority(plan.repetitions)
    return verdict


# ---- report IO ----------------------------------------------------------------


def _cell_str(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(rows: list[BenchRow], path: str | Path, format: str = "csv") -> None:
    """Serialize every row (failed cells included) to CSV or NDJSON."""
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER.split(","))
            for row in rows:
                writer.writerow([
                    _cell_str(row.duration_s), _cell_str(row.rule_count), _cell_str(row.rep),
                    _cell_str(row.events_processed), _cell_str(row.mean_event_latency_us),
                    _cell_str(row.deploy_latency_us), row.status,
                ])
    elif format == "ndjson":
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps({
                    "duration_s": row.duration_s,
                    "rule_count": row.rule_count,
                    "rep": row.rep,
                    "events_processed": row.events_processed,
                    "mean_event_latency_us": row.mean_event_latency_us,
                    "deploy_latency_us": row.deploy_latency_us,
                    "status": row.status,
                }, separators=(",", ":")) + "\n")
    else:
        raise ValueError(f"unknown report format {format!r}")


def read_report(path: str | Path, format: str = "csv") -> list[BenchRow]:
    rows: list[BenchRow] = []
    if format == "csv":
        with open(path, "r", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != CSV_HEADER.split(","):
                raise ValueError(f"unexpected report header: {header}")
            for rec in reader:
                rows.append(BenchRow(
                    duration_s=float(rec[0]),
                    rule_count=int(rec[1]),
                    rep=int(rec[2]),
                    events_processed=int(rec[3]),
                    mean_event_latency_us=None if rec[4] == "" else float(rec[4]),
                    deploy_latency_us=None if rec[5] == "" else float(rec[5]),
                    status=rec[6],
                ))
    elif format == "ndjson":
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                rows.append(BenchRow(**obj))
    else:
        raise ValueError(f"unknown report format {format!r}")
    return rows
