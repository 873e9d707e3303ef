"""In-process CEP runtime: event sources, tumbling windows, NDJSON sinks.

The pipeline is producer -> scorer -> consumers.  Sources yield
:class:`~cardiocep.clinical.PatientEvent` records (replayed from files,
read from stdin, or received over TCP through a bounded blocking buffer);
the scorer assigns each event to one tumbling window and runs the active
fuzzy model; sinks receive alert/assessment/window-statistics lines.

Models are swapped atomically at window boundaries so that every window's
assessments are attributable to exactly one rule set.  All timing runs
against an injectable clock; with the simulated clock a run is fully
deterministic, byte for byte.
"""

from __future__ import annotations

import json
import queue
import socket
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from . import engine as _engine
from .clinical import (
    PatientEvent,
    event_from_json,
    event_inputs,
    is_header_line,
    parse_dataset_row,
)
from .engine import FiredRule, NoRuleFired, RiskCategory, classify_risk
from .fcl import Diagnostic, validate_model
from .model import FuzzyModel


class StreamError(Exception):
    pass


class RejectedDeployment(StreamError):
    """A hot-deploy candidate failed validation; the old model stays active."""

    def __init__(self, diagnostics: list[Diagnostic]):
        msgs = "; ".join(f"{d.location}: {d.message}" for d in diagnostics)
        super().__init__(f"model rejected: {msgs}")
        self.diagnostics = diagnostics


class SinkFailure(StreamError):
    """A sink write failed; carries the progress made before the abort."""

    def __init__(self, summary: "RunSummary", cause: Exception):
        super().__init__(f"sink write failed: {cause}")
        self.summary = summary
        self.cause = cause


# ---- clocks ----------------------------------------------------------------


class SimulatedClock:
    """Deterministic clock driven only by explicit advances; never sleeps."""

    def __init__(self, start_s: float = 0.0):
        self._now = float(start_s)

    @property
    def simulated(self) -> bool:
        return True

    def now_s(self) -> float:
        return self._now

    def now_ms(self) -> int:
        return round(self._now * 1000)

    def advance(self, dt_s: float) -> None:
        if dt_s < 0:
            raise ValueError("clock cannot move backwards")
        self._now += dt_s

    def wait_until(self, t_s: float) -> None:
        if t_s > self._now:
            self._now = t_s


class WallClock:
    """Monotonic wall clock anchored at construction time."""

    def __init__(self):
        self._t0 = time.monotonic()

    @property
    def simulated(self) -> bool:
        return False

    def now_s(self) -> float:
        return time.monotonic() - self._t0

    def now_ms(self) -> int:
        return round(self.now_s() * 1000)

    def wait_until(self, t_s: float) -> None:
        delay = t_s - self.now_s()
        if delay > 0:
            time.sleep(delay)


# ---- windowing ---------------------------------------------------------------


@dataclass(frozen=True)
class WindowSpec:
    """Epoch-aligned tumbling windows of fixed length (seconds)."""

    length_s: float = 5.0

    def __post_init__(self) -> None:
        if self.length_s <= 0:
            raise ValueError(f"window length {self.length_s} must be positive")

    @property
    def length_ms(self) -> int:
        return round(self.length_s * 1000)


def assign_window(ts_ms: int, spec: WindowSpec) -> int:
    """Window index of a timestamp; intervals are half-open [start, end)."""
    if ts_ms < 0:
        raise ValueError(f"timestamp {ts_ms} precedes the stream epoch")
    return ts_ms // spec.length_ms


# ---- wire records ------------------------------------------------------------


def _round2(x: float) -> float:
    return float(f"{x:.2f}")


def _round4(x: float) -> float:
    return float(f"{x:.4f}")


@dataclass(frozen=True)
class RiskAssessment:
    """The alert payload for one scored event."""

    event_id: str
    ts_ms: int
    window_id: int
    score: float  # percent, 2 decimal places
    category: RiskCategory
    fired: tuple[FiredRule, ...]
    flags: tuple[str, ...]

    def to_json(self) -> str:
        obj = {
            "event_id": self.event_id,
            "ts_ms": self.ts_ms,
            "window_id": self.window_id,
            "score": self.score,
            "category": self.category.label,
            "fired": [{"rule": f.rule_id, "strength": f.strength} for f in self.fired],
            "flags": list(self.flags),
        }
        return json.dumps(obj, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "RiskAssessment":
        obj = json.loads(line)
        return cls(
            event_id=obj["event_id"],
            ts_ms=obj["ts_ms"],
            window_id=obj["window_id"],
            score=obj["score"],
            category=RiskCategory.from_label(obj["category"]),
            fired=tuple(FiredRule(f["rule"], f["strength"]) for f in obj["fired"]),
            flags=tuple(obj["flags"]),
        )


@dataclass
class WindowStats:
    """Per-window counters, plus run-cumulative totals for trend reports."""

    window_id: int
    start_ms: int
    end_ms: int
    events_in: int = 0
    events_scored: int = 0
    counts: dict[RiskCategory, int] = field(default_factory=lambda: {c: 0 for c in RiskCategory})
    rule_count: int = 0
    cum_events_in: int = 0
    cum_events_scored: int = 0

    def to_json(self) -> str:
        obj = {
            "window_id": self.window_id,
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "events_in": self.events_in,
            "events_scored": self.events_scored,
            "very_low": self.counts[RiskCategory.VERY_LOW],
            "low": self.counts[RiskCategory.LOW],
            "medium": self.counts[RiskCategory.MEDIUM],
            "high": self.counts[RiskCategory.HIGH],
            "very_high": self.counts[RiskCategory.VERY_HIGH],
            "rule_count": self.rule_count,
            "cum_events_in": self.cum_events_in,
            "cum_events_scored": self.cum_events_scored,
        }
        return json.dumps(obj, separators=(",", ":"))


@dataclass(frozen=True)
class DeploymentReceipt:
    model_name: str
    rule_count: int
    requested_ms: int
    effective_window: int
    swap_latency_us: float  # wall time spent validating + compiling
    time_to_effective_ms: int  # clock time until the boundary takes effect


@dataclass
class RunSummary:
    """Aggregate totals for one stream run (the final report shape)."""

    events_in: int = 0
    events_scored: int = 0
    rejects: int = 0
    score_failures: int = 0
    windows: int = 0
    counts: dict[RiskCategory, int] = field(default_factory=lambda: {c: 0 for c in RiskCategory})
    alerts: int = 0
    deployments: int = 0
    aborted: bool = False

    def render(self) -> str:
        lines = [
            "run summary",
            f"  events in        {self.events_in}",
            f"  events scored    {self.events_scored}",
            f"  rejected records {self.rejects}",
            f"  windows          {self.windows}",
            f"  alerts emitted   {self.alerts}",
            f"  deployments      {self.deployments}",
        ]
        if self.score_failures:
            lines.append(f"  score failures   {self.score_failures}")
        for cat in RiskCategory:
            lines.append(f"  {cat.label:<16} {self.counts[cat]}")
        if self.aborted:
            lines.append("  status           ABORTED")
        return "\n".join(lines)


# ---- sinks -------------------------------------------------------------------


class NdjsonSink:
    """Writes one JSON object per line to a path or an open text stream."""

    def __init__(self, target: str | Path | TextIO):
        if isinstance(target, (str, Path)):
            self._fh: TextIO = open(target, "w", encoding="utf-8", newline="\n")
            self._owned = True
        else:
            self._fh = target
            self._owned = False

    def write_line(self, line: str) -> None:
        self._fh.write(line + "\n")

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        if self._owned:
            self._fh.close()


# ---- sources -----------------------------------------------------------------


class ReplaySource:
    """Replays a recorded file at a fixed rate against the clock.

    Event ``i`` (1-based) is emitted once the clock reaches ``i / rate``
    seconds and is stamped with that time, so ``n`` events end exactly at
    ``n / rate``.  Malformed lines are counted in ``rejects`` and skipped.
    """

    def __init__(self, path: str | Path, format: str, rate: float, clock):
        if rate <= 0:
            raise ValueError(f"replay rate {rate} must be positive")
        if format not in ("kaggle-cardio", "canonical-csv", "ndjson"):
            raise ValueError(f"unknown replay format {format!r}")
        self.path = Path(path)
        self.format = format
        self.rate = rate
        self.clock = clock
        self.rejects = 0

    def _parse(self, line: str) -> PatientEvent:
        if self.format == "ndjson":
            return event_from_json(line)
        return parse_dataset_row(line, self.format)

    def __iter__(self) -> Iterator[PatientEvent]:
        emitted = 0
        with open(self.path, "r", encoding="utf-8") as fh:
            first = True
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                if first:
                    first = False
                    if self.format != "ndjson" and is_header_line(line, self.format):
                        continue
                try:
                    event = self._parse(line)
                except ValueError:
                    self.rejects += 1
                    continue
                emitted += 1
                t = emitted / self.rate
                self.clock.wait_until(t)
                yield replace(event, ts_ms=round(t * 1000))


class LineSource:
    """NDJSON events from an open text stream (stdin), stamped on arrival."""

    def __init__(self, stream: TextIO, clock):
        self.stream = stream
        self.clock = clock
        self.rejects = 0

    def __iter__(self) -> Iterator[PatientEvent]:
        for raw in self.stream:
            line = raw.strip()
            if not line:
                continue
            try:
                event = event_from_json(line)
            except ValueError:
                self.rejects += 1
                continue
            yield replace(event, ts_ms=self.clock.now_ms())


class TcpSource:
    """Newline-delimited NDJSON events on a TCP port.

    A listener thread parses arriving lines into a bounded buffer
    (blocking put, so a full buffer exerts backpressure on the socket
    rather than dropping events).  Iteration pops events in arrival order
    and stamps them with the scorer clock.
    """

    def __init__(self, port: int, clock, capacity: int = 4096, host: str = "127.0.0.1"):
        self.clock = clock
        self.rejects = 0
        self._buffer: queue.Queue = queue.Queue(maxsize=capacity)
        self._server = socket.create_server((host, port))
        self._closing = False
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    @property
    def port(self) -> int:
        return self._server.getsockname()[1]

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                conn, _ = self._server.accept()
            except OSError:
                break
            with conn:
                pending = b""
                while True:
                    chunk = conn.recv(65536)
                    if not chunk:
                        break
                    pending += chunk
                    while b"\n" in pending:
                        line, pending = pending.split(b"\n", 1)
                        self._handle_line(line)
                if pending.strip():
                    self._handle_line(pending)
        self._buffer.put(None)  # end-of-stream sentinel

    def _handle_line(self, line: bytes) -> None:
        text = line.decode("utf-8", errors="replace").strip()
        if not text:
            return
        try:
            event = event_from_json(text)
        except ValueError:
            self.rejects += 1
            return
        self._buffer.put(event)  # blocks when full: backpressure

    def stop(self) -> None:
        self._closing = True
        try:
            self._server.close()
        except OSError:
            pass

    def __iter__(self) -> Iterator[PatientEvent]:
        while True:
            event = self._buffer.get()
            if event is None:
                return
            yield replace(event, ts_ms=self.clock.now_ms())


def open_source(kind: str, *, clock, path: str | Path | None = None,
                format: str = "ndjson", rate: float = 100.0,
                stream: TextIO | None = None, port: int = 0,
                capacity: int = 4096):
    """Construct an event source: file-replay, stdin-stream, or tcp-listener."""
    if kind == "file-replay":
        if path is None:
            raise ValueError("file-replay requires a path")
        return ReplaySource(path, format, rate, clock)
    if kind == "stdin-stream":
        import sys
        return LineSource(stream if stream is not None else sys.stdin, clock)
    if kind == "tcp-listener":
        return TcpSource(port, clock, capacity)
    raise ValueError(f"unknown source kind {kind!r}")


# ---- the scorer --------------------------------------------------------------


def _isolated_flags(event: PatientEvent) -> list[str]:
    # Combined guideline reading of the isolated-hypertension rows:
    # systolic >= 140 with diastolic < 90, and vice versa.
    flags = []
    if event.sbp >= 140 and event.dbp < 90:
        flags.append("isolated-systolic")
    if event.dbp >= 90 and event.sbp < 140:
        flags.append("isolated-diastolic")
    return flags


class StreamEngine:
    """Windowed scorer with atomic model hot-swap at window boundaries."""

    def __init__(
        self,
        model: FuzzyModel,
        window: WindowSpec,
        clock=None,
        *,
        alert_sink: NdjsonSink | None = None,
        assessment_sink: NdjsonSink | None = None,
        stats_sink: NdjsonSink | None = None,
        threshold: RiskCategory = RiskCategory.MEDIUM,
    ):
        diags = [d for d in validate_model(model) if d.is_error]
        if diags:
            raise RejectedDeployment(diags)
        if (model.output.lo, model.output.hi) != (0.0, 100.0):
            raise ValueError("stream scoring requires a risk-percent output universe [0, 100]")
        self.window = window
        self.clock = clock if clock is not None else WallClock()
        self.alert_sink = alert_sink
        self.assessment_sink = assessment_sink
        self.stats_sink = stats_sink
        self.threshold = threshold
        self._active = model
        _engine.compile_model(model)
        self._pending: list[tuple[int, FuzzyModel]] = []  # (first window id, model)
        self._current: WindowStats | None = None
        self._cum_in = 0
        self._cum_scored = 0
        self.summary = RunSummary()
        self._closed = False

    @property
    def active_model(self) -> FuzzyModel:
        return self._active

    # -- window lifecycle --

    def _open_window(self, wid: int) -> None:
        while self._pending and self._pending[0][0] <= wid:
            _, model = self._pending.pop(0)
            self._active = model
        self._current = WindowStats(
            window_id=wid,
            start_ms=wid * self.window.length_ms,
            end_ms=(wid + 1) * self.window.length_ms,
            rule_count=len(self._active.rules),
        )

    def _close_window(self) -> None:
        stats = self._current
        assert stats is not None
        stats.cum_events_in = self._cum_in
        stats.cum_events_scored = self._cum_scored
        self.summary.windows += 1
        self._sink_write(self.stats_sink, stats.to_json())
        for sink in (self.alert_sink, self.assessment_sink, self.stats_sink):
            if sink is not None:
                self._sink_flush(sink)
        self._current = None

    def _advance_to(self, wid: int) -> None:
        if self._current is None:
            self._open_window(wid)
            return
        while self._current.window_id < wid:
            nxt = self._current.window_id + 1
            self._close_window()
            self._open_window(nxt)

    def _sink_write(self, sink: NdjsonSink | None, line: str) -> None:
        if sink is None:
            return
        try:
            sink.write_line(line)
        except OSError as exc:
            self.summary.aborted = True
            raise SinkFailure(self.summary, exc) from exc

    def _sink_flush(self, sink: NdjsonSink) -> None:
        try:
            sink.flush()
        except OSError as exc:
            self.summary.aborted = True
            raise SinkFailure(self.summary, exc) from exc

    # -- public operations --

    def feed(self, event: PatientEvent) -> RiskAssessment | None:
        """Score one event into its window; returns the assessment.

        Events are windowed by their source-stamped timestamp.  A stamp
        older than the open window is scored into the open window
        (processing-time semantics for stragglers).
        """
        if self._closed:
            raise StreamError("engine already closed")
        wid = assign_window(event.ts_ms, self.window)
        if self._current is not None and wid < self._current.window_id:
            wid = self._current.window_id
        self._advance_to(wid)
        stats = self._current
        assert stats is not None
        stats.events_in += 1
        self.summary.events_in += 1
        self._cum_in += 1

        model = self._active
        inputs = {v: x for v, x in event_inputs(event).items() if v in model.input_names()}
        flags = _isolated_flags(event)
        try:
            result = _engine.infer(model, inputs)
            score = _round2(result.score)
            fired = tuple(FiredRule(f.rule_id, _round4(f.strength)) for f in result.fired)
            if any(mv.clamped for mv in result.memberships):
                flags.append("clamped")
        except NoRuleFired:
            default = model.settings.default_output
            score = _round2(default if default is not None else (model.output.lo + model.output.hi) / 2)
            fired = ()
            flags.append("unruled")
        except _engine.EngineError:
            self.summary.score_failures += 1
            return None

        assessment = RiskAssessment(
            event_id=event.event_id,
            ts_ms=event.ts_ms,
            window_id=stats.window_id,
            score=score,
            category=classify_risk(score),
            fired=fired,
            flags=tuple(sorted(flags)),
        )
        stats.events_scored += 1
        stats.counts[assessment.category] += 1
        self.summary.events_scored += 1
        self.summary.counts[assessment.category] += 1
        self._cum_scored += 1

        if self.assessment_sink is not None:
            self._sink_write(self.assessment_sink, assessment.to_json())
        if assessment.category.severity >= self.threshold.severity:
            self.summary.alerts += 1
            self._sink_write(self.alert_sink, assessment.to_json())
        return assessment

    def deploy(self, model: FuzzyModel) -> DeploymentReceipt:
        """Swap the active model at the next window boundary.

        The candidate must validate with zero errors, otherwise
        :class:`RejectedDeployment` is raised and the stream continues on
        the old model.  Windows already open keep the model they opened
        with; the receipt reports when and where the swap takes effect.
        """
        t0 = time.perf_counter()
        diags = [d for d in validate_model(model) if d.is_error]
        if diags:
            raise RejectedDeployment(diags)
        if (model.output.lo, model.output.hi) != (0.0, 100.0):
            raise RejectedDeployment(
                [Diagnostic("error", model.output.name, "output universe must be [0, 100] percent")]
            )
        _engine.compile_model(model)
        swap_latency_us = (time.perf_counter() - t0) * 1e6

        now_ms = self.clock.now_ms()
        if self._current is not None:
            effective = self._current.window_id + 1
        else:
            effective = assign_window(max(now_ms, 0), self.window)
        self._pending = [p for p in self._pending if p[0] < effective]
        self._pending.append((effective, model))
        self.summary.deployments += 1
        boundary_ms = effective * self.window.length_ms
        return DeploymentReceipt(
            model_name=model.name,
            rule_count=len(model.rules),
            requested_ms=now_ms,
            effective_window=effective,
            swap_latency_us=swap_latency_us,
            time_to_effective_ms=max(0, boundary_ms - now_ms),
        )

    def close(self) -> RunSummary:
        """Close the open window, flush every sink, and return the summary."""
        if not self._closed:
            if self._current is not None:
                self._close_window()
            for sink in (self.alert_sink, self.assessment_sink, self.stats_sink):
                if sink is not None:
                    self._sink_flush(sink)
            self._closed = True
        return self.summary


def deploy_rules(engine: StreamEngine, model: FuzzyModel) -> DeploymentReceipt:
    """Hot-deploy a rule set into a running engine (next window boundary)."""
    return engine.deploy(model)


def process(
    source: Iterable[PatientEvent],
    model: FuzzyModel,
    spec: WindowSpec,
    *,
    clock=None,
    alert_sink: NdjsonSink | None = None,
    assessment_sink: NdjsonSink | None = None,
    stats_sink: NdjsonSink | None = None,
    threshold: RiskCategory = RiskCategory.MEDIUM,
) -> RunSummary:
    """Drive a source through the scorer until it is exhausted.

    Sink write failures abort the run by raising :class:`SinkFailure`
    carrying the partial summary; malformed source records are counted by
    the source and folded into the summary's reject counter.
    """
    eng = StreamEngine(
        model, spec, clock,
        alert_sink=alert_sink, assessment_sink=assessment_sink,
        stats_sink=stats_sink, threshold=threshold,
    )
    try:
        for event in source:
            eng.feed(event)
    except SinkFailure as failure:
        failure.summary.rejects += getattr(source, "rejects", 0)
        raise
    summary = eng.close()
    summary.rejects += getattr(source, "rejects", 0)
    return summary
