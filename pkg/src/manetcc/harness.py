"""Scenario files, batch runs across algorithms and seeds, metrics and CSV output.

Scenario text is line oriented: ``[section]`` headers followed by
``key = value`` lines; ``#`` starts a comment.  Sections and keys::

    [scenario]   name, duration (required), seeds
    [network]    topology (chain | mobile), n_hops, bandwidth,
                 propagation_delay, packet_error_rate, queue_capacity,
                 packet_size, ack_size, delayed_ack, range_m
    [flows]      count, stagger
    [script]     kind (default | cyclic | explicit | none), outage,
                 outages_per_minute, routes, break, restore
    [algorithms] ids
    [params]     any SenderParams field
    [sweep]      variable (flow_count | packet_error_rate | speed), values,
                 outages_per_minute_per_mps

``seeds`` accepts ``1, 2, 7`` or ranges such as ``1-10``.  ``routes`` is a
``;`` separated list of dash-joined node ids.  In an explicit script each
``break = <t>`` is followed by ``restore = <t> <route>``.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from .core import NO_VERDICT_LABELS, DetectionKind, LossCause, LossEvent, Rng
from .netsim import (
    DEFAULT_MOBILE_ROUTES,
    TRACE_COLUMNS as EVENT_TRACE_COLUMNS,
    ConfigurationError,
    LinkParams,
    Network,
    Route,
    RouteScript,
    ScriptAction,
    Topology,
    build_chain,
    build_mobile,
    cyclic_script,
    default_mobile_script,
)
from .sender import ALGORITHMS, TRACE_COLUMNS as SENDER_TRACE_COLUMNS, Sender, SenderParams

ALGORITHM_IDS: Tuple[str, ...] = tuple(ALGORITHMS)
SWEEP_VARIABLES = ("flow_count", "packet_error_rate", "speed")
SCRIPT_KINDS = ("default", "cyclic", "explicit", "none")
TRUTH_ORDER = (LossCause.CONGESTION, LossCause.WIRELESS, LossCause.LINK_FAILURE)
VERDICT_LABELS = tuple(c.value for c in TRUTH_ORDER) + NO_VERDICT_LABELS
NA = "n/a"

LOSS_EVENT_COLUMNS = ("flow", "seq", "time", "detection", "verdict", "truth", "algorithm",
                      "q_at_decision")
SAMPLE_COLUMNS = ("flow", "seq", "send_time", "receiver_timestamp", "ack_arrival_time",
                  "rott", "rtt", "erott", "min_erott", "max_erott")


class ScenarioError(ValueError):
    """Scenario text that cannot be turned into a valid Scenario."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# -- scenario -----------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    duration: float
    name: str = "scenario"
    seeds: Tuple[int, ...] = (1,)
    topology: str = "chain"
    n_hops: int = 6
    bandwidth: float = 2e6
    propagation_delay: float = 0.001
    packet_error_rate: float = 0.0
    queue_capacity: int = 50_000
    packet_size: int = 1000
    ack_size: int = 40
    delayed_ack: bool = False
    # radio range is carried for provenance only; there is no geometry
    range_m: float = 250.0
    flow_count: int = 1
    flow_stagger: float = 1.0
    script_kind: str = "default"
    outage: float = 6.0
    outages_per_minute: float = 1.0
    routes: Tuple[Route, ...] = DEFAULT_MOBILE_ROUTES
    script_actions: Tuple[ScriptAction, ...] = ()
    algorithms: Tuple[str, ...] = ALGORITHM_IDS
    params: Tuple[Tuple[str, object], ...] = ()
    sweep_variable: Optional[str] = None
    sweep_values: Tuple[float, ...] = ()
    outages_per_minute_per_mps: float = 0.2
    speed: Optional[float] = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ScenarioError(f"duration must be > 0, got {self.duration}")
        if self.flow_count < 1:
            raise ScenarioError(f"flow count must be >= 1, got {self.flow_count}")
        if self.flow_stagger < 0:
            raise ScenarioError("flow stagger must be >= 0")
        if self.topology not in ("chain", "mobile"):
            raise ScenarioError(f"topology must be chain or mobile, got {self.topology!r}")
        if self.n_hops < 1:
            raise ScenarioError("n_hops must be >= 1")
        if not 0.0 <= self.packet_error_rate < 1.0:
            raise ScenarioError("packet_error_rate must lie in [0, 1)")
        if self.queue_capacity < self.packet_size:
            raise ScenarioError("queue_capacity must hold at least one packet")
        if not self.seeds:
            raise ScenarioError("at least one seed is required")
        for s in self.seeds:
            if not 0 <= s < 2**64:
                raise ScenarioError(f"seed {s} is not a 64-bit unsigned integer")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown or not self.algorithms:
            raise ScenarioError(
                f"unknown algorithm(s) {unknown}; valid ids: {', '.join(ALGORITHM_IDS)}")
        if self.script_kind not in SCRIPT_KINDS:
            raise ScenarioError(f"script kind must be one of {SCRIPT_KINDS}")
        if self.sweep_variable is not None:
            if self.sweep_variable not in SWEEP_VARIABLES:
                raise ScenarioError(
                    f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.sweep_variable!r}")
            if not self.sweep_values:
                raise ScenarioError("sweep needs at least one value")
        try:
            self.sender_params()
            self.build_topology()
        except (ValueError, ConfigurationError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc)) from None

    # derived pieces ----------------------------------------------------------

    def link(self) -> LinkParams:
        return LinkParams(self.bandwidth, self.propagation_delay, self.packet_error_rate)

    def sender_params(self) -> SenderParams:
        return SenderParams(packet_size=self.packet_size, **dict(self.params))

    def effective_outages_per_minute(self) -> float:
        if self.speed is not None:
            return self.speed * self.outages_per_minute_per_mps
        return self.outages_per_minute

    def build_script(self) -> RouteScript:
        if self.script_kind == "none":
            return RouteScript([])
        if self.script_kind == "explicit":
            return RouteScript(list(self.script_actions))
        if self.script_kind == "cyclic" or self.speed is not None:
            return cyclic_script(self.duration, self.effective_outages_per_minute(),
                                 self.outage, self.routes)
        return default_mobile_script(self.duration, self.outage, self.routes)

    def build_topology(self) -> Topology:
        if self.topology == "chain":
            if self.script_kind == "explicit":
                raise ScenarioError("explicit route scripts need the mobile topology")
            return build_chain(self.n_hops, self.link())
        return build_mobile(self.build_script(), self.link(), self.routes)

    def at(self, variable: Optional[str], value) -> "Scenario":
        """The scenario with one swept variable pinned (sweep removed)."""
        base = dataclasses.replace(self, sweep_variable=None, sweep_values=())
        if variable is None:
            return base
        if variable == "flow_count":
            return dataclasses.replace(base, flow_count=int(value))
        if variable == "packet_error_rate":
            return dataclasses.replace(base, packet_error_rate=float(value))
        return dataclasses.replace(base, speed=float(value))

    def points(self) -> List[Tuple[Optional[str], Optional[float]]]:
        if self.sweep_variable is None:
            return [(None, None)]
        return [(self.sweep_variable, v) for v in self.sweep_values]


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_seeds(text: str) -> Tuple[int, ...]:
    seeds: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo_i, hi_i + 1))
        else:
            seeds.append(int(part))
    return tuple(seeds)


def _parse_route(text: str) -> Route:
    return Route(tuple(int(n) for n in text.strip().split("-")))


def _parse_routes(text: str) -> Tuple[Route, ...]:
    return tuple(_parse_route(r) for r in text.split(";") if r.strip())


def _parse_list(text: str) -> Tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _param_parser(field_type: str):
    if "bool" in field_type:
        return _parse_bool
    if "Optional[str]" in field_type or field_type == "str":
        return lambda s: s.strip()
    if "int" in field_type:
        return int
    return float


_PARAM_FIELDS = {f.name: _param_parser(str(f.type)) for f in dataclasses.fields(SenderParams)
                 if f.name != "packet_size"}

# section -> key -> (Scenario field, parser)
_KEYS = {
    "scenario": {
        "name": ("name", str),
        "duration": ("duration", float),
        "seeds": ("seeds", _parse_seeds),
    },
    "network": {
        "topology": ("topology", str),
        "n_hops": ("n_hops", int),
        "bandwidth": ("bandwidth", float),
        "propagation_delay": ("propagation_delay", float),
        "packet_error_rate": ("packet_error_rate", float),
        "queue_capacity": ("queue_capacity", int),
        "packet_size": ("packet_size", int),
        "ack_size": ("ack_size", int),
        "delayed_ack": ("delayed_ack", _parse_bool),
        "range_m": ("range_m", float),
    },
    "flows": {
        "count": ("flow_count", int),
        "stagger": ("flow_stagger", float),
    },
    "script": {
        "kind": ("script_kind", str),
        "outage": ("outage", float),
        "outages_per_minute": ("outages_per_minute", float),
        "routes": ("routes", _parse_routes),
    },
    "algorithms": {
        "ids": ("algorithms", _parse_list),
    },
    "sweep": {
        "variable": ("sweep_variable", str),
        "values": ("sweep_values", lambda s: tuple(float(v) for v in _parse_list(s))),
        "outages_per_minute_per_mps": ("outages_per_minute_per_mps", float),
    },
}
_SECTIONS = tuple(_KEYS) + ("params",)


def parse_scenario(text: str) -> Scenario:
    values: Dict[str, object] = {}
    key_lines: Dict[str, int] = {}
    params: Dict[str, object] = {}
    actions: List[ScriptAction] = []
    pending_break: Optional[Tuple[float, int]] = None
    section: Optional[str] = None
    lines = text.splitlines()

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ScenarioError(
                    f"unknown section [{section}]; valid: {', '.join(_SECTIONS)}", lineno)
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if section is None:
            raise ScenarioError("key outside of any [section]", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.lower()
        try:
            if section == "params":
                if key not in _PARAM_FIELDS:
                    raise ScenarioError(
                        f"unknown parameter {key!r}; valid: {', '.join(sorted(_PARAM_FIELDS))}",
                        lineno)
                params[key] = _PARAM_FIELDS[key](value)
            elif section == "script" and key == "break":
                if pending_break is not None:
                    raise ScenarioError("break without a following restore", lineno)
                pending_break = (float(value), lineno)
            elif section == "script" and key == "restore":
                if pending_break is None:
                    raise ScenarioError("restore without a preceding break", lineno)
                parts = value.split(None, 1)
                if len(parts) != 2:
                    raise ScenarioError("restore needs '<time> <route>'", lineno)
                actions.append(ScriptAction(pending_break[0], "break"))
                actions.append(ScriptAction(float(parts[0]), "restore", _parse_route(parts[1])))
                pending_break = None
            else:
                if key not in _KEYS[section]:
                    raise ScenarioError(
                        f"unknown key {key!r} in [{section}]; valid: "
                        f"{', '.join(sorted(_KEYS[section]))}", lineno)
                name, parser = _KEYS[section][key]
                values[name] = parser(value)
                key_lines[name] = lineno
        except ScenarioError:
            raise
        except (ValueError, ConfigurationError) as exc:
            raise ScenarioError(f"bad value for {key!r}: {exc}", lineno) from None

    if pending_break is not None:
        raise ScenarioError("break without a following restore", pending_break[1])
    if "duration" not in values:
        raise ScenarioError("missing required field 'duration' in [scenario]", len(lines))
    if actions:
        values.setdefault("script_kind", "explicit")
        values["script_actions"] = tuple(actions)
    values["params"] = tuple(sorted(params.items()))
    try:
        return Scenario(**values)
    except ScenarioError as exc:
        # point at the offending key when we can tell which one it was
        line = _guess_line(str(exc), key_lines, len(lines))
        raise ScenarioError(str(exc), line) from None
    except (ValueError, ConfigurationError) as exc:
        raise ScenarioError(str(exc), len(lines)) from None


def _guess_line(message: str, key_lines: Dict[str, int], fallback: int) -> int:
    for name, line in key_lines.items():
        if name in message or name.replace("_", " ") in message:
            return line
    return fallback


def load_scenario(path: Union[str, os.PathLike]) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# -- metrics ------------------------------------------------------------------


class Accuracy(NamedTuple):
    ac: Optional[float]
    aw: Optional[float]
    al: Optional[float]
    confusion: Dict[Tuple[str, str], int]


def compute_accuracy(events: Iterable[LossEvent]) -> Accuracy:
    """Per-truth-class recall; ``None`` marks a class with no events."""
    confusion = {(t.value, v): 0 for t in TRUTH_ORDER for v in VERDICT_LABELS}
    for e in events:
        confusion[(e.truth.value, e.verdict_label)] += 1

    def recall(cause: LossCause) -> Optional[float]:
        total = sum(confusion[(cause.value, v)] for v in VERDICT_LABELS)
        return confusion[(cause.value, cause.value)] / total if total else None

    return Accuracy(recall(LossCause.CONGESTION), recall(LossCause.WIRELESS),
                    recall(LossCause.LINK_FAILURE), confusion)


def compute_throughput(delivered: Union[int, Iterable[Sequence]], duration: float) -> float:
    """Packets per second reaching the final destination.

    ``delivered`` is either a count of unique deliveries or event-trace rows,
    of which distinct ``deliver`` events are counted.
    """
    if not duration > 0:
        raise ValueError("duration must be > 0")
    if isinstance(delivered, int):
        n = delivered
    else:
        n = len({(row[4], row[3]) for row in delivered if row[1] == "deliver"})
    return n / duration


_RTO_IDX = SENDER_TRACE_COLUMNS.index("rto")
_EVENT_IDX = SENDER_TRACE_COLUMNS.index("event")


def compute_sum_rto(sender_trace: Iterable[Sequence]) -> float:
    """Sum of the RTO in force at every data transmission, first or repeated."""
    return math.fsum(row[_RTO_IDX] for row in sender_trace
                     if row[_EVENT_IDX] in ("send", "retransmit"))


@dataclass
class CellResult:
    """One simulation: a single algorithm under a single seed."""

    algorithm: str
    seed: int
    sweep_variable: Optional[str]
    sweep_value: Optional[float]
    flow_count: int
    packet_error_rate: float
    speed: Optional[float]
    ac: Optional[float]
    aw: Optional[float]
    al: Optional[float]
    confusion: Dict[Tuple[str, str], int]
    throughput: float
    sum_rto: float
    spurious: int
    events: List[LossEvent] = field(default_factory=list)
    samples: List[tuple] = field(default_factory=list)
    sender_trace: List[tuple] = field(default_factory=list)
    event_trace: List[tuple] = field(default_factory=list)
    drops: list = field(default_factory=list)

    @property
    def losses(self) -> int:
        return len(self.events)

    def truth_count(self, cause: LossCause) -> int:
        return sum(self.confusion[(cause.value, v)] for v in VERDICT_LABELS)


@dataclass
class MetricsReport:
    scenario_name: str
    cells: List[CellResult] = field(default_factory=list)

    def groups(self) -> Dict[Tuple[Optional[str], Optional[float], str], List[CellResult]]:
        out: Dict[Tuple[Optional[str], Optional[float], str], List[CellResult]] = {}
        for c in self.cells:
            out.setdefault((c.sweep_variable, c.sweep_value, c.algorithm), []).append(c)
        return out

    def median(self, metric: str, algorithm: str, sweep_value=None) -> Optional[float]:
        vals = [getattr(c, metric) for c in self.cells
                if c.algorithm == algorithm and c.sweep_value == sweep_value]
        return median_or_none(vals)


def median_or_none(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None and not math.isnan(v)]
    return statistics.median(present) if present else None


def build_network(scenario: Scenario, algorithm: str, seed: int, record_trace: bool = False,
                  classifier_factory=None) -> Network:
    """Wire up topology, flows and senders for one cell without running it."""
    net = Network(scenario.build_topology(), seed=seed, queue_capacity=scenario.queue_capacity,
                  ack_size=scenario.ack_size, delayed_ack=scenario.delayed_ack,
                  record_trace=record_trace)
    params = scenario.sender_params()
    stagger = Rng(seed)
    for flow in range(scenario.flow_count):
        classifier = classifier_factory(algorithm, params) if classifier_factory else None
        sender = Sender(net, flow, algorithm, params, classifier=classifier, record_trace=True)
        start = stagger.uniform(0.0, scenario.flow_stagger) if scenario.flow_stagger > 0 else 0.0
        net.add_flow(sender, start)
    return net


def run_cell(scenario: Scenario, algorithm: str, seed: int, record_trace: bool = False,
             keep_events: bool = True) -> CellResult:
    net = build_network(scenario, algorithm, seed, record_trace)
    try:
        net.run(scenario.duration)
    except Exception as exc:
        raise RuntimeError(
            f"simulation {scenario.name!r} algorithm={algorithm} seed={seed} failed "
            f"at t={net.now:.6f}: {exc}") from exc
    acc = compute_accuracy(net.loss_events)
    sender_trace: List[tuple] = []
    samples: List[tuple] = []
    for flow, s in sorted(net.senders.items()):
        sender_trace.extend((flow,) + row for row in s.trace)
        samples.extend((flow,) + row for row in s.samples)
    sum_rto = compute_sum_rto(row[1:] for row in sender_trace)
    return CellResult(
        algorithm=algorithm,
        seed=seed,
        sweep_variable=None,
        sweep_value=None,
        flow_count=scenario.flow_count,
        packet_error_rate=scenario.packet_error_rate,
        speed=scenario.speed,
        ac=acc.ac, aw=acc.aw, al=acc.al,
        confusion=acc.confusion,
        throughput=compute_throughput(net.throughput_packets, scenario.duration),
        sum_rto=sum_rto,
        spurious=len(net.spurious_detections),
        events=list(net.loss_events) if keep_events else [],
        samples=samples if record_trace else [],
        sender_trace=sender_trace if record_trace else [],
        event_trace=list(net.trace),
        drops=list(net.drops) if keep_events else [],
    )


def _run_job(job):
    scenario, variable, value, algorithm, seed, record_trace = job
    cell = run_cell(scenario.at(variable, value), algorithm, seed, record_trace)
    cell.sweep_variable = variable
    cell.sweep_value = value
    return cell


def run_batch(
    scenario: Scenario,
    algorithms: Optional[Sequence[str]] = None,
    seeds: Optional[Sequence[int]] = None,
    record_trace: bool = False,
    workers: int = 1,
) -> MetricsReport:
    """Run every (sweep point, algorithm, seed) cell; order is deterministic."""
    algorithms = tuple(algorithms) if algorithms else scenario.algorithms
    unknown = [a for a in algorithms if a not in ALGORITHMS]
    if unknown:
        raise ScenarioError(f"unknown algorithm(s) {unknown}; valid ids: {', '.join(ALGORITHM_IDS)}")
    seeds = tuple(seeds) if seeds else scenario.seeds
    jobs = [(scenario, var, val, algo, seed, record_trace)
            for var, val in scenario.points() for algo in algorithms for seed in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_job, jobs))
    else:
        cells = [_run_job(j) for j in jobs]
    return MetricsReport(scenario.name, cells)


# -- CSV output -----------------------------------------------------------------


def fmt(value) -> str:
    if value is None:
        return NA
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return NA
        return f"{value:.9g}"
    if isinstance(value, LossCause):
        return value.value
    return str(value)


def write_csv(path: Union[str, os.PathLike], header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def loss_event_row(e: LossEvent) -> tuple:
    return (e.flow, e.seq, e.time, e.detection.value, e.verdict_label, e.truth.value,
            e.algorithm_id, e.q_at_decision)


def parse_loss_event_row(row: Sequence[str]) -> LossEvent:
    """Inverse of :func:`loss_event_row` applied to formatted CSV fields."""
    if len(row) != len(LOSS_EVENT_COLUMNS):
        raise ValueError(f"expected {len(LOSS_EVENT_COLUMNS)} fields, got {len(row)}")
    flow, seq, time, detection, verdict, truth, algo, q = row
    no_verdict = verdict if verdict in NO_VERDICT_LABELS else NO_VERDICT_LABELS[0]
    return LossEvent(
        seq=int(seq),
        time=float(time),
        detection=DetectionKind(detection),
        verdict=None if verdict in NO_VERDICT_LABELS else LossCause(verdict),
        truth=LossCause(truth),
        algorithm_id=algo,
        flow=int(flow),
        q_at_decision=math.nan if q == NA else float(q),
        no_verdict=no_verdict,
    )


def read_loss_events(path: Union[str, os.PathLike]) -> List[LossEvent]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != LOSS_EVENT_COLUMNS:
        raise ValueError(f"{path}: not a loss-event file")
    return [parse_loss_event_row(r) for r in rows[1:]]


METRICS_COLUMNS = ("sweep_variable", "sweep_value", "algorithm", "seed", "flow_count",
                   "packet_error_rate", "speed", "ac", "aw", "al", "throughput", "sum_rto",
                   "losses", "n_congestion", "n_wireless", "n_link_failure", "spurious")
CONFUSION_COLUMNS = ("sweep_variable", "sweep_value", "algorithm", "seed", "truth", "verdict",
                     "count", "row_share", "col_share")
FIGURE_FILES = {
    # file: (x column, metric column, cell attribute)
    "fig8_accuracy_vs_flows.csv": ("flow_count", "median_ac", "ac"),
    "fig9_accuracy_vs_per.csv": ("packet_error_rate", "median_aw", "aw"),
    "fig10_accuracy_vs_speed.csv": ("speed", "median_al", "al"),
    "fig11_throughput.csv": ("x", "median_throughput", "throughput"),
    "fig13_sum_rto.csv": ("x", "median_sum_rto", "sum_rto"),
}


def _cell_x(cell: CellResult, x: str):
    if x == "x":
        return cell.sweep_value if cell.sweep_variable is not None else cell.flow_count
    return getattr(cell, x)


def figure_rows(report: MetricsReport, x: str, attr: str) -> List[tuple]:
    buckets: Dict[Tuple[object, str], List[CellResult]] = {}
    for c in report.cells:
        xv = _cell_x(c, x)
        if xv is None:
            continue
        buckets.setdefault((xv, c.algorithm), []).append(c)
    rows = []
    for (xv, algo), cells in buckets.items():
        vals = [getattr(c, attr) for c in cells]
        present = [v for v in vals if v is not None]
        rows.append((xv, algo, median_or_none(vals), len(present), len(cells)))
    algo_rank = {a: i for i, a in enumerate(ALGORITHM_IDS)}
    rows.sort(key=lambda r: (float(r[0]), algo_rank.get(r[1], 99)))
    return rows


def emit_reports(report: MetricsReport, out_dir: Union[str, os.PathLike],
                 trace: bool = False) -> List[str]:
    """Write metrics, confusion and per-figure CSVs; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path(name):
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    write_csv(path("metrics.csv"), METRICS_COLUMNS, (
        (c.sweep_variable or "", c.sweep_value, c.algorithm, c.seed, c.flow_count,
         c.packet_error_rate, c.speed, c.ac, c.aw, c.al, c.throughput, c.sum_rto, c.losses,
         c.truth_count(LossCause.CONGESTION), c.truth_count(LossCause.WIRELESS),
         c.truth_count(LossCause.LINK_FAILURE), c.spurious)
        for c in report.cells))

    conf_rows = []
    for c in report.cells:
        for t in TRUTH_ORDER:
            row_total = c.truth_count(t)
            for v in VERDICT_LABELS:
                n = c.confusion[(t.value, v)]
                col_total = sum(c.confusion[(tt.value, v)] for tt in TRUTH_ORDER)
                conf_rows.append((c.sweep_variable or "", c.sweep_value, c.algorithm, c.seed,
                                  t.value, v, n,
                                  n / row_total if row_total else None,
                                  n / col_total if col_total else None))
    write_csv(path("confusion.csv"), CONFUSION_COLUMNS, conf_rows)

    for name, (x, metric, attr) in FIGURE_FILES.items():
        write_csv(path(name), (x, "algorithm", metric, "seeds_with_value", "seeds"),
                  figure_rows(report, x, attr))

    if trace:
        tdir = os.path.join(out_dir, "traces")
        os.makedirs(tdir, exist_ok=True)
        for c in report.cells:
            tag = f"{c.algorithm}_seed{c.seed}"
            if c.sweep_variable is not None:
                tag = f"{c.sweep_variable}{fmt(c.sweep_value)}_{tag}"
            write_csv(path(os.path.join("traces", f"samples_{tag}.csv")), SAMPLE_COLUMNS,
                      c.samples)
            write_csv(path(os.path.join("traces", f"sender_{tag}.csv")),
                      ("flow",) + SENDER_TRACE_COLUMNS, c.sender_trace)
            write_csv(path(os.path.join("traces", f"events_{tag}.csv")), EVENT_TRACE_COLUMNS,
                      c.event_trace)
            write_csv(path(os.path.join("traces", f"losses_{tag}.csv")), LOSS_EVENT_COLUMNS,
                      (loss_event_row(e) for e in c.events))
    return written
