"""Deterministic discrete-event simulation of a multi-hop wireless path.

Each node owns one drop-tail interface queue shared by data and acks and a
single transmitter.  A hop costs serialization plus propagation delay; the
MAC is not modelled.  Mobility is a scripted sequence of route breaks and
restorations.  Every drop is labelled with its cause where it happens.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Optional, Sequence, Tuple

from .core import (
    ABSTAIN,
    DEFAULT_ACK_SIZE,
    DEFAULT_INITIAL_TTL,
    AckEcho,
    DetectionKind,
    LossCause,
    LossEvent,
    Packet,
    PacketKind,
    Rng,
    SimTime,
    keyed_uniform,
)


class ConfigurationError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinkParams:
    bandwidth: float = 2e6
    propagation_delay: float = 0.001
    packet_error_rate: float = 0.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ConfigurationError("bandwidth must be positive")
        if self.propagation_delay < 0:
            raise ConfigurationError("propagation_delay must be >= 0")
        if not 0.0 <= self.packet_error_rate <= 1.0:
            raise ConfigurationError("packet_error_rate must lie in [0, 1]")

    def serialization(self, size_bytes: int) -> float:
        return size_bytes * 8.0 / self.bandwidth


class NodeQueue:
    def __init__(self, capacity_bytes: int = 50_000):
        if capacity_bytes <= 0:
            raise ConfigurationError("queue capacity must be positive")
        self.capacity_bytes = capacity_bytes
        self.occupancy_bytes = 0
        self.fifo: Deque[Packet] = deque()

    def __len__(self):
        return len(self.fifo)

    def offer(self, pkt: Packet) -> bool:
        if self.occupancy_bytes + pkt.size_bytes > self.capacity_bytes:
            return False
        self.fifo.append(pkt)
        self.occupancy_bytes += pkt.size_bytes
        return True

    def pop(self) -> Packet:
        pkt = self.fifo.popleft()
        self.occupancy_bytes -= pkt.size_bytes
        return pkt

    def flush(self) -> List[Packet]:
        out = list(self.fifo)
        self.fifo.clear()
        self.occupancy_bytes = 0
        return out


def enqueue(node_queue: NodeQueue, pkt: Packet, now: SimTime = 0.0) -> bool:
    return node_queue.offer(pkt)


@dataclass(frozen=True)
class Route:
    nodes: Tuple[int, ...]

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ConfigurationError("a route needs at least two nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise ConfigurationError(f"route {self.nodes} revisits a node")

    @property
    def hop_count(self) -> int:
        return len(self.nodes) - 1

    def __str__(self):
        return "-".join(map(str, self.nodes))


@dataclass(frozen=True)
class ScriptAction:
    time: SimTime
    kind: str  # "break" or "restore"
    route: Optional[Route] = None

    def __post_init__(self):
        if self.kind not in ("break", "restore"):
            raise ConfigurationError(f"unknown script action {self.kind!r}")
        if self.kind == "restore" and self.route is None:
            raise ConfigurationError("restore needs a route")


@dataclass
class RouteScript:
    actions: List[ScriptAction] = field(default_factory=list)

    def __post_init__(self):
        times = [a.time for a in self.actions]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("script times must be strictly increasing")
        if any(t < 0 for t in times):
            raise ConfigurationError("script times must be nonnegative")
        expected = "break"
        for a in self.actions:
            if a.kind != expected:
                raise ConfigurationError(
                    f"script action at t={a.time}: expected {expected}, got {a.kind}"
                )
            expected = "restore" if expected == "break" else "break"

    def outages(self, horizon: float = math.inf) -> List[Tuple[float, float]]:
        spans = []
        start = None
        for a in self.actions:
            if a.kind == "break":
                start = a.time
            else:
                spans.append((start, a.time))
                start = None
        if start is not None:
            spans.append((start, horizon))
        return spans


DEFAULT_MOBILE_ROUTES = (Route((0, 2, 1, 3, 5)), Route((0, 1, 5)), Route((0, 1, 4, 5)))


@dataclass
class Topology:
    nodes: Tuple[int, ...]
    links: Dict[Tuple[int, int], LinkParams]
    initial_route: Route
    script: RouteScript = field(default_factory=RouteScript)
    name: str = ""

    def __post_init__(self):
        routes = [self.initial_route] + [a.route for a in self.script.actions if a.route]
        for r in routes:
            for u, v in zip(r.nodes, r.nodes[1:]):
                if u not in self.nodes or v not in self.nodes:
                    raise ConfigurationError(f"route {r} references an unknown node")
                if (u, v) not in self.links:
                    raise ConfigurationError(f"route {r} uses missing link {u}-{v}")

    @property
    def source(self) -> int:
        return self.initial_route.nodes[0]

    @property
    def sink(self) -> int:
        return self.initial_route.nodes[-1]

    def link(self, u: int, v: int) -> LinkParams:
        return self.links[(u, v)]


def _bidirectional(pairs: Iterable[Tuple[int, int]], link: LinkParams):
    links = {}
    for u, v in pairs:
        links[(u, v)] = link
        links[(v, u)] = link
    return links


def build_chain(n_hops: int, link: Optional[LinkParams] = None) -> Topology:
    if n_hops < 1:
        raise ConfigurationError("n_hops must be >= 1")
    link = link or LinkParams()
    nodes = tuple(range(n_hops + 1))
    return Topology(nodes, _bidirectional(zip(nodes, nodes[1:]), link), Route(nodes),
                    name=f"chain{n_hops}")


def default_mobile_script(
    duration: float = 60.0, outage: float = 6.0, routes: Sequence[Route] = DEFAULT_MOBILE_ROUTES
) -> RouteScript:
    """Walk through ``routes`` with one break between consecutive ones,
    spreading the breaks evenly over the run."""
    n_breaks = len(routes) - 1
    period = duration / (n_breaks + 1)
    actions = []
    for i in range(n_breaks):
        t = period * (i + 1) - outage / 2.0
        actions.append(ScriptAction(round(t, 9), "break"))
        actions.append(ScriptAction(round(t + outage, 9), "restore", routes[i + 1]))
    return RouteScript(actions)


def cyclic_script(
    duration: float,
    outages_per_minute: float,
    outage: float,
    routes: Sequence[Route] = DEFAULT_MOBILE_ROUTES,
) -> RouteScript:
    """Evenly spaced breaks cycling through ``routes`` (first route active at t=0)."""
    if outages_per_minute <= 0:
        return RouteScript([])
    period = 60.0 / outages_per_minute
    if outage >= period:
        raise ConfigurationError("outage must be shorter than the break period")
    actions = []
    i = 0
    t = period / 2.0
    while t + outage < duration:
        actions.append(ScriptAction(round(t, 9), "break"))
        actions.append(ScriptAction(round(t + outage, 9), "restore", routes[(i + 1) % len(routes)]))
        i += 1
        t += period
    return RouteScript(actions)


def build_mobile(
    route_script: Optional[RouteScript] = None,
    link: Optional[LinkParams] = None,
    routes: Sequence[Route] = DEFAULT_MOBILE_ROUTES,
) -> Topology:
    link = link or LinkParams()
    script = default_mobile_script() if route_script is None else route_script
    all_routes = list(routes) + [a.route for a in script.actions if a.route]
    pairs = set()
    nodes = set()
    for r in all_routes:
        nodes.update(r.nodes)
        pairs.update(zip(r.nodes, r.nodes[1:]))
    nodes.update(range(6))
    return Topology(tuple(sorted(nodes)), _bidirectional(sorted(pairs), link), routes[0],
                    script, name="mobile")


class Receiver:
    """Cumulative-ack sink for one flow."""

    def __init__(self, flow: int = 0, ack_size: int = DEFAULT_ACK_SIZE,
                 initial_ttl: int = DEFAULT_INITIAL_TTL, delayed_ack: bool = False):
        self.flow = flow
        self.ack_size = ack_size
        self.initial_ttl = initial_ttl
        self.delayed_ack = delayed_ack
        self.highest_in_order = 0
        self.buffered: set = set()
        self.received: set = set()
        self.arrivals = 0
        self._held: Optional[Packet] = None
        self._ack_uid = 0

    @property
    def unique_delivered(self) -> int:
        return len(self.received)

    def _make_ack(self, pkt: Packet, now: SimTime, advanced: bool) -> Packet:
        self._ack_uid += 1
        hops = self.initial_ttl - pkt.ttl
        echo = AckEcho(self.highest_in_order, now, max(hops, 1), pkt.seq, pkt.send_time,
                       pkt.retransmit)
        kind = PacketKind.ACK if advanced else PacketKind.DUPACK
        return Packet(self.highest_in_order, kind, self.ack_size, now,
                      ttl=self.initial_ttl, echo=echo, flow=self.flow, uid=self._ack_uid)

    def on_data(self, pkt: Packet, now: SimTime) -> Optional[Packet]:
        self.arrivals += 1
        self.received.add(pkt.seq)
        before = self.highest_in_order
        if pkt.seq == self.highest_in_order + 1:
            self.highest_in_order += 1
            while self.highest_in_order + 1 in self.buffered:
                self.buffered.discard(self.highest_in_order + 1)
                self.highest_in_order += 1
        elif pkt.seq > self.highest_in_order + 1:
            self.buffered.add(pkt.seq)
        advanced = self.highest_in_order > before
        in_order_only = advanced and not self.buffered and pkt.seq == self.highest_in_order
        if self.delayed_ack and in_order_only and self._held is None:
            self._held = pkt
            return None
        self._held = None
        return self._make_ack(pkt, now, advanced)

    def flush_delayed(self, now: SimTime) -> Optional[Packet]:
        if self._held is None:
            return None
        pkt, self._held = self._held, None
        return self._make_ack(pkt, now, True)


def receiver_on_data(recv_state: Receiver, pkt: Packet, now: SimTime) -> Optional[Packet]:
    return recv_state.on_data(pkt, now)


@dataclass(frozen=True)
class DropRecord:
    """A drop and the evidence its cause was derived from."""

    time: SimTime
    node: int
    flow: int
    seq: int
    is_ack: bool
    cause: LossCause
    occupancy_bytes: int = -1
    capacity_bytes: int = -1
    size_bytes: int = 0
    draw: float = math.nan
    error_rate: float = math.nan
    route_active: bool = True
    flushed: bool = False
    # lottery key of a wireless drop, enough to recompute its draw
    key: tuple = ()


# event kinds
_ARRIVE, _TX_DONE, _TIMER, _SCRIPT, _START, _DELACK = range(6)

TRACE_COLUMNS = ("time", "event_kind", "node", "seq", "detail")


class Network:
    """Event loop, nodes, route oracle and per-flow receivers."""

    def __init__(
        self,
        topology: Topology,
        seed: int = 0,
        queue_capacity: int = 50_000,
        ack_size: int = DEFAULT_ACK_SIZE,
        initial_ttl: int = DEFAULT_INITIAL_TTL,
        delayed_ack: bool = False,
        delayed_ack_timeout: float = 0.1,
        record_trace: bool = False,
    ):
        self.topology = topology
        self.seed = seed
        self.now: SimTime = 0.0
        self.ack_size = ack_size
        self.initial_ttl = initial_ttl
        self.delayed_ack = delayed_ack
        self.delayed_ack_timeout = delayed_ack_timeout
        self.record_trace = record_trace

        self.queues = {n: NodeQueue(queue_capacity) for n in topology.nodes}
        self._tx_busy = {n: None for n in topology.nodes}  # node -> packet in service
        self._tx_token = {n: 0 for n in topology.nodes}
        self.route: Optional[Route] = topology.initial_route
        self.epoch = 0
        self._propagating: Dict[int, Tuple[Packet, int]] = {}
        self._heap: list = []
        self._counter = 0

        self.senders: Dict[int, object] = {}
        self.receivers: Dict[int, Receiver] = {}
        self.drops: List[DropRecord] = []
        self.loss_events: List[LossEvent] = []
        self.spurious_detections: List[tuple] = []
        self.trace: List[tuple] = []
        self._data_drops: Dict[Tuple[int, int], List[LossCause]] = {}
        self._ack_drops: Dict[int, List[Tuple[int, LossCause, float]]] = {}
        self._copies_in_network: Dict[Tuple[int, int], int] = {}
        self._delivered_at: Dict[Tuple[int, int], float] = {}
        self._key_counter = 0

        self.data_sent = 0
        self.data_arrived = 0
        self.data_dropped = 0
        self.departures: Dict[int, List[tuple]] = {n: [] for n in topology.nodes}
        self.arrivals_log: Dict[int, List[tuple]] = {n: [] for n in topology.nodes}

        for a in topology.script.actions:
            self._push(a.time, _SCRIPT, a)

    # -- scheduling --------------------------------------------------------

    def _push(self, time: float, kind: int, payload) -> None:
        if time < self.now - 1e-12:
            raise SimulationError(f"event at {time} scheduled in the past (now {self.now})")
        self._counter += 1
        heapq.heappush(self._heap, (time, self._counter, kind, payload))

    def _log(self, kind: str, node: int, seq: int, detail: str = "") -> None:
        if self.record_trace:
            self.trace.append((self.now, kind, node, seq, detail))

    # -- flows ---------------------------------------------------------------

    def add_flow(self, sender, start_time: float = 0.0) -> None:
        flow = sender.flow
        if flow in self.senders:
            raise ConfigurationError(f"duplicate flow id {flow}")
        self.senders[flow] = sender
        self.receivers[flow] = Receiver(flow, self.ack_size, self.initial_ttl, self.delayed_ack)
        self._push(start_time, _START, sender)

    # sender-facing environment ----------------------------------------------

    def transmit(self, pkt: Packet) -> None:
        self.data_sent += 1
        pkt.ttl = self.initial_ttl
        key = (pkt.flow, pkt.seq)
        self._copies_in_network[key] = self._copies_in_network.get(key, 0) + 1
        self._log("send", self.topology.source, pkt.seq, f"flow={pkt.flow}")
        self._enqueue(self.topology.source, pkt)

    def set_timer(self, sender, when: float, token: int) -> None:
        self._push(when, _TIMER, (sender, token))

    def report_detection(self, sender, seq, detection, verdict, q) -> None:
        truth = self._consume_truth(sender.flow, seq)
        self._log("detect", self.topology.source, seq,
                  f"flow={sender.flow}:{detection.value}:{truth.value if truth else 'none'}")
        if truth is None:
            self.spurious_detections.append((self.now, sender.flow, seq, detection))
            return
        label = ABSTAIN if verdict is not None else getattr(sender.classifier, "no_verdict", ABSTAIN)
        self.loss_events.append(LossEvent(seq, self.now, detection, verdict, truth,
                                          sender.algorithm_id, sender.flow, q, label))

    def _consume_truth(self, flow: int, seq: int) -> Optional[LossCause]:
        """Cause of the drop behind a detection, or None if nothing was lost.

        An unconsumed drop of a data copy wins.  Otherwise, if a copy is still
        travelling the timer was simply early.  If the data reached the
        receiver, only acks covering it that were dropped after that
        delivery can explain the detection.
        """
        causes = self._data_drops.pop((flow, seq), None)
        if causes:
            return causes[-1]
        if self._copies_in_network.get((flow, seq), 0) > 0:
            return None
        delivered = self._delivered_at.get((flow, seq))
        acks = self._ack_drops.get(flow)
        if delivered is None or not acks:
            return None
        covering = [c for acked, c, t in acks if acked >= seq and t >= delivered]
        if not covering:
            return None
        self._ack_drops[flow] = [a for a in acks if a[0] < seq]
        return covering[-1]

    # -- packet movement -------------------------------------------------------

    def _next_hop(self, node: int, pkt: Packet) -> Optional[int]:
        r = self.route
        if r is None:
            return None
        try:
            i = r.nodes.index(node)
        except ValueError:
            return None
        j = i + 1 if pkt.is_data else i - 1
        if 0 <= j < len(r.nodes):
            return r.nodes[j]
        return None

    def _drop(self, node: int, pkt: Packet, cause: LossCause, **evidence) -> None:
        rec = DropRecord(self.now, node, pkt.flow, pkt.seq, not pkt.is_data, cause,
                         size_bytes=pkt.size_bytes, route_active=self.route is not None,
                         **evidence)
        self.drops.append(rec)
        if pkt.is_data:
            self.data_dropped += 1
            self._copies_in_network[(pkt.flow, pkt.seq)] -= 1
            self._data_drops.setdefault((pkt.flow, pkt.seq), []).append(cause)
        else:
            self._ack_drops.setdefault(pkt.flow, []).append((pkt.echo.acked_seq, cause, self.now))
        self._log("drop", node, pkt.seq,
                  f"{'ack' if rec.is_ack else 'data'}:{cause.value}:flow={pkt.flow}")

    def _enqueue(self, node: int, pkt: Packet) -> None:
        q = self.queues[node]
        occupancy = q.occupancy_bytes
        if not q.offer(pkt):
            self._drop(node, pkt, LossCause.CONGESTION, occupancy_bytes=occupancy,
                       capacity_bytes=q.capacity_bytes)
            return
        self.arrivals_log[node].append((pkt.flow, pkt.uid, pkt.is_data))
        if self._tx_busy[node] is None:
            self._start_tx(node)

    def _start_tx(self, node: int) -> None:
        q = self.queues[node]
        while q.fifo:
            pkt = q.pop()
            self.departures[node].append((pkt.flow, pkt.uid, pkt.is_data))
            nh = self._next_hop(node, pkt)
            if nh is None:
                self._drop(node, pkt, LossCause.LINK_FAILURE)
                continue
            link = self.topology.link(node, nh)
            self._tx_busy[node] = pkt
            self._tx_token[node] += 1
            self._push(self.now + link.serialization(pkt.size_bytes), _TX_DONE,
                       (node, nh, pkt, self._tx_token[node]))
            return

    def _tx_done(self, node: int, nh: int, pkt: Packet, token: int) -> None:
        if token != self._tx_token[node] or self._tx_busy[node] is not pkt:
            return
        self._tx_busy[node] = None
        link = self.topology.link(node, nh)
        pkt.ttl -= 1
        per = link.packet_error_rate
        if per > 0.0:
            if pkt.is_data:
                key = ("d", pkt.flow, pkt.seq, pkt.attempt, node, nh)
            else:
                key = ("a", pkt.flow, pkt.uid, node, nh)
            draw = keyed_uniform(self.seed, *key)
            if draw < per:
                self._drop(node, pkt, LossCause.WIRELESS, draw=draw, error_rate=per, key=key)
                self._start_tx(node)
                return
        self._propagating[id(pkt)] = (pkt, nh)
        self._push(self.now + link.propagation_delay, _ARRIVE, (nh, pkt, self.epoch))
        self._start_tx(node)

    def _arrive(self, node: int, pkt: Packet, epoch: int) -> None:
        if epoch != self.epoch:
            return
        self._propagating.pop(id(pkt), None)
        if pkt.is_data and node == self.topology.sink:
            self.data_arrived += 1
            self._copies_in_network[(pkt.flow, pkt.seq)] -= 1
            self._delivered_at[(pkt.flow, pkt.seq)] = self.now
            self._log("deliver", node, pkt.seq, f"flow={pkt.flow}")
            recv = self.receivers[pkt.flow]
            ack = recv.on_data(pkt, self.now)
            if ack is None:
                self._push(self.now + self.delayed_ack_timeout, _DELACK, recv)
            else:
                self._enqueue(node, ack)
            return
        if not pkt.is_data and node == self.topology.source:
            self._log("ack_in", node, pkt.seq, f"flow={pkt.flow}")
            self.senders[pkt.flow].on_ack(pkt.echo, self.now)
            return
        self._enqueue(node, pkt)

    def _apply_script(self, action: ScriptAction) -> None:
        apply_script_action(self, action, self.now)

    # -- main loop ------------------------------------------------------------

    def run(self, until: float) -> "Network":
        heap = self._heap
        while heap and heap[0][0] <= until:
            time, _, kind, payload = heapq.heappop(heap)
            if time < self.now - 1e-12:
                raise SimulationError("event time went backwards")
            self.now = time
            if kind == _ARRIVE:
                self._arrive(*payload)
            elif kind == _TX_DONE:
                self._tx_done(*payload)
            elif kind == _TIMER:
                sender, token = payload
                sender.on_timer(token, time)
            elif kind == _SCRIPT:
                self._apply_script(payload)
            elif kind == _START:
                payload.start(time)
            elif kind == _DELACK:
                ack = payload.flush_delayed(time)
                if ack is not None:
                    self._enqueue(self.topology.sink, ack)
        self.now = max(self.now, until)
        return self

    # -- accounting -------------------------------------------------------------

    def data_in_system(self) -> int:
        n = sum(1 for q in self.queues.values() for p in q.fifo if p.is_data)
        n += sum(1 for p in self._tx_busy.values() if p is not None and p.is_data)
        n += sum(1 for p, _ in self._propagating.values() if p.is_data)
        return n

    @property
    def throughput_packets(self) -> int:
        return sum(r.unique_delivered for r in self.receivers.values())


def apply_script_action(net: Network, action: ScriptAction, now: SimTime) -> List[DropRecord]:
    """Break flushes every queued and in-flight packet; restore installs a route."""
    before = len(net.drops)
    if action.kind == "break":
        net._log("break", -1, -1, str(net.route))
        net.route = None
        net.epoch += 1
        for node in net.topology.nodes:
            for pkt in net.queues[node].flush():
                net._drop(node, pkt, LossCause.LINK_FAILURE, flushed=True)
            busy = net._tx_busy[node]
            if busy is not None:
                net._tx_busy[node] = None
                net._tx_token[node] += 1
                net._drop(node, busy, LossCause.LINK_FAILURE, flushed=True)
        for pkt, nh in list(net._propagating.values()):
            net._drop(nh, pkt, LossCause.LINK_FAILURE, flushed=True)
        net._propagating.clear()
    else:
        if net.route is not None:
            raise ConfigurationError(f"restore at t={now} while route {net.route} is active")
        net.route = action.route
        net._log("restore", -1, -1, str(action.route))
    return net.drops[before:]
