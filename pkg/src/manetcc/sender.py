"""Reno-style sender with the link-failure flag machine and RTO re-basing.

The sender talks to its environment through four calls on ``env``:
``env.now``, ``env.transmit(pkt)``, ``env.set_timer(sender, when, token)``
and ``env.report_detection(sender, seq, detection, verdict, q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .loss_classifier import (
    EnhancedClassifier,
    FixedRtoClassifier,
    JtcpClassifier,
    LdaRqClassifier,
    LossClassifier,
    RenoClassifier,
    WelcomeClassifier,
)
from .core import (
    DEFAULT_INITIAL_TTL,
    DEFAULT_PACKET_SIZE,
    AckEcho,
    DetectionKind,
    LossCause,
    Packet,
    PacketKind,
    SimTime,
)
from .trip_time import ErottTracker, RttEstimator, TripSample


class ProtocolError(RuntimeError):
    pass


class DomainError(ValueError):
    pass


RTO_POLICIES = ("backoff", "hop_scaled", "welcome", "abra", "fixed")


@dataclass
class SenderParams:
    packet_size: int = DEFAULT_PACKET_SIZE
    initial_rto: float = 1.0
    rto_min: float = 0.2
    rto_max: float = 64.0
    initial_cwnd: float = 1.0
    initial_ssthresh: float = 64.0
    max_window: int = 64
    dupack_threshold: int = 3
    erott_gain: float = 1.0
    initial_ttl: int = DEFAULT_INITIAL_TTL
    # hold the RTO steady while a link failure is suspected
    freeze_rto_on_failure: bool = True
    rto_policy: Optional[str] = None
    alpha_ack: float = 0.8
    alpha_timeout: float = 0.1
    threshold: float = 0.5
    welcome_window: int = 10
    welcome_ascending_run: int = 3

    def __post_init__(self):
        if not 0 < self.rto_min <= self.initial_rto <= self.rto_max:
            raise ValueError("need 0 < rto_min <= initial_rto <= rto_max")
        if self.max_window < 1 or self.initial_cwnd < 1:
            raise ValueError("windows must be >= 1")
        if self.initial_ssthresh < 2:
            raise ValueError("initial_ssthresh must be >= 2")
        if self.rto_policy is not None and self.rto_policy not in RTO_POLICIES:
            raise ValueError(f"unknown rto_policy {self.rto_policy!r}; valid: {RTO_POLICIES}")


@dataclass
class FailureFlags:
    link_failure: bool = False
    route_recovery: bool = False

    def clear(self) -> None:
        self.link_failure = False
        self.route_recovery = False


@dataclass
class RouteSnapshot:
    erott: float
    rto: float
    hop_count: int
    rtt: float


def _check_positive(**values):
    for name, v in values.items():
        if not v > 0 or math.isnan(v):
            raise DomainError(f"{name} must be positive, got {v}")


def _clamp(x, lo, hi):
    return min(max(x, lo), hi)


def adjust_rto_hop_scaled(
    rto_old: float,
    erott_old: float,
    erott_new: float,
    hop_old: int,
    hop_new: int,
    rto_min: float = 0.2,
    rto_max: float = 64.0,
) -> float:
    """Scale the old route's RTO by the geometric mean of the delay ratio
    and the inverse hop ratio of the new route."""
    _check_positive(rto_old=rto_old, erott_old=erott_old, erott_new=erott_new,
                    hop_old=hop_old, hop_new=hop_new)
    factor = math.sqrt((erott_new / erott_old) * (hop_old / hop_new))
    return _clamp(rto_old * factor, rto_min, rto_max)


def adjust_rto_welcome(
    rto_old: float, rtt_old: float, rtt_new: float, rto_min: float = 0.2, rto_max: float = 64.0
) -> float:
    _check_positive(rto_old=rto_old, rtt_old=rtt_old, rtt_new=rtt_new)
    return _clamp(rto_old * rtt_new / rtt_old, rto_min, rto_max)


def adjust_rto_abra(
    rto_old: float,
    last_srtt: float,
    min_srtt: float,
    max_srtt: float,
    rto_min: float = 0.2,
    rto_max: float = 64.0,
) -> float:
    _check_positive(rto_old=rto_old)
    span = max_srtt - min_srtt
    factor = 1.0 if span <= 0 else 1.0 + (last_srtt - min_srtt) / span
    return _clamp(rto_old * factor, rto_min, rto_max)


ALGORITHMS = {
    "enhanced": "hop_scaled",
    "reno": "backoff",
    "fixed_rto": "fixed",
    "welcome": "welcome",
    "jtcp": "backoff",
    "lda_rq": "backoff",
}


def make_classifier(algorithm_id: str, params: SenderParams) -> LossClassifier:
    if algorithm_id == "enhanced":
        return EnhancedClassifier(params.alpha_ack, params.alpha_timeout, params.threshold)
    if algorithm_id == "reno":
        return RenoClassifier()
    if algorithm_id == "fixed_rto":
        return FixedRtoClassifier()
    if algorithm_id == "welcome":
        return WelcomeClassifier(params.welcome_window, params.welcome_ascending_run)
    if algorithm_id == "jtcp":
        return JtcpClassifier()
    if algorithm_id == "lda_rq":
        return LdaRqClassifier(params.threshold)
    raise ValueError(f"unknown algorithm {algorithm_id!r}; valid: {sorted(ALGORITHMS)}")


TRACE_COLUMNS = ("time", "event", "seq", "cwnd", "ssthresh", "rto", "q",
                 "link_failure", "route_recovery")


class Sender:
    """One bulk-transfer connection; seq numbers start at 1."""

    def __init__(
        self,
        env,
        flow: int = 0,
        algorithm_id: str = "reno",
        params: Optional[SenderParams] = None,
        classifier: Optional[LossClassifier] = None,
        record_trace: bool = False,
    ):
        self.env = env
        self.flow = flow
        self.params = params or SenderParams()
        p = self.params
        self.algorithm_id = algorithm_id
        self.classifier = classifier if classifier is not None else make_classifier(algorithm_id, p)
        self.rto_policy = p.rto_policy or ALGORITHMS.get(algorithm_id, "backoff")

        self.cwnd = float(p.initial_cwnd)
        self.ssthresh = float(p.initial_ssthresh)
        self.rto = p.initial_rto
        self.next_seq = 1
        self.max_sent = 0
        self.highest_acked = 0
        self.dup_ack_count = 0
        self.consecutive_timeouts = 0
        self.first_dupack_time = 0.0
        self.third_dupack_time = 0.0
        self.recover = 0
        self.in_fast_recovery = False
        self.flags = FailureFlags()
        self.route_snapshot: Optional[RouteSnapshot] = None

        self.tracker = ErottTracker(p.erott_gain)
        self.rtt = RttEstimator()
        self.timed_seq: Optional[int] = None
        self.tx_count: Dict[int, int] = {}

        self._timer_token = 0
        self.timer_deadline: Optional[float] = None

        self.sum_rto = 0.0
        self.transmissions = 0
        self.retransmissions = 0
        self.samples: List[tuple] = []
        self.record_trace = record_trace
        self.trace: List[tuple] = []
        self._uid = 0

    # -- helpers ---------------------------------------------------------

    @property
    def q(self) -> float:
        return self.classifier.q

    @property
    def outstanding(self) -> bool:
        return self.max_sent > self.highest_acked

    def _log(self, event: str, seq: int) -> None:
        if self.record_trace:
            self.trace.append((self.env.now, event, seq, self.cwnd, self.ssthresh, self.rto,
                               self.classifier.q, self.flags.link_failure,
                               self.flags.route_recovery))

    def _arm_timer(self, now: SimTime) -> None:
        self._timer_token += 1
        self.timer_deadline = now + self.rto
        self.env.set_timer(self, self.timer_deadline, self._timer_token)

    def _cancel_timer(self) -> None:
        self._timer_token += 1
        self.timer_deadline = None

    def _send(self, seq: int, now: SimTime) -> Packet:
        retx = seq <= self.max_sent
        self._uid += 1
        pkt = Packet(seq, PacketKind.DATA, self.params.packet_size, now,
                     ttl=self.params.initial_ttl, flow=self.flow, retransmit=retx, uid=self._uid)
        self.tx_count[seq] = self.tx_count.get(seq, 0) + 1
        pkt.attempt = self.tx_count[seq]
        self.transmissions += 1
        self.sum_rto += self.rto
        if retx:
            self.retransmissions += 1
        else:
            self.max_sent = seq
            if self.timed_seq is None:
                self.timed_seq = seq
        self._log("retransmit" if retx else "send", seq)
        self.env.transmit(pkt)
        if self.timer_deadline is None:
            self._arm_timer(now)
        return pkt

    # -- transmission ----------------------------------------------------

    def send_window(self, now: SimTime) -> List[Packet]:
        limit = self.highest_acked + int(math.floor(min(self.cwnd, self.params.max_window)))
        sent = []
        while self.next_seq <= limit:
            sent.append(self._send(self.next_seq, now))
            self.next_seq += 1
        return sent

    def start(self, now: SimTime) -> None:
        self.send_window(now)

    # -- acknowledgments ---------------------------------------------------

    def on_ack(self, echo: AckEcho, now: SimTime) -> None:
        if echo.acked_seq > self.max_sent:
            raise ProtocolError(f"flow {self.flow}: ack {echo.acked_seq} beyond {self.max_sent}")
        self.classifier.on_ack(echo, now, self)

        if echo.acked_seq > self.highest_acked:
            self._on_new_ack(echo, now)
        elif echo.acked_seq == self.highest_acked and self.outstanding:
            self.dup_ack_count += 1
            self._log("dupack", echo.acked_seq)
            if self.dup_ack_count == 1:
                self.first_dupack_time = now
            if self.dup_ack_count == self.params.dupack_threshold:
                self.third_dupack_time = now
                if self.highest_acked >= self.recover:
                    self.on_triple_dup_ack(now)
        self.send_window(now)

    def _on_new_ack(self, echo: AckEcho, now: SimTime) -> None:
        self.highest_acked = echo.acked_seq
        self.dup_ack_count = 0
        self.consecutive_timeouts = 0
        if self.next_seq <= self.highest_acked:
            self.next_seq = self.highest_acked + 1
        if self.in_fast_recovery:
            if self.highest_acked < self.recover:
                # partial ack: repair the next hole without a new detection
                self._send(self.highest_acked + 1, now)
            else:
                self.in_fast_recovery = False
        elif self.cwnd < self.ssthresh:
            self.cwnd += 1.0
        else:
            self.cwnd += 1.0 / self.cwnd
        self.cwnd = min(self.cwnd, float(self.params.max_window))
        self._log("ack", echo.acked_seq)

        if self.timed_seq is not None and echo.acked_seq >= self.timed_seq:
            self.timed_seq = None
            # Karn: only samples from first transmissions
            if not echo.data_retransmitted and self.tx_count.get(echo.data_seq, 0) == 1:
                self._on_rtt_ending_ack(echo, now)

        if self.outstanding:
            self._arm_timer(now)
        else:
            self._cancel_timer()

    def _on_rtt_ending_ack(self, echo: AckEcho, now: SimTime) -> None:
        sample = TripSample(echo.data_seq, echo.data_send_time, echo.receiver_timestamp,
                            now, echo.hop_count)
        rott = sample.rott
        rtt = sample.rtt
        self.tracker.update(rott)
        self.rtt.update(rtt)
        p = self.params
        self.rto = self.rtt.rto(p.rto_min, p.rto_max)
        self.classifier.on_sample(sample, self.tracker, self.rtt)
        self.samples.append((sample.seq, sample.send_time, sample.receiver_timestamp,
                             sample.ack_arrival_time, rott, rtt, self.tracker.erott,
                             self.tracker.min_erott, self.tracker.max_erott))

        if self.flags.link_failure:
            # first measurement over the rebuilt route
            self.flags.route_recovery = True
            self.rto = self._rebase_rto(rott, rtt, echo.hop_count)
            self.tracker.reset()
            self.tracker.update(rott)
            self._log("recovery", echo.acked_seq)
            self.flags.clear()
        self.route_snapshot = RouteSnapshot(self.tracker.erott, self.rto, echo.hop_count, rtt)

    def _rebase_rto(self, rott: float, rtt: float, hop_new: int) -> float:
        snap = self.route_snapshot
        p = self.params
        if snap is None:
            return self.rto
        if self.rto_policy == "hop_scaled" and snap.erott > 0 and rott > 0:
            return adjust_rto_hop_scaled(snap.rto, snap.erott, rott, snap.hop_count, hop_new,
                                   p.rto_min, p.rto_max)
        if self.rto_policy == "welcome" and snap.rtt > 0 and rtt > 0:
            return adjust_rto_welcome(snap.rto, snap.rtt, rtt, p.rto_min, p.rto_max)
        if self.rto_policy == "abra" and self.rtt.last_srtt is not None:
            return adjust_rto_abra(snap.rto, self.rtt.last_srtt, self.rtt.min_srtt,
                                   self.rtt.max_srtt, p.rto_min, p.rto_max)
        return self.rto

    # -- loss detection ----------------------------------------------------

    def on_timer(self, token: int, now: SimTime) -> None:
        if token != self._timer_token:
            return
        self.timer_deadline = None
        if not self.outstanding:
            return
        self.on_timeout(now)

    def on_timeout(self, now: SimTime) -> Optional[LossCause]:
        seq = self.highest_acked + 1
        self.consecutive_timeouts += 1
        self.classifier.on_timeout()
        verdict = self.classifier.classify(DetectionKind.TIMEOUT, self)
        self.env.report_detection(self, seq, DetectionKind.TIMEOUT, verdict, self.classifier.q)
        self._log("timeout", seq)

        self.timed_seq = None
        self.recover = self.max_sent
        self.dup_ack_count = 0
        self.in_fast_recovery = False
        p = self.params
        cause = verdict or LossCause.CONGESTION
        if cause is LossCause.CONGESTION:
            self.ssthresh = max(self.cwnd / 2.0, 2.0)
            self.cwnd = 1.0
            self.rto = min(2.0 * self.rto, p.rto_max)
        elif cause is LossCause.LINK_FAILURE:
            self.flags.link_failure = True
            self.cwnd = 1.0
            if not p.freeze_rto_on_failure:
                self.rto = min(2.0 * self.rto, p.rto_max)
        else:
            # window kept; back off the timer so a dead path is not hammered
            self.rto = min(2.0 * self.rto, p.rto_max)

        if cause is LossCause.WIRELESS:
            self._send(seq, now)
        else:
            self.next_seq = seq
            self.send_window(now)
            if self.next_seq == seq:
                self._send(seq, now)
                self.next_seq = seq + 1
        self._arm_timer(now)
        return verdict

    def on_triple_dup_ack(self, now: SimTime) -> Optional[LossCause]:
        seq = self.highest_acked + 1
        verdict = self.classifier.classify(DetectionKind.TRIPLE_DUPACK, self)
        if self.flags.link_failure:
            self.flags.route_recovery = True
            verdict = LossCause.LINK_FAILURE
        self.env.report_detection(self, seq, DetectionKind.TRIPLE_DUPACK, verdict,
                                  self.classifier.q)
        self._log("fast_retransmit", seq)
        cause = verdict or LossCause.CONGESTION
        if cause is LossCause.CONGESTION:
            self.ssthresh = max(self.cwnd / 2.0, 2.0)
            self.cwnd = self.ssthresh
        self.in_fast_recovery = True
        self.recover = self.max_sent
        self._send(seq, now)
        self._arm_timer(now)
        return verdict
