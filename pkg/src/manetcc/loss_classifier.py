"""Loss differentiation: the queue-usage classifier and the baselines.

Every classifier exposes the same small protocol, used by the sender:

``on_sample(sample, tracker, rtt_est)``
    an acknowledgment closed an RTT measurement with a valid trip sample
``on_ack(echo, now, sender)``
    any acknowledgment arrived
``on_timeout()``
    the retransmission timer fired (called before ``classify``)
``classify(detection, sender)``
    return a :class:`LossCause`, or ``None`` to abstain
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Deque, Optional, Tuple

from .core import ABSTAIN, CANNOT_DETECT, AckEcho, DetectionKind, LossCause, SimTime
from .trip_time import ErottTracker, RttEstimator, TripSample


class InsufficientDataError(RuntimeError):
    pass


class UndefinedJitterError(ZeroDivisionError):
    pass


class ManetMode(Enum):
    CONGESTED = "congested"
    NON_CONGESTED = "non_congested"


@dataclass(frozen=True)
class QueueUsage:
    q: float = 0.0
    alpha_ack: float = 0.8
    alpha_timeout: float = 0.1
    threshold: float = 0.5

    def __post_init__(self):
        for name in ("alpha_ack", "alpha_timeout", "threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")

    @property
    def mode(self) -> ManetMode:
        # ties go to congestion
        return ManetMode.CONGESTED if self.q >= self.threshold else ManetMode.NON_CONGESTED


@dataclass(frozen=True)
class ClassifierVerdict:
    cause: LossCause
    manet_mode: ManetMode
    q_at_decision: float


def instantaneous_usage(erott: float, min_erott: float, max_erott: float) -> float:
    if max_erott <= 0:
        return 0.0
    return min(max((erott - min_erott) / max_erott, 0.0), 1.0)


def q_on_ack(
    qu: QueueUsage,
    erott: Optional[float],
    min_erott: Optional[float],
    max_erott: Optional[float],
) -> QueueUsage:
    if max_erott is None or erott is None or min_erott is None or max_erott <= 0:
        return qu
    inst = instantaneous_usage(erott, min_erott, max_erott)
    q = qu.alpha_ack * inst + (1.0 - qu.alpha_ack) * qu.q
    return replace(qu, q=min(max(q, 0.0), 1.0))


def q_on_timeout(qu: QueueUsage) -> QueueUsage:
    # no ack means a zero instantaneous term
    return replace(qu, q=(1.0 - qu.alpha_timeout) * qu.q)


def enhanced_classify(
    detection: DetectionKind, qu: QueueUsage, failure_flag_set: bool
) -> ClassifierVerdict:
    mode = qu.mode
    congested = mode is ManetMode.CONGESTED
    if detection is DetectionKind.TIMEOUT:
        cause = LossCause.CONGESTION if congested else LossCause.LINK_FAILURE
    elif failure_flag_set:
        # dup acks while a failure is pending come from the route change
        cause = LossCause.LINK_FAILURE
    else:
        cause = LossCause.CONGESTION if congested else LossCause.WIRELESS
    return ClassifierVerdict(cause, mode, qu.q)


@dataclass
class WelcomeState:
    window: int = 10
    ascending_run: int = 3
    rtt_history: Deque[float] = field(default_factory=deque)

    def __post_init__(self):
        if self.window < 2 or self.ascending_run < 1:
            raise ValueError("window must be >= 2 and ascending_run >= 1")
        self.rtt_history = deque(self.rtt_history, maxlen=self.window)

    def add(self, rtt: float) -> None:
        self.rtt_history.append(rtt)

    def ascending(self) -> bool:
        k = self.ascending_run
        h = self.rtt_history
        if len(h) < k + 1:
            return False
        tail = list(h)[-(k + 1):]
        return all(b > a for a, b in zip(tail, tail[1:]))


def welcome_classify(detection: DetectionKind, state: WelcomeState) -> LossCause:
    if not state.rtt_history:
        raise InsufficientDataError("no RTT history yet")
    if state.ascending():
        return LossCause.CONGESTION
    if detection is DetectionKind.TRIPLE_DUPACK:
        return LossCause.WIRELESS
    return LossCause.LINK_FAILURE


def jtcp_jitter(
    oldest_send: SimTime, newest_send: SimTime, oldest_recv: SimTime, newest_recv: SimTime
) -> float:
    recv_span = newest_recv - oldest_recv
    if recv_span <= 0:
        raise UndefinedJitterError("receive span must be positive")
    return (recv_span - (newest_send - oldest_send)) / recv_span


def jtcp_classify(jr: float, cwnd: float, acks_within_one_rtt: bool) -> LossCause:
    if cwnd < 1:
        raise ValueError("cwnd must be >= 1")
    if jr > 1.0 / cwnd and not acks_within_one_rtt:
        return LossCause.CONGESTION
    return LossCause.WIRELESS


def fixed_rto_detect(consecutive_timeouts: int) -> bool:
    return consecutive_timeouts >= 2


def lda_rq_gap_trigger(min_erott: Optional[float], max_erott: Optional[float]) -> bool:
    if min_erott is None or max_erott is None or min_erott <= 0:
        return False
    return max_erott / min_erott > 3.0


# --- classifier objects plugged into the sender -----------------------------


class LossClassifier:
    algorithm_id = "reno"
    # label reported when classify returns None
    no_verdict = ABSTAIN

    @property
    def q(self) -> float:
        return math.nan

    def on_sample(self, sample: TripSample, tracker: ErottTracker, rtt_est: RttEstimator) -> None:
        pass

    def on_ack(self, echo: AckEcho, now: SimTime, sender) -> None:
        pass

    def on_timeout(self) -> None:
        pass

    def classify(self, detection: DetectionKind, sender) -> Optional[LossCause]:
        return LossCause.CONGESTION


class RenoClassifier(LossClassifier):
    """Every loss is congestion."""


class EnhancedClassifier(LossClassifier):
    algorithm_id = "enhanced"

    def __init__(self, alpha_ack=0.8, alpha_timeout=0.1, threshold=0.5):
        self.usage = QueueUsage(0.0, alpha_ack, alpha_timeout, threshold)
        self.last_verdict: Optional[ClassifierVerdict] = None

    @property
    def q(self) -> float:
        return self.usage.q

    @property
    def mode(self) -> ManetMode:
        return self.usage.mode

    def on_sample(self, sample, tracker, rtt_est):
        self.usage = q_on_ack(self.usage, tracker.erott, tracker.min_erott, tracker.max_erott)

    def on_timeout(self):
        self.usage = q_on_timeout(self.usage)

    def classify(self, detection, sender):
        self.last_verdict = enhanced_classify(detection, self.usage, sender.flags.link_failure)
        return self.last_verdict.cause


class WelcomeClassifier(LossClassifier):
    algorithm_id = "welcome"

    def __init__(self, window=10, ascending_run=3):
        self.state = WelcomeState(window, ascending_run)

    def on_ack(self, echo, now, sender):
        # the echoed send time gives a valid sample for every ack
        self.state.add(max(now - echo.data_send_time, 0.0))

    def classify(self, detection, sender):
        try:
            return welcome_classify(detection, self.state)
        except InsufficientDataError:
            return LossCause.CONGESTION


class JtcpClassifier(LossClassifier):
    """Jitter ratio over the acks of the last smoothed RTT."""

    algorithm_id = "jtcp"

    def __init__(self):
        # (ack arrival, data send time, receiver timestamp)
        self._acks: Deque[Tuple[float, float, float]] = deque()
        self.last_jr = math.nan

    def on_ack(self, echo, now, sender):
        self._acks.append((now, echo.data_send_time, echo.receiver_timestamp))
        horizon = sender.rtt.srtt if sender.rtt.srtt is not None else math.inf
        while len(self._acks) > 2 and now - self._acks[0][0] > horizon:
            self._acks.popleft()

    def classify(self, detection, sender):
        if detection is DetectionKind.TIMEOUT:
            return LossCause.CONGESTION
        if len(self._acks) < 2:
            return LossCause.CONGESTION
        _, s_old, r_old = self._acks[0]
        _, s_new, r_new = self._acks[-1]
        try:
            jr = jtcp_jitter(s_old, s_new, r_old, r_new)
        except UndefinedJitterError:
            return LossCause.CONGESTION
        self.last_jr = jr
        srtt = sender.rtt.srtt if sender.rtt.srtt is not None else math.inf
        spread = sender.third_dupack_time - sender.first_dupack_time
        return jtcp_classify(jr, max(sender.cwnd, 1.0), spread <= srtt)


class FixedRtoClassifier(LossClassifier):
    algorithm_id = "fixed_rto"

    def classify(self, detection, sender):
        # the sender counts the timeout being classified
        if detection is DetectionKind.TIMEOUT and fixed_rto_detect(sender.consecutive_timeouts):
            return LossCause.LINK_FAILURE
        return LossCause.CONGESTION


class LdaRqClassifier(LossClassifier):
    """Gap-triggered queue-usage classifier, up to its trigger only.

    Abstains until Max/Min EROTT first exceeds three, then calls a dup-ack
    loss congestion when instantaneous queue usage reaches one half.  It has
    no notion of link failure: timeouts are reported as undetectable and the
    sender reacts to them as to congestion.
    """

    algorithm_id = "lda_rq"

    def __init__(self, threshold=0.5):
        self.threshold = threshold
        self.triggered = False
        self._inst = math.nan
        self.no_verdict = ABSTAIN

    @property
    def q(self) -> float:
        return self._inst

    def on_sample(self, sample, tracker, rtt_est):
        if lda_rq_gap_trigger(tracker.min_erott, tracker.max_erott):
            self.triggered = True
        self._inst = instantaneous_usage(tracker.erott, tracker.min_erott, tracker.max_erott)

    def classify(self, detection, sender):
        if not self.triggered:
            self.no_verdict = ABSTAIN
            return None
        if detection is DetectionKind.TIMEOUT:
            self.no_verdict = CANNOT_DETECT
            return None
        if self._inst >= self.threshold:
            return LossCause.CONGESTION
        return LossCause.WIRELESS


class ForcedVerdict(LossClassifier):
    """Run another classifier's bookkeeping but always answer ``cause``."""

    def __init__(self, inner: LossClassifier, cause: LossCause = LossCause.CONGESTION):
        self.inner = inner
        self.cause = cause
        self.algorithm_id = inner.algorithm_id

    @property
    def q(self):
        return self.inner.q

    def on_sample(self, sample, tracker, rtt_est):
        self.inner.on_sample(sample, tracker, rtt_est)

    def on_ack(self, echo, now, sender):
        self.inner.on_ack(echo, now, sender)

    def on_timeout(self):
        self.inner.on_timeout()

    def classify(self, detection, sender):
        self.inner.classify(detection, sender)
        return self.cause

    @property
    def no_verdict(self):
        return self.inner.no_verdict
