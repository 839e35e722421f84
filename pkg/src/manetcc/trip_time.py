"""One-way and round-trip delay estimation.

ROTT is the forward-path delay of a data packet as seen through the echo in
its acknowledgment.  EROTT smooths it; its running minimum and maximum stand
in for empty and full intermediate queues.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import TIME_EPS, SimTime


class MalformedSampleError(ValueError):
    """Raised when a trip sample's timestamps are out of order."""


@dataclass(frozen=True)
class TripSample:
    seq: int
    send_time: SimTime
    receiver_timestamp: SimTime
    ack_arrival_time: SimTime
    hop_count: int

    @property
    def rott(self) -> float:
        return compute_rott(self)

    @property
    def rtt(self) -> float:
        rtt = self.ack_arrival_time - self.send_time
        if rtt < -TIME_EPS or self.ack_arrival_time + TIME_EPS < self.receiver_timestamp:
            raise MalformedSampleError(f"ack for seq {self.seq} arrives before its data")
        return max(rtt, 0.0)


def compute_rott(sample: TripSample) -> float:
    delta = sample.receiver_timestamp - sample.send_time
    if delta < -TIME_EPS:
        raise MalformedSampleError(
            f"seq {sample.seq}: received at {sample.receiver_timestamp} "
            f"before it was sent at {sample.send_time}"
        )
    return max(delta, 0.0)


@dataclass
class ErottTracker:
    gain: float = 0.125
    erott: Optional[float] = None
    min_erott: Optional[float] = None
    max_erott: Optional[float] = None
    sample_count: int = 0

    def __post_init__(self):
        if not 0.0 < self.gain <= 1.0:
            raise ValueError("smoothing gain must lie in (0, 1]")

    @property
    def empty(self) -> bool:
        return self.sample_count == 0

    def update(self, rott: float) -> "ErottTracker":
        if rott < 0:
            raise MalformedSampleError(f"negative ROTT {rott}")
        if self.sample_count == 0:
            self.erott = self.min_erott = self.max_erott = rott
        else:
            self.erott = (1.0 - self.gain) * self.erott + self.gain * rott
            self.min_erott = min(self.min_erott, rott)
            self.max_erott = max(self.max_erott, rott)
        self.sample_count += 1
        return self

    def reset(self) -> "ErottTracker":
        self.erott = self.min_erott = self.max_erott = None
        self.sample_count = 0
        return self


def update_erott(tracker: ErottTracker, rott: float) -> ErottTracker:
    return tracker.update(rott)


def reset_for_new_route(tracker: ErottTracker) -> ErottTracker:
    return tracker.reset()


@dataclass
class RttEstimator:
    """Smoothed RTT with gains 1/8 and 1/4, plus the SRTT extremes."""

    srtt: Optional[float] = None
    rttvar: Optional[float] = None
    min_srtt: Optional[float] = None
    max_srtt: Optional[float] = None
    last_srtt: Optional[float] = None
    last_rtt: Optional[float] = None
    alpha: float = 0.125
    beta: float = 0.25

    def update(self, rtt: float) -> "RttEstimator":
        if rtt < 0:
            raise MalformedSampleError(f"negative RTT {rtt}")
        if self.srtt is None:
            self.srtt = rtt
            self.rttvar = rtt / 2.0
        else:
            self.rttvar = (1.0 - self.beta) * self.rttvar + self.beta * abs(self.srtt - rtt)
            self.srtt = (1.0 - self.alpha) * self.srtt + self.alpha * rtt
        self.last_rtt = rtt
        self.last_srtt = self.srtt
        self.min_srtt = self.srtt if self.min_srtt is None else min(self.min_srtt, self.srtt)
        self.max_srtt = self.srtt if self.max_srtt is None else max(self.max_srtt, self.srtt)
        return self

    def rto(self, rto_min: float, rto_max: float, granularity: float = 0.0) -> Optional[float]:
        if self.srtt is None:
            return None
        raw = self.srtt + max(granularity, 4.0 * self.rttvar)
        return min(max(raw, rto_min), rto_max)


def update_rtt(est: RttEstimator, rtt: float) -> RttEstimator:
    return est.update(rtt)
