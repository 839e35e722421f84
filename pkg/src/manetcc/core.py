"""Shared vocabulary: simulated time, packets, loss causes and a seeded RNG."""

from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional

SimTime = float

DEFAULT_PACKET_SIZE = 1000
DEFAULT_ACK_SIZE = 40
DEFAULT_INITIAL_TTL = 64

# absolute tolerance for comparing simulated times
TIME_EPS = 1e-9


class PacketKind(Enum):
    DATA = "data"
    ACK = "ack"
    DUPACK = "dupack"


class LossCause(Enum):
    CONGESTION = "congestion"
    WIRELESS = "wireless"
    LINK_FAILURE = "link_failure"


class DetectionKind(Enum):
    TIMEOUT = "timeout"
    TRIPLE_DUPACK = "triple_dupack"


# verdict labels for events a classifier does not attribute to a cause
ABSTAIN = "abstain"
CANNOT_DETECT = "cannot_detect_link_failure"
NO_VERDICT_LABELS = (ABSTAIN, CANNOT_DETECT)


@dataclass(frozen=True)
class AckEcho:
    """What an acknowledgment tells the sender about the data packet behind it.

    ``data_seq``/``data_send_time`` identify the data packet whose arrival
    triggered this ack (a timestamp-option style echo), which keeps one-way
    samples unambiguous when the cumulative ack number lags behind.
    """

    acked_seq: int
    receiver_timestamp: SimTime
    hop_count: int
    data_seq: int = 0
    data_send_time: SimTime = 0.0
    data_retransmitted: bool = False

    def __post_init__(self):
        if self.hop_count < 1:
            raise ValueError(f"hop_count must be >= 1, got {self.hop_count}")
        if self.receiver_timestamp + TIME_EPS < self.data_send_time:
            raise ValueError("receiver_timestamp precedes data send time")


@dataclass
class Packet:
    seq: int
    kind: PacketKind
    size_bytes: int
    send_time: SimTime
    ttl: int = DEFAULT_INITIAL_TTL
    echo: Optional[AckEcho] = None
    flow: int = 0
    retransmit: bool = False
    uid: int = 0
    attempt: int = 1

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError("size_bytes must be positive")
        if self.kind is not PacketKind.DATA and self.echo is None:
            raise ValueError("ack packets must carry an AckEcho")

    @property
    def is_data(self) -> bool:
        return self.kind is PacketKind.DATA


@dataclass(frozen=True)
class LossEvent:
    """A loss the sender detected, with the classifier's call and the truth.

    ``verdict`` is ``None`` when the classifier gave no cause; ``no_verdict``
    then says why.  ``truth`` comes from the simulator's drop log and is never
    written by a classifier.
    """

    seq: int
    time: SimTime
    detection: DetectionKind
    verdict: Optional[LossCause]
    truth: LossCause
    algorithm_id: str
    flow: int = 0
    q_at_decision: float = math.nan
    no_verdict: str = ABSTAIN

    def __post_init__(self):
        if self.no_verdict not in NO_VERDICT_LABELS:
            raise ValueError(f"unknown no-verdict label {self.no_verdict!r}")

    @property
    def verdict_label(self) -> str:
        return self.no_verdict if self.verdict is None else self.verdict.value


class Rng:
    """Seeded uniform source.

    Backed by the stdlib Mersenne Twister (MT19937), whose state transition
    and integer seeding are fixed by the language reference, so a given seed
    yields the same stream on every platform.
    """

    def __init__(self, seed: int):
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self._gen = random.Random(seed)

    def next_uniform(self) -> float:
        return self._gen.random()

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self._gen.random()


def rng_next_uniform(rng: Rng) -> float:
    return rng.next_uniform()


def keyed_uniform(seed: int, *key) -> float:
    """Uniform draw in [0, 1) that depends only on ``seed`` and ``key``.

    Used for the per-transmission error lottery so that two algorithms run
    with the same seed face the same channel for the same packet attempt,
    regardless of how their event orderings diverge.
    """
    h = hashlib.blake2b(repr((seed,) + key).encode(), digest_size=8).digest()
    (x,) = struct.unpack(">Q", h)
    return (x >> 11) * (1.0 / 9007199254740992.0)
