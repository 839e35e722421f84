import math
from types import SimpleNamespace

import pytest
from hypothesis import given, strategies as st

from manetcc.loss_classifier import (
    EnhancedClassifier,
    ForcedVerdict,
    JtcpClassifier,
    LdaRqClassifier,
    ManetMode,
    QueueUsage,
    UndefinedJitterError,
    WelcomeState,
    enhanced_classify,
    fixed_rto_detect,
    instantaneous_usage,
    jtcp_classify,
    jtcp_jitter,
    lda_rq_gap_trigger,
    q_on_ack,
    q_on_timeout,
    welcome_classify,
)
from manetcc.core import CANNOT_DETECT, ABSTAIN, DetectionKind, LossCause
from manetcc.trip_time import ErottTracker

C, W, L = LossCause.CONGESTION, LossCause.WIRELESS, LossCause.LINK_FAILURE
TO, TD = DetectionKind.TIMEOUT, DetectionKind.TRIPLE_DUPACK

unit = st.floats(0.0, 1.0)
pos = st.floats(1e-4, 10.0)


def test_first_measurement_gives_zero_usage():
    qu = q_on_ack(QueueUsage(0.0), 0.05, 0.05, 0.05)
    assert qu.q == 0.0


def test_q_on_ack_hand_value():
    assert q_on_ack(QueueUsage(0.5), 0.180, 0.100, 0.200).q == pytest.approx(0.42, rel=1e-12)


def test_q_on_ack_without_samples_is_identity():
    qu = QueueUsage(0.3)
    assert q_on_ack(qu, None, None, None) == qu


def test_q_on_timeout_hand_value():
    assert q_on_timeout(QueueUsage(1.0)).q == pytest.approx(0.9, rel=1e-12)


@given(st.integers(0, 40), unit)
def test_timeout_decay_is_geometric(n, q0):
    qu = QueueUsage(q0)
    for _ in range(n):
        qu = q_on_timeout(qu)
    assert qu.q == pytest.approx(0.9**n * q0, rel=1e-12, abs=1e-300)


def test_seven_timeouts_needed_from_full_usage():
    qu, n = QueueUsage(1.0), 0
    while qu.mode is ManetMode.CONGESTED:
        qu, n = q_on_timeout(qu), n + 1
    assert n == 7


def test_threshold_tie_is_congestion():
    assert QueueUsage(0.5).mode is ManetMode.CONGESTED


@pytest.mark.parametrize("bad", [dict(q=1.1), dict(q=-0.1), dict(alpha_ack=1.0), dict(threshold=0.0)])
def test_queue_usage_validation(bad):
    with pytest.raises(ValueError):
        QueueUsage(**bad)


@given(st.lists(st.one_of(st.none(), st.tuples(pos, pos, pos)), max_size=60), unit)
def test_q_stays_in_unit_interval(ops, q0):
    qu = QueueUsage(q0)
    for op in ops:
        if op is None:
            qu = q_on_timeout(qu)
        else:
            e, a, b = op
            qu = q_on_ack(qu, e, min(a, b), max(a, b))
        assert 0.0 <= qu.q <= 1.0


@given(pos, pos, pos)
def test_instantaneous_usage_is_clamped(e, a, b):
    assert 0.0 <= instantaneous_usage(e, min(a, b), max(a, b)) <= 1.0


@pytest.mark.parametrize("q,flag,detection,expected", [
    (0.6, False, TO, C),
    (0.3, False, TO, L),
    (0.3, False, TD, W),
    (0.6, False, TD, C),
    (0.3, True, TD, L),
])
def test_enhanced_verdict_table(q, flag, detection, expected):
    v = enhanced_classify(detection, QueueUsage(q), flag)
    assert v.cause is expected and v.q_at_decision == q


@given(unit, st.booleans(), st.sampled_from(list(DetectionKind)))
def test_enhanced_classify_is_total(q, flag, detection):
    v = enhanced_classify(detection, QueueUsage(q), flag)
    assert v.cause in (C, W, L)
    assert (v.manet_mode is ManetMode.CONGESTED) == (q >= 0.5)


def _verdicts(rotts, offset, detections):
    tracker, qu = ErottTracker(0.125), QueueUsage(0.0)
    out = []
    for r, d in zip(rotts, detections):
        tracker.update(r + offset)
        qu = q_on_ack(qu, tracker.erott, tracker.min_erott, tracker.max_erott)
        out.append((enhanced_classify(d, qu, False).cause, qu.q))
    return out


@given(st.lists(st.floats(0.01, 0.5), min_size=2, max_size=30),
       st.floats(-0.1, 0.1), st.data())
def test_clock_offset_only_moves_q_through_max(rotts, frac, data):
    """A receiver clock offset leaves verdicts alone unless q sits near the threshold."""
    c = frac * min(rotts)
    dets = data.draw(st.lists(st.sampled_from([TO, TD]), min_size=len(rotts),
                              max_size=len(rotts)))
    for (v0, q0), (v1, q1) in zip(_verdicts(rotts, 0.0, dets), _verdicts(rotts, c, dets)):
        # q scales by at most max/(max + c); only the band it can sweep may flip
        if abs(q0 - 0.5) > 0.5 * 0.12 + 1e-9:
            assert v0 is v1
        assert q1 == pytest.approx(q0, abs=0.12 * q0 + 1e-9)


def test_clock_offset_can_flip_a_near_threshold_verdict():
    rotts = [0.15, 0.05, 0.05]
    v0 = _verdicts(rotts, 0.0, [TD] * 3)[-1]
    v1 = _verdicts(rotts, 0.1 * min(rotts), [TD] * 3)[-1]
    assert v0[0] is C and v1[0] is W


def test_welcome_examples():
    s = WelcomeState()
    for r in (0.10, 0.12, 0.15, 0.19):
        s.add(r)
    assert welcome_classify(TO, s) is C and welcome_classify(TD, s) is C
    flat = WelcomeState()
    for r in (0.10, 0.10, 0.10):
        flat.add(r)
    assert welcome_classify(TD, flat) is W
    assert welcome_classify(TO, flat) is L


def test_jtcp_jitter_hand_value():
    assert jtcp_jitter(0.0, 0.100, 0.0, 0.120) == pytest.approx(0.02 / 0.12, rel=1e-12)
    with pytest.raises(UndefinedJitterError):
        jtcp_jitter(0.0, 0.1, 0.5, 0.5)


@pytest.mark.parametrize("jr,within,expected", [(0.2, False, C), (0.05, False, W),
                                                 (0.05, True, W), (0.2, True, W)])
def test_jtcp_rule(jr, within, expected):
    assert jtcp_classify(jr, 8, within) is expected


def test_fixed_rto_and_lda_triggers():
    assert fixed_rto_detect(2) and not fixed_rto_detect(1)
    assert lda_rq_gap_trigger(0.02, 0.07)
    assert not lda_rq_gap_trigger(0.02, 0.06)
    assert not lda_rq_gap_trigger(None, 0.06)


def _sender(**kw):
    base = dict(flags=SimpleNamespace(link_failure=False), cwnd=8.0,
                rtt=SimpleNamespace(srtt=0.1), first_dupack_time=0.0, third_dupack_time=0.0,
                consecutive_timeouts=1)
    base.update(kw)
    return SimpleNamespace(**base)


def test_lda_rq_labels():
    lda = LdaRqClassifier()
    assert lda.classify(TO, _sender()) is None and lda.no_verdict == ABSTAIN
    t = ErottTracker(1.0).update(0.02).update(0.07)
    lda.on_sample(None, t, None)
    assert lda.triggered
    assert lda.classify(TO, _sender()) is None and lda.no_verdict == CANNOT_DETECT
    # inst = (0.07 - 0.02) / 0.07 >= 0.5
    assert lda.classify(TD, _sender()) is C
    t.update(0.021)
    lda.on_sample(None, t, None)
    assert lda.classify(TD, _sender()) is W


def test_jtcp_classifier_dupack_spread():
    j = JtcpClassifier()
    from manetcc.core import AckEcho
    s = _sender()
    # receive spacing grows faster than send spacing: jr = 0.5 > 1/8
    j.on_ack(AckEcho(1, 0.10, 2, 1, 0.00), 0.11, s)
    j.on_ack(AckEcho(2, 0.30, 2, 2, 0.10), 0.31, s)
    assert j.classify(TD, _sender(third_dupack_time=0.5)) is C
    assert j.classify(TD, _sender(third_dupack_time=0.05)) is W
    assert j.classify(TO, s) is C


def test_forced_verdict_keeps_inner_state():
    inner = EnhancedClassifier()
    f = ForcedVerdict(inner, C)
    inner.usage = QueueUsage(0.1)
    assert f.classify(TO, _sender()) is C
    assert inner.last_verdict.cause is L
    f.on_timeout()
    assert f.q == pytest.approx(0.09)
