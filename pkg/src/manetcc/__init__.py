"""Discrete-event study of TCP loss classification over multi-hop wireless paths."""

from .loss_classifier import (
    EnhancedClassifier,
    QueueUsage,
    enhanced_classify,
    jtcp_classify,
    jtcp_jitter,
    q_on_ack,
    q_on_timeout,
    welcome_classify,
)
from .core import AckEcho, DetectionKind, LossCause, LossEvent, Packet, PacketKind, Rng
from .harness import (
    MetricsReport,
    Scenario,
    ScenarioError,
    compute_accuracy,
    compute_sum_rto,
    compute_throughput,
    emit_reports,
    parse_scenario,
    run_batch,
)
from .netsim import Network, build_chain, build_mobile
from .sender import Sender, SenderParams, adjust_rto_abra, adjust_rto_hop_scaled, adjust_rto_welcome
from .trip_time import ErottTracker, RttEstimator, TripSample, compute_rott

__all__ = [
    "AckEcho", "DetectionKind", "EnhancedClassifier", "ErottTracker", "LossCause", "LossEvent",
    "MetricsReport", "Network", "Packet", "PacketKind", "QueueUsage", "Rng", "RttEstimator",
    "Scenario", "ScenarioError", "Sender", "SenderParams", "TripSample", "adjust_rto_abra",
    "adjust_rto_hop_scaled", "adjust_rto_welcome", "build_chain", "build_mobile", "compute_accuracy",
    "compute_rott", "compute_sum_rto", "compute_throughput", "emit_reports", "enhanced_classify",
    "jtcp_classify", "jtcp_jitter", "parse_scenario", "q_on_ack", "q_on_timeout", "run_batch",
    "welcome_classify",
]
