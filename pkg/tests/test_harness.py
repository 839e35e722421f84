import csv
import math
import os
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from manetcc.cli import main
from manetcc.core import CANNOT_DETECT, DetectionKind, LossCause, LossEvent
from manetcc.harness import (
    CONFUSION_COLUMNS,
    FIGURE_FILES,
    LOSS_EVENT_COLUMNS,
    METRICS_COLUMNS,
    MetricsReport,
    Scenario,
    ScenarioError,
    compute_accuracy,
    compute_sum_rto,
    compute_throughput,
    emit_reports,
    fmt,
    load_scenario,
    loss_event_row,
    parse_loss_event_row,
    parse_scenario,
    read_loss_events,
    run_batch,
    write_csv,
)

SCENARIOS = os.path.join(os.path.dirname(__file__), "..", "scenarios")
TINY = """
[scenario]
name = tiny
duration = 8
seeds = 1, 2

[network]
topology = mobile
packet_error_rate = 0.02

[flows]
count = 2

[script]
outage = 1.5

[algorithms]
ids = enhanced, reno
"""


# -- scenario parsing -------------------------------------------------------------

def test_minimal_scenario_gets_defaults():
    sc = parse_scenario("[scenario]\nduration = 60\n[network]\nn_hops = 6\n")
    assert (sc.bandwidth, sc.packet_size, sc.queue_capacity) == (2e6, 1000, 50_000)
    assert sc.topology == "chain" and sc.n_hops == 6 and sc.duration == 60


@pytest.mark.parametrize("text,line,needle", [
    ("[scenario]\nduration = -1\n", 2, "duration"),
    ("[scenario]\nduration = 5\n[algorithms]\nids = enhanced, vegas\n", 4, "valid ids"),
    ("[scenario]\nduration = 5\ncolour = red\n", 3, "unknown key"),
    ("[network]\nn_hops = 3\n", 2, "missing required field"),
    ("[scenario]\nduration = 5\n[bogus]\n", 3, "unknown section"),
    ("duration = 5\n", 1, "outside"),
    ("[scenario]\nduration = abc\n", 2, "bad value"),
    ("[scenario]\nduration = 5\n[script]\nbreak = 1\n", 4, "restore"),
    ("[scenario]\nduration = 5\n[params]\nwarp = 9\n", 4, "unknown parameter"),
])
def test_parse_errors_carry_line_numbers(text, line, needle):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert info.value.line == line and needle in str(info.value)
    assert str(info.value).startswith(f"line {line}:")


def test_explicit_script_and_params():
    sc = parse_scenario("""
[scenario]
duration = 30
seeds = 3-5
[network]
topology = mobile
[script]
break = 5
restore = 8 0-1-5
[params]
erott_gain = 0.125
freeze_rto_on_failure = no
""")
    assert sc.seeds == (3, 4, 5) and sc.script_kind == "explicit"
    assert [a.kind for a in sc.build_script().actions] == ["break", "restore"]
    p = sc.sender_params()
    assert p.erott_gain == 0.125 and p.freeze_rto_on_failure is False


def test_speed_maps_to_outage_rate():
    sc = parse_scenario("[scenario]\nduration = 60\n[network]\ntopology = mobile\n"
                        "[sweep]\nvariable = speed\nvalues = 10, 20\n")
    assert [p[1] for p in sc.points()] == [10.0, 20.0]
    assert sc.at("speed", 10.0).effective_outages_per_minute() == pytest.approx(2.0)
    assert len(sc.at("speed", 20.0).build_script().outages()) == 4


def test_shipped_scenarios_validate():
    for name in ("chain_flows.scn", "chain_wireless.scn", "mobile.scn", "mobile_speed.scn",
                 "minimal.scn"):
        assert main(["validate", "--scenario", os.path.join(SCENARIOS, name)]) == 0


# -- metrics ------------------------------------------------------------------------

def test_accuracy_examples():
    ev = lambda v, t: LossEvent(1, 0.0, DetectionKind.TIMEOUT, v, t, "x")
    C = LossCause.CONGESTION
    perfect = [ev(c, c) for c in LossCause]
    assert compute_accuracy(perfect)[:3] == (1.0, 1.0, 1.0)
    mixed = [ev(C, C)] * 7 + [ev(LossCause.WIRELESS, C)] * 3
    acc = compute_accuracy(mixed)
    assert acc.ac == pytest.approx(0.7) and acc.aw is None and acc.al is None
    assert compute_accuracy([])[:3] == (None, None, None)


verdicts = st.sampled_from([None, *LossCause])
events = st.lists(st.tuples(verdicts, st.sampled_from(list(LossCause)), st.booleans()),
                  max_size=10)


@given(events)
def test_accuracy_matches_brute_force(raw):
    evs = [LossEvent(i, float(i), DetectionKind.TIMEOUT, v, t, "x",
                     no_verdict=CANNOT_DETECT if flag else "abstain")
           for i, (v, t, flag) in enumerate(raw)]
    acc = compute_accuracy(evs)
    for cause, got in zip(LossCause, (acc.ac, acc.aw, acc.al)):
        pool = [e for e in evs if e.truth is cause]
        want = sum(e.verdict is cause for e in pool) / len(pool) if pool else None
        assert got == want
    rows = Counter(e.truth.value for e in evs)
    for cause in LossCause:
        assert sum(n for (t, _), n in acc.confusion.items() if t == cause.value) == rows[cause.value]


def test_throughput_and_sum_rto_examples():
    assert compute_throughput(6000, 60.0) == 100.0
    assert compute_throughput(0, 60.0) == 0.0
    rows = [(0.1, "deliver", 6, 1, "flow=0"), (0.2, "deliver", 6, 1, "flow=0"),
            (0.3, "deliver", 6, 2, "flow=0")]
    assert compute_throughput(rows, 2.0) == 1.0
    with pytest.raises(ValueError):
        compute_throughput(1, 0.0)
    trace = [(0.0, "send", 1, 1, 64, 1.0), (1.0, "retransmit", 1, 1, 2, 2.0),
             (3.0, "retransmit", 1, 1, 2, 4.0), (3.5, "ack", 1, 1, 2, 4.0)]
    trace = [r + (0.0, False, False) for r in trace]
    assert compute_sum_rto(trace) == 7.0


def test_fmt_rules():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(None) == fmt(math.nan) == "n/a"
    assert fmt(True) == "1" and fmt(LossCause.WIRELESS) == "wireless" and fmt(7) == "7"


# -- CSV output ---------------------------------------------------------------------

def _read(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def test_empty_report_writes_headers_only(tmp_path):
    written = emit_reports(MetricsReport("empty"), tmp_path)
    assert len(written) == 2 + len(FIGURE_FILES)
    assert _read(tmp_path / "metrics.csv") == [list(METRICS_COLUMNS)]
    assert _read(tmp_path / "confusion.csv") == [list(CONFUSION_COLUMNS)]


@pytest.fixture(scope="module")
def tiny_report():
    return run_batch(parse_scenario(TINY), record_trace=True)


def test_confusion_rows_sum_to_truth_counts(tiny_report, tmp_path):
    emit_reports(tiny_report, tmp_path)
    rows = _read(tmp_path / "confusion.csv")
    head, body = rows[0], rows[1:]
    metrics = {(r[2], r[3]): dict(zip(METRICS_COLUMNS, r)) for r in _read(tmp_path / "metrics.csv")[1:]}
    sums = Counter()
    for r in body:
        d = dict(zip(head, r))
        sums[(d["algorithm"], d["seed"], d["truth"])] += int(d["count"])
    for (algo, seed), m in metrics.items():
        for cause, col in (("congestion", "n_congestion"), ("wireless", "n_wireless"),
                           ("link_failure", "n_link_failure")):
            assert sums[(algo, seed, cause)] == int(m[col])


def test_mobile_scenario_sees_every_cause():
    sc = load_scenario(os.path.join(SCENARIOS, "mobile.scn"))
    report = run_batch(sc, algorithms=["enhanced"], seeds=[3])
    assert {e.truth for e in report.cells[0].events} == set(LossCause)


def test_parallel_batch_matches_serial(tiny_report):
    par = run_batch(parse_scenario(TINY), record_trace=True, workers=2)
    key = lambda r: [(c.algorithm, c.seed, c.ac, c.aw, c.al, c.throughput, c.sum_rto,
                      c.event_trace) for c in r.cells]
    assert key(par) == key(tiny_report)


def test_float_fields_have_nine_significant_digits(tiny_report, tmp_path):
    emit_reports(tiny_report, tmp_path)
    for r in _read(tmp_path / "metrics.csv")[1:]:
        value = r[METRICS_COLUMNS.index("throughput")]
        assert value == f"{float(value):.9g}"


finite = st.floats(0, 1e4, allow_nan=False).map(lambda x: float(f"{x:.9g}"))


@given(st.integers(0, 9), st.integers(1, 10**6), finite, st.sampled_from(list(DetectionKind)),
       verdicts, st.sampled_from(list(LossCause)), st.sampled_from(["enhanced", "lda_rq"]),
       st.one_of(st.just(math.nan), st.floats(0, 1).map(lambda x: float(f"{x:.9g}"))),
       st.sampled_from(["abstain", CANNOT_DETECT]))
def test_loss_event_csv_round_trip(flow, seq, t, det, verdict, truth, algo, q, nv):
    e = LossEvent(seq, t, det, verdict, truth, algo, flow, q, nv if verdict is None else "abstain")
    back = parse_loss_event_row([fmt(v) for v in loss_event_row(e)])
    same_q = (math.isnan(e.q_at_decision) and math.isnan(back.q_at_decision)) or \
        e.q_at_decision == back.q_at_decision
    assert same_q
    nan_free = lambda x: x.__class__(**{**x.__dict__, "q_at_decision": 0.0})
    assert nan_free(back) == nan_free(e)


def test_loss_event_file_round_trip(tiny_report, tmp_path):
    events = [e for c in tiny_report.cells for e in c.events]
    write_csv(tmp_path / "l.csv", LOSS_EVENT_COLUMNS, (loss_event_row(e) for e in events))
    back = read_loss_events(tmp_path / "l.csv")
    assert [(b.seq, b.truth, b.verdict_label) for b in back] == \
        [(e.seq, e.truth, e.verdict_label) for e in events]
    with pytest.raises(ValueError):
        parse_loss_event_row(["1"])
    with pytest.raises(ValueError):
        read_loss_events(_write_other(tmp_path))


def _write_other(tmp_path):
    path = tmp_path / "other.csv"
    write_csv(path, ("a", "b"), [])
    return path


# -- command line -------------------------------------------------------------------

def test_cli_run_and_errors(tmp_path, capsys):
    scn = tmp_path / "tiny.scn"
    scn.write_text(TINY, encoding="utf-8")
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(scn), "--out", str(out), "--seed", "1",
                 "--algo", "enhanced", "--trace"]) == 0
    names = sorted(os.listdir(out / "traces"))
    assert names == sorted(f"{k}_enhanced_seed1.csv"
                           for k in ("samples", "sender", "events", "losses"))
    assert len(_read(out / "metrics.csv")) == 2

    assert main(["list-algos"]) == 0
    assert "enhanced" in capsys.readouterr().out

    assert main(["validate", "--scenario", str(tmp_path / "missing.scn")]) != 0
    bad = tmp_path / "bad.scn"
    bad.write_text("[scenario]\nduration = 5\n[algorithms]\nids = vegas\n", encoding="utf-8")
    assert main(["validate", "--scenario", str(bad)]) != 0
    assert "line 4" in capsys.readouterr().err
    assert main(["run", "--scenario", str(scn), "--algo", "vegas", "--out", str(out)]) != 0
    assert main(["run", "--scenario", str(scn), "--seed", "-3", "--out", str(out)]) != 0
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code != 0
