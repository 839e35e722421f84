"""Command line entry point: ``run``, ``list-algos`` and ``validate``."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .harness import (
    ALGORITHM_IDS,
    ScenarioError,
    emit_reports,
    fmt,
    load_scenario,
    run_batch,
)
from .sender import ALGORITHMS

DESCRIPTIONS = {
    "enhanced": "queue-usage loss classifier with link-failure detection and hop-aware RTO",
    "reno": "every loss is congestion; exponential back-off",
    "fixed_rto": "two consecutive timeouts mean route failure; RTO held",
    "welcome": "ascending RTT history means congestion; RTT-ratio RTO rebase",
    "jtcp": "jitter ratio against 1/cwnd for dup-ack losses",
    "lda_rq": "queue usage after the Max/Min EROTT gap exceeds three; no link failure",
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="manetcc", description="MANET loss-classification simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write CSV reports")
    run.add_argument("--scenario", required=True, help="scenario file")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--seed", type=int, help="run only this seed")
    run.add_argument("--algo", help="comma separated algorithm ids (default: scenario list)")
    run.add_argument("--trace", action="store_true",
                     help="also write per-cell trip-sample, sender and event traces")
    run.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    sub.add_parser("list-algos", help="print the known algorithm ids")

    val = sub.add_parser("validate", help="parse and check a scenario file")
    val.add_argument("--scenario", required=True, help="scenario file")
    return p


def _fail(message: str, code: int = 2) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)

    if args.command == "list-algos":
        for algo in ALGORITHM_IDS:
            print(f"{algo}\trto_policy={ALGORITHMS[algo]}\t{DESCRIPTIONS[algo]}")
        return 0

    try:
        scenario = load_scenario(args.scenario)
    except OSError as exc:
        return _fail(f"cannot read {args.scenario}: {exc.strerror or exc}")
    except ScenarioError as exc:
        return _fail(f"{args.scenario}: {exc}")

    if args.command == "validate":
        points = len(scenario.points())
        print(f"ok: {scenario.name}: topology={scenario.topology} duration={fmt(scenario.duration)} "
              f"flows={scenario.flow_count} seeds={len(scenario.seeds)} "
              f"algorithms={','.join(scenario.algorithms)} sweep_points={points}")
        return 0

    if args.seed is not None and not 0 <= args.seed < 2**64:
        return _fail("--seed must be a 64-bit unsigned integer")
    algos = [a.strip() for a in args.algo.split(",") if a.strip()] if args.algo else None
    try:
        report = run_batch(scenario, algorithms=algos,
                           seeds=[args.seed] if args.seed is not None else None,
                           record_trace=args.trace, workers=max(1, args.workers))
        written = emit_reports(report, args.out, trace=args.trace)
    except ScenarioError as exc:
        return _fail(str(exc))
    except OSError as exc:
        return _fail(f"cannot write reports to {args.out}: {exc}")
    except RuntimeError as exc:
        return _fail(str(exc), code=1)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
