"""Replay every bundled scenario and print its report.

    python3 scripts/run_demos.py [--format table] [--seed N] [names...]
"""

import argparse
import sys
import time

from hdlnet.harness.report import render
from hdlnet.harness.scenario import bundled, parse_scenario
from hdlnet.harness.simulator import run

DEFAULT = ["demo1", "demo2", "handover", "registry_fault", "throughput"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", default=DEFAULT)
    ap.add_argument("--format", choices=("text", "table"), default="text")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    failed = []
    for name in args.names:
        started = time.perf_counter()
        report = run(parse_scenario(bundled(name)), seed=args.seed)
        print(f"== {name} ({time.perf_counter() - started:.2f}s wall)")
        print(render(report, args.format))
        print()
        if not report.passed:
            failed.append(name)
    print("all scenarios passed" if not failed else f"failed: {', '.join(failed)}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
