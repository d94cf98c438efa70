"""Runner command line: one invocation, one JSON report on stdout."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .runner import RunnerRequest, run_candidate


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scimind-runner",
        description="Execute a candidate script under a timeout and print one JSON execution report.",
    )
    parser.add_argument("script_path", type=Path)
    parser.add_argument("--workdir", type=Path, required=True)
    parser.add_argument("--timeout", type=float, default=120.0, help="wall-clock limit in seconds")
    parser.add_argument("--stdout-tail", type=int, default=4000,
                        help="max characters of candidate stdout kept in the report")
    args = parser.parse_args(argv)

    report = run_candidate(
        RunnerRequest(
            script_path=args.script_path,
            workdir=args.workdir,
            timeout_seconds=args.timeout,
            stdout_tail_chars=args.stdout_tail,
        )
    )
    print(json.dumps(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
