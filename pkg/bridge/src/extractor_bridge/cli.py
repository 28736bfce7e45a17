"""Run an extraction job: extractor-bridge run job.json"""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import run_job
from .job import BridgeError, ExtractionJob


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="extractor-bridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute a job file")
    runp.add_argument("job", help="path to the job JSON")
    runp.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        job = ExtractionJob.load(args.job)
        produced = run_job(job)
    except (BridgeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for kind, path in produced.items():
        print(f"{kind}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
