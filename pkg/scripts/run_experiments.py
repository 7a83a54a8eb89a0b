"""Run every shipped experiment config and collect the outputs under one directory.

    python3 scripts/run_experiments.py [--out results] [--workers 4] [--only histogram eight_mode]
"""

import argparse
import sys
from pathlib import Path

from rklmc.cli import main as cli_main

CONFIG_DIR = Path(__file__).parent / "configs"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--paper-scale", action="store_true")
    parser.add_argument("--only", nargs="*", help="config stems to run")
    args = parser.parse_args()

    configs = sorted(CONFIG_DIR.glob("*.ini"))
    if args.only:
        configs = [c for c in configs if c.stem in args.only]
    status = 0
    for path in configs:
        print(f"== {path.stem}")
        argv = ["run", str(path), "--workers", str(args.workers), "--output-dir", str(Path(args.out) / path.stem)]
        if args.paper_scale:
            argv.append("--paper-scale")
        status = max(status, cli_main(argv))
    return status


if __name__ == "__main__":
    sys.exit(main())
