#!/usr/bin/env python3
"""Rule baselines over the full bundled instance set (dynamic setting).

Writes results/compare_all/compare.csv: mean/min/std makespan for each of
the eight dispatching rules over 500 seeded dynamic episodes per instance.
"""

import sys
from pathlib import Path

from djsp_rl.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(main([
        "compare", "--instances", "all", "--rules", "all",
        "--episodes", "500", "--seed", "7",
        "--random-rate", "0.1", "--shuffle", "true",
        "--out-dir", str(ROOT / "results" / "compare_all"),
    ]))
