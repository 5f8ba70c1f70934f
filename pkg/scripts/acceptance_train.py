#!/usr/bin/env python3
"""Produce the two long training artifacts the acceptance suite consumes.

Runs the CLI `train` command for ft06 (schedule cycle 1) and la01 (schedule
cycle 8), 3000 episodes each, into results/acceptance/. Completed runs are
skipped, so the script is restartable. TRAIN_EVERY_* trade optimizer steps
for wall clock on slow machines; quality bars in the acceptance tests are
unaffected by how long the run took.
"""

import sys
import time
from pathlib import Path

from djsp_rl.cli import main

ROOT = Path(__file__).resolve().parent.parent
RESULTS = ROOT / "results" / "acceptance"

RUNS = [
    {
        "name": "ft06_k1",
        "argv": ["train", "--instance", "ft06", "--k", "1", "--episodes", "3000",
                 "--seed", "7", "--random-rate", "0.1", "--shuffle", "true",
                 "--train-every", "12"],
    },
    {
        "name": "la01_k8",
        "argv": ["train", "--instance", "la01", "--k", "8", "--episodes", "3000",
                 "--seed", "7", "--random-rate", "0.1", "--shuffle", "true",
                 "--train-every", "6"],
    },
]


def run_all() -> int:
    for spec in RUNS:
        out_dir = RESULTS / spec["name"]
        ckpt = out_dir / "checkpoint.json"
        if ckpt.exists():
            print(f"[{spec['name']}] checkpoint exists, skipping")
            continue
        t0 = time.time()
        print(f"[{spec['name']}] starting: {' '.join(spec['argv'])}")
        rc = main(spec["argv"] + ["--out-dir", str(out_dir)])
        print(f"[{spec['name']}] finished rc={rc} in {(time.time() - t0) / 60:.1f} min")
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(run_all())
