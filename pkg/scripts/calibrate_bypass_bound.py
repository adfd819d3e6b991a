"""Freeze the relative scale-error bound for noiseless rich motion with BA bypassed.

Runs the default pipeline on oracle seeds that the acceptance test never uses
(1000-1199) and records the largest relative error, rounded up to the next
half percent.  The result is written to tests/data/bypass_bound.json and read
by the acceptance test, which then checks seeds 0-49 against it.
"""

import argparse
import json
import math
from pathlib import Path

import numpy as np

from scalesense.config import load_config
from scalesense.pipeline import run_pipeline

ORACLE_SEEDS = range(1000, 1200)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "data" / "bypass_bound.json"))
    args = p.parse_args()
    errors = []
    for seed in ORACLE_SEEDS:
        cfg = load_config(overrides={"scenario": {"seed": seed}})
        report = run_pipeline(cfg)
        errors.append(math.inf if report.scale_error_rel is None else report.scale_error_rel)
    e = np.array(errors)
    bound = math.ceil(e.max() * 200.0) / 200.0
    doc = {
        "oracle_seeds": [ORACLE_SEEDS.start, ORACLE_SEEDS.stop - 1],
        "accepted": int(np.isfinite(e).sum()),
        "median": float(np.median(e)),
        "p90": float(np.percentile(e, 90)),
        "max": float(e.max()),
        "bound": bound,
        "rule": "max oracle relative error rounded up to the next 0.005",
    }
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc, indent=2))


if __name__ == "__main__":
    main()
