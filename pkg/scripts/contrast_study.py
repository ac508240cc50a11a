"""Run the compactness probe over the catalog and print a side-by-side summary.

    python scripts/contrast_study.py [--out runs/contrast] [--plots]
"""

import argparse
import json
from pathlib import Path

from dbarlab.experiment import ExperimentConfig, compare_runs, run_experiment

CASES = [
    ("z4_n1", 1, {"L": 6.0, "N": 81}, {}),
    ("z2_n1", 1, {"L": 6.0, "N": 81}, {}),
    ("z1_4_z2_4", 2, {"L": 2.0, "N": 11}, {"k": 6, "tol": 1e-5}),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/contrast")
    ap.add_argument("--plots", action="store_true")
    args = ap.parse_args()
    reports = {}
    for key, n, grid, solver in CASES:
        raw = {"kind": "probe", "n": n, "weight": key, "grid": grid, "solver": solver, "plots": args.plots}
        rep = run_experiment(ExperimentConfig.from_dict(raw), Path(args.out) / key)
        reports[key] = rep
        p = rep.results["probe"]
        tails = ", ".join(f"{row['tail']:.2e}" for row in p["tail_table"])
        print(f"{key:12s} verdict={p['verdict']:13s} lambda_1={p['eigenvalues'][0]:.5f} tails=[{tails}]")
    diff = compare_runs(reports["z2_n1"], reports["z4_n1"])
    print(json.dumps(diff["tables"]["eigenvalues"], indent=1))


if __name__ == "__main__":
    main()
