"""How far apart are the closed-form delay and the simulated pipeline?

Draws random small scenarios, solves each with A*, simulates the chosen plan
and writes the relative gap to ``des_fidelity.csv``. B=1 rows should all be
zero; larger B exposes the overlap term's optimism.

    python demos/des_fidelity.py [num_scenarios] [out_dir]
"""

import csv
import sys
from pathlib import Path

import numpy as np

from leosplit.optimizer import astar_split
from leosplit.profiles import random_scenario
from leosplit.sim import compare


def main(n: int = 300, out: str = "."):
    rng = np.random.default_rng(0)
    rows = []
    for i in range(n):
        scn = random_scenario(rng)
        res = astar_split(scn)
        if not res.feasible:
            continue
        rep = compare(scn, res.plan)
        rows.append([i, scn.num_stages, scn.workload.num_batches, repr(rep["analytic_total"]), repr(rep["sim_total"]),
                     repr(rep["rel_diff"])])  # fmt: skip

    path = Path(out) / "des_fidelity.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "num_stages", "num_batches", "analytic_total_s", "sim_total_s", "rel_diff"])
        w.writerows(rows)

    diffs = np.array([float(r[5]) for r in rows])
    single = np.array([r[2] == 1 for r in rows])
    print(f"{len(rows)} feasible scenarios written to {path}")
    print(f"B=1: max rel_diff {diffs[single].max(initial=0.0):.3g}")
    print(f"B>1: median {np.median(diffs[~single]):.3g}, max {diffs[~single].max(initial=0.0):.3g}, "
          f"flagged {int(np.sum(diffs[~single] > 1e-9))}/{int(np.sum(~single))}")  # fmt: skip


if __name__ == "__main__":
    args = sys.argv[1:]
    main(int(args[0]) if args else 300, args[1] if len(args) > 1 else ".")
