"""Walk through the reference ViT-G scenario in scenarios/table2_vitg.json.

Solves it with every method, prints the per-stage timing of the best plan and
then replays that plan in the discrete-event simulator.

    python demos/table2_walkthrough.py
"""

from pathlib import Path

from leosplit.delay import evaluate_plan, stage_times
from leosplit.optimizer import METHODS, solve
from leosplit.scenario import load_scenario
from leosplit.sim import compare, simulate

SCN = Path(__file__).resolve().parent.parent / "scenarios" / "table2_vitg.json"


def main():
    scn = load_scenario(SCN)
    print(f"{scn.workload.num_layers} layers, {scn.num_stages} compute satellites, B={scn.workload.num_batches}")
    print(f"{'method':<18}{'total (s)':>12}{'comm (Gbit)':>14}  layer counts")
    best = None
    for m in METHODS:
        if m == "brute_force":
            continue
        res = solve(scn, m)
        if not res.feasible:
            print(f"{m:<18}{'infeasible':>12}")
            continue
        counts = list(res.plan.layer_counts) if res.plan else "-"
        print(f"{m:<18}{res.total:>12.3f}{res.comm_bits / 1e9:>14.3f}  {counts}")
        if m == "astar":
            best = res

    plan = best.plan
    t0, comps, comms = stage_times(scn, plan)
    bd = evaluate_plan(scn, plan)
    print(f"\nastar plan: q = {list(plan.compression_ratios)}, uplink {t0:.3f} s")
    for k, (c, m, e) in enumerate(zip(comps, comms, bd.per_stage_eff)):
        print(f"  stage {k + 1}: compute {c:.3f} s, send {m:.3f} s, effective {e:.3f} s")
    print(f"  startup {bd.startup:.3f} s, bottleneck {bd.steady:.3f} s at stage {bd.bottleneck_stage}")

    print("\nsimulated:")
    print(simulate(scn, plan).summary())
    rep = compare(scn, plan)
    print(f"bottleneck stage: analytic {rep['bottleneck_stage_analytic']}, simulated {rep['bottleneck_stage_sim']}")


if __name__ == "__main__":
    main()
