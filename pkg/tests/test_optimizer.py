import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leosplit.delay import PlanError, evaluate_plan
from leosplit.optimizer import (
    BruteForceCapExceeded,
    SplitProblem,
    astar_split,
    baseline_plan,
    brute_force,
    compositions,
    grid_search_q,
    proportional_counts,
    solve,
    uniform_counts,
)
from leosplit.profiles import GB, JETSON_TIERS, chain, hetero_vitg_scenario, random_scenario, table2_scenario
from leosplit.scenario import (
    CalibrationInput,
    LayerProfile,
    LinkSpec,
    SatelliteSpec,
    ScenarioSpec,
    WorkloadSpec,
)


def small(flops=(1.0, 1.0), layers=4, acc=((0.0, 0.5), (1.0, 1.0)), acc_min=0.0, N=2, B=3, isl=1.0, mem=100, **kw):
    w = WorkloadSpec(
        layers=tuple(LayerProfile(1.0, 1, 1) for _ in range(layers)),
        input_pixels_per_sample=1, num_classes=1, batch_size=1, num_batches=B,
        bytes_per_element_raw=1, pixel_bits=1, logit_bits=1,
    )  # fmt: skip
    return ScenarioSpec(
        satellites=chain(flops, mem_capacity=mem),
        links=LinkSpec(isl, kw.pop("s2g", 1e9)),
        workload=w,
        calibration=CalibrationInput(acc),
        grid_resolution=N,
        acc_min=acc_min,
        **kw,
    )


def test_grid_search_prefers_compression_on_slow_link():
    # 8-bit activation over a 1 bit/s link: every q step saves seconds
    scn = small(isl=1.0)
    q, theta, cost = grid_search_q(scn, (2, 2))
    assert q == (0.0,)
    scn = small(isl=1.0, acc_min=0.75)
    q, _, _ = grid_search_q(scn, (2, 2))
    assert q == (0.5,)


def test_grid_search_ties_pick_largest_q():
    # link so fast that every q costs the same
    scn = small(isl=1e12)
    q, _, _ = grid_search_q(scn, (2, 2))
    assert q == (1.0,)


def test_grid_search_infeasible_accuracy():
    scn = small(acc_min=0.999, acc=((0.0, 0.5), (1.0, 0.99)))
    assert grid_search_q(scn, (2, 2)) is None
    res = astar_split(scn)
    assert not res.feasible and res.plan is None and math.isinf(res.objective)


def test_grid_search_matches_evaluate_plan():
    scn = table2_scenario()
    q, theta, cost = grid_search_q(scn, (12, 12, 12, 12))
    res = solve(scn, "uniform")
    assert res.plan.compression_ratios == q
    assert res.breakdown.objective == cost
    assert res.breakdown.steady == theta


def test_homogeneous_negligible_comm_gives_balanced_split():
    scn = small(flops=(1.0,) * 3, layers=9, isl=1e15, s2g=1e15)
    assert astar_split(scn).plan.layer_counts == (3, 3, 3)


def test_layer_too_big_for_memory_is_infeasible():
    scn = small(mem=1)
    assert not astar_split(scn).feasible
    assert not brute_force(scn).feasible


def test_l_equals_k_unique_partition():
    scn = small(flops=(1.0, 2.0, 3.0), layers=3)
    assert astar_split(scn).plan.layer_counts == (1, 1, 1)
    assert brute_force(scn).plan.layer_counts == (1, 1, 1)


def test_fewer_layers_than_satellites():
    with pytest.raises(PlanError):
        astar_split(small(flops=(1.0,) * 5, layers=3))


def test_brute_force_cap():
    with pytest.raises(BruteForceCapExceeded):
        brute_force(small(layers=12, flops=(1.0,) * 4, N=4), cap=10)


def test_compositions_count():
    assert len(list(compositions(7, 3))) == math.comb(6, 2)
    assert all(sum(c) == 7 and min(c) >= 1 for c in compositions(7, 3))


def test_counts_helpers():
    assert uniform_counts(10, 4) == (3, 3, 2, 2)
    assert proportional_counts(48, [1.0, 2.0, 3.0]) == (8, 16, 24)
    assert proportional_counts(5, [1.0, 100.0]) == (1, 4)
    assert proportional_counts(6, [1.0, 1.0, 1.0]) == uniform_counts(6, 3)


def test_heterogeneous_tiers_place_more_layers_on_faster_satellites():
    t = JETSON_TIERS
    scn = hetero_vitg_scenario(grid_resolution=2)
    scn = scn.with_compute_satellites(chain([t["15W"], t["30W"], t["50W"]], mem_capacity=10**13)[1:])
    scn = replace(scn, links=LinkSpec(1e15, 1e15))
    res = astar_split(scn)
    c = res.plan.layer_counts
    assert c[0] < c[1] < c[2]
    # brute force over C(47, 2) * 3^2 candidates
    assert brute_force(scn).objective == pytest.approx(res.objective, rel=1e-9)


def test_tight_memory_forces_spread():
    scn = table2_scenario()
    res = astar_split(scn)
    model = SplitProblem(scn).model
    start = 0
    for k, n in enumerate(res.plan.layer_counts):
        assert model.mem_usage(start, start + n) <= scn.compute_satellites[k].mem_capacity
        start += n


def _assert_sound(scn, res):
    plan = res.plan
    plan.validate(scn)
    p = SplitProblem(scn)
    start = 0
    for k, n in enumerate(plan.layer_counts):
        assert p.mem_ok(k, start, start + n)
        start += n
    for q in plan.compression_ratios:
        assert q in p.qgrid
        assert p.model.acc_at(q) >= scn.acc_min
    assert evaluate_plan(scn, plan) == res.breakdown


@given(st.integers(0, 2**32 - 1))
def test_astar_matches_brute_force(seed):
    scn = random_scenario(np.random.default_rng(seed))
    a, b = astar_split(scn), brute_force(scn)
    assert a.feasible == b.feasible
    if a.feasible:
        assert a.objective == pytest.approx(b.objective, rel=1e-9, abs=0)
        assert a.plan == b.plan  # same tie-breaking
        _assert_sound(scn, a)


@given(st.integers(0, 2**32 - 1))
def test_astar_never_worse_than_fixed_splits(seed):
    scn = random_scenario(np.random.default_rng(seed))
    a = astar_split(scn)
    for kind in ("uniform", "proportional"):
        r = baseline_plan(scn, kind)
        if r.feasible:
            assert a.feasible and a.objective <= r.objective


@given(st.integers(0, 2**32 - 1), st.floats(1.0, 5.0))
def test_faster_satellite_never_hurts(seed, factor):
    rng = np.random.default_rng(seed)
    scn = random_scenario(rng)
    k = int(rng.integers(scn.num_stages))
    sats = list(scn.compute_satellites)
    sats[k] = replace(sats[k], flops_per_sec=sats[k].flops_per_sec * factor)
    a, b = astar_split(scn), astar_split(scn.with_compute_satellites(sats))
    if a.feasible:
        assert b.objective <= a.objective


@given(st.integers(0, 2**32 - 1))
def test_heuristic_is_admissible(seed):
    scn = random_scenario(np.random.default_rng(seed))
    res = astar_split(scn, record=True)
    if not res.feasible:
        return
    p = SplitProblem(scn)
    for prefix, f in res.expanded:
        l, k = sum(prefix), len(prefix)
        # best objective among completions of this prefix
        rest = list(compositions(p.L - l, p.K - k)) if k < p.K else [()]
        best = math.inf
        for tail in rest:
            counts = tuple(prefix) + tuple(tail)
            start, ok = 0, True
            for j, n in enumerate(counts):
                ok = ok and p.mem_ok(j, start, start + n)
                start += n
            sol = p.grid_search(counts) if ok else None
            if sol is not None:
                best = min(best, sol[2])
        assert f <= best * (1 + 1e-12)


def test_astar_deterministic():
    scn = table2_scenario()
    a, b = astar_split(scn), astar_split(scn)
    assert a.plan == b.plan and a.expansions == b.expansions


def test_baselines_on_table2():
    scn = table2_scenario()
    a = astar_split(scn)
    single = baseline_plan(scn, "single_satellite")
    assert not single.feasible  # 12 GB model, 8 GB satellites
    for kind in ("uniform", "proportional", "ground_only"):
        r = baseline_plan(scn, kind)
        assert r.feasible and r.total > a.total
    with pytest.raises(ValueError):
        baseline_plan(scn, "magic")


def test_single_satellite_uses_fastest_host():
    scn = table2_scenario("vit-b")
    res = baseline_plan(scn, "single_satellite")
    assert res.feasible
    assert res.breakdown.extra["host_satellite"] == 1
    assert res.breakdown.per_stage_comp[0] == pytest.approx(
        sum(lay.flops for lay in scn.workload.layers) / JETSON_TIERS["50W"]
    )


def test_ground_only_composition():
    scn = table2_scenario(s2g_rate=0.2e9)
    res = baseline_plan(scn, "ground_only")
    bd = res.breakdown
    K = scn.num_stages
    assert len(bd.per_stage_comp) == K + 1
    assert bd.per_stage_comp[:K] == (0.0,) * K
    assert res.comm_bits == scn.workload.num_batches * 64 * 1920 * 1080 * 3 * 8 * (K + 1)
    assert res.total > astar_split(scn).total


def test_result_dict_shape():
    d = astar_split(table2_scenario()).to_dict()
    for key in ("layer_counts", "q", "theta", "objective", "breakdown", "expansions"):
        assert key in d
    assert sum(d["layer_counts"]) == 48


def test_equal_speeds_uniform_equals_proportional():
    scn = small(flops=(2.0,) * 4, layers=10)
    assert baseline_plan(scn, "uniform").plan == baseline_plan(scn, "proportional").plan
