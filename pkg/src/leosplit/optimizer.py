"""Joint layer-split and compression-ratio optimization.

The split problem is a path search over the DAG of nodes ``(l, k)`` ("first
``l`` layers placed on the first ``k`` satellites"). Each edge places a block
of layers on the next satellite; the compression ratios of the whole prefix
are re-optimized over a discrete grid every time an edge is taken.

``astar_split`` searches best-first with an admissible heuristic,
``brute_force`` enumerates every partition and grid vector, and
``baseline_plan`` provides the uniform / proportional / single-satellite /
ground-only reference schemes.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calibration import CalibrationModel, fit, min_feasible_q
from .delay import DelayBreakdown, Plan, PlanError, comm_delay, compose, evaluate_plan
from .scenario import ScenarioSpec, data_sizes

# h is shaved by this factor so rounding in the remaining-compute sum can never
# make it exceed the true remaining delay
_H_SLACK = 1.0 - 1e-12


class BruteForceCapExceeded(RuntimeError):
    pass


@dataclass
class OptimizerResult:
    plan: Optional[Plan]
    breakdown: Optional[DelayBreakdown]
    expansions: int
    feasible: bool
    method: str = "astar"
    comm_bits: float = 0.0
    expanded: list = field(default_factory=list, repr=False)

    @property
    def objective(self) -> float:
        return self.breakdown.objective if self.breakdown is not None else math.inf

    @property
    def total(self) -> float:
        return self.breakdown.total if self.breakdown is not None else math.inf

    def to_dict(self) -> dict:
        plan = self.plan
        return {
            "method": self.method,
            "feasible": self.feasible,
            "layer_counts": list(plan.layer_counts) if plan else None,
            "q": list(plan.compression_ratios) if plan else None,
            "theta": plan.theta if plan else None,
            "objective": self.objective if self.feasible else None,
            "total": self.total if self.feasible else None,
            "comm_bits": self.comm_bits if self.feasible else None,
            "breakdown": self.breakdown.to_dict() if self.breakdown else None,
            "expansions": self.expansions,
        }


class SplitProblem:
    """Precomputed per-scenario tables shared by every search method."""

    def __init__(self, scn: ScenarioSpec, model: Optional[CalibrationModel] = None):
        self.scn = scn
        w = scn.workload
        self.L = w.num_layers
        self.K = scn.num_stages
        self.B = w.num_batches
        if self.L < self.K:
            raise PlanError(f"{self.L} layers cannot cover {self.K} satellites")
        sats = scn.compute_satellites
        self.f = [s.flops_per_sec for s in sats]
        self.mem_cap = [s.mem_capacity for s in sats]
        self.model = model if model is not None else fit(scn.calibration, w.layers)

        flops = [lay.flops for lay in w.layers]
        self.flops = [[0.0] * (self.L + 1) for _ in range(self.L + 1)]
        for a in range(self.L + 1):
            for b in range(a, self.L + 1):
                self.flops[a][b] = math.fsum(flops[a:b])
        self.act_bits = [data_sizes(w, j)[1] for j in range(self.L)]
        input_bits, _, output_bits = data_sizes(w, 0)
        self.input_bits, self.output_bits = input_bits, output_bits
        r_gs = scn.links.s2g_rate_at()
        self.t0 = comm_delay(input_bits, r_gs)
        self.down = comm_delay(output_bits, r_gs)
        self.r_sat = scn.links.isl_rate

        n = scn.grid_resolution
        threshold = min_feasible_q(self.model, scn.acc_min)
        # descending so that the first minimizer found is the lexicographically largest
        self.qgrid = [i / n for i in range(n, -1, -1) if threshold is not None and i / n >= threshold]
        self.qcombos = np.array(list(itertools.product(self.qgrid, repeat=self.K - 1)), dtype=float)
        if self.qcombos.size == 0:
            self.qcombos = self.qcombos.reshape(len(self.qcombos), self.K - 1)
        # best remaining speed and total remaining speed after position k
        self.f_max_after = [max(self.f[k:]) if k < self.K else math.inf for k in range(self.K + 1)]
        self.f_sum_after = [math.fsum(self.f[k:]) for k in range(self.K + 1)]
        # longest inter-satellite transfer any plan can schedule
        self.m_max = max(self.qgrid, default=0.0) * max(self.act_bits) / self.r_sat

    def comp(self, k: int, start: int, stop: int) -> float:
        return self.flops[start][stop] / self.f[k]

    def mem_ok(self, k: int, start: int, stop: int) -> bool:
        return self.model.mem_usage(start, stop) <= self.mem_cap[k]

    def heuristic(self, l: int, k: int) -> float:
        """Lower bound on the startup still to come: remaining work at the best speed."""
        if l == self.L:
            return 0.0
        return self.flops[l][self.L] / self.f_max_after[k] * _H_SLACK

    def theta_bound(self, l: int, k: int) -> float:
        """Lower bound on the final bottleneck once stages ``k..K-1`` take layers ``l..L-1``.

        Some remaining stage computes for at least ``c = remaining / sum(f)``.
        Its overlap credit is capped by its incoming transfer, and that transfer
        already counts towards the upstream stage's effective delay, so the
        bottleneck is at least ``max(c/2, c - m_max)``. The first stage's
        incoming transfer is the uplink, which is not part of the bottleneck.
        """
        if l == self.L:
            return 0.0
        c = self.flops[l][self.L] / self.f_sum_after[k]
        bound = max(c / 2, c - self.m_max)
        if k == 0:
            first = c - self.t0
            bound = first if self.K == 1 else min(bound, first)
        return max(bound, 0.0) * _H_SLACK

    def f_value(self, state: dict, l: int, k: int) -> float:
        lb = self.theta_bound(l, k)
        best = min(
            float(np.min(lin + (self.B - 1) * np.maximum(theta, lb))) for _, lin, theta in state.values()
        )
        return best + self.heuristic(l, k)

    # -- full grid enumeration ------------------------------------------------

    def grid_costs(self, counts) -> tuple[np.ndarray, np.ndarray]:
        """(startup, theta) for every q combination of a complete partition."""
        lin = np.zeros(len(self.qcombos))
        theta = np.full(len(self.qcombos), -math.inf)
        prev = self.t0
        start = 0
        for k, n in enumerate(counts):
            stop = start + n
            c = self.comp(k, start, stop)
            if k < self.K - 1:
                m = self.qcombos[:, k] * self.act_bits[stop - 1] / self.r_sat
            else:
                m = self.down
            lin = lin + (c + m)
            theta = np.maximum(theta, (c + m) - np.minimum(c, prev))
            prev = m
            start = stop
        return lin, theta

    def grid_search(self, counts):
        if len(self.qcombos) == 0:
            return None
        lin, theta = self.grid_costs(counts)
        cost = lin + (self.B - 1) * theta
        i = int(np.argmin(cost))
        return tuple(float(q) for q in self.qcombos[i]), float(theta[i]), float(cost[i])

    # -- incremental prefix states used by the A* search ----------------------

    def root_state(self) -> dict:
        # key: index into qgrid of the last stage's outgoing ratio (None at root/goal)
        return {None: (self.t0, np.zeros(1), np.full(1, -math.inf))}

    def extend(self, state: dict, k: int, start: int, stop: int) -> dict:
        """Append stage ``k`` (layers ``[start, stop)``) and keep Pareto-optimal prefixes.

        Future stages only see the last outgoing comm delay, so for each value of
        the newest q only prefixes not dominated in (startup, theta) matter.
        """
        c = self.comp(k, start, stop)
        if k < self.K - 1:
            keys = list(range(len(self.qgrid)))
            m = np.array(self.qgrid) * self.act_bits[stop - 1] / self.r_sat
        else:
            keys = [None]
            m = np.array([self.down])
        parts = list(state.values())
        prev = np.concatenate([np.full(len(p[1]), p[0]) for p in parts])
        lin = np.concatenate([p[1] for p in parts])
        theta = np.concatenate([p[2] for p in parts])
        new_lin = lin[:, None] + (c + m)[None, :]
        new_theta = np.maximum(theta[:, None], (c + m)[None, :] - np.minimum(c, prev)[:, None])
        out = {}
        for j, key in enumerate(keys):
            out[key] = (float(m[j]), *_pareto(new_lin[:, j], new_theta[:, j]))
        return out

    def state_cost(self, state: dict) -> float:
        return min(float(np.min(lin + (self.B - 1) * theta)) for _, lin, theta in state.values())

    # -- result assembly --------------------------------------------------------

    def make_result(self, counts, method: str, expansions: int) -> OptimizerResult:
        q, theta, _ = self.grid_search(counts)
        plan = Plan(tuple(counts), q, theta)
        bd = evaluate_plan(self.scn, plan)
        return OptimizerResult(plan, bd, expansions, True, method, self.comm_bits(plan))

    def comm_bits(self, plan: Plan) -> float:
        bits = float(self.input_bits + self.output_bits)
        stop = 0
        for k, n in enumerate(plan.layer_counts[:-1]):
            stop += n
            bits += plan.compression_ratios[k] * self.act_bits[stop - 1]
        return self.B * bits


def _pareto(lin: np.ndarray, theta: np.ndarray):
    order = np.lexsort((theta, lin))
    lin, theta = lin[order], theta[order]
    best_before = np.concatenate(([math.inf], np.minimum.accumulate(theta)[:-1]))
    keep = theta < best_before
    return lin[keep], theta[keep]


def _tie_key(q, counts):
    # prefer larger q vectors, then earlier split points
    return tuple(-x for x in q), tuple(counts)


def grid_search_q(scn: ScenarioSpec, layer_counts, problem: Optional[SplitProblem] = None):
    """Best grid compression vector for a fixed split.

    Returns ``(q, theta, cost)`` or ``None`` if no grid point meets the
    accuracy floor. ``cost`` is startup plus ``(B-1)`` times the bottleneck.
    """
    problem = problem or SplitProblem(scn)
    Plan(tuple(layer_counts), (1.0,) * (problem.K - 1)).validate(scn)
    return problem.grid_search(tuple(layer_counts))


def astar_split(scn: ScenarioSpec, record: bool = False) -> OptimizerResult:
    """Best-first search for the delay-optimal split and compression ratios.

    With ``record=True`` the result's ``expanded`` list holds ``(counts, f)``
    for every popped node.
    """
    p = SplitProblem(scn)
    L, K = p.L, p.K
    if len(p.qcombos) == 0:
        return OptimizerResult(None, None, 0, False, "astar")

    seq = itertools.count()
    root = p.root_state()
    heap = [(p.f_value(root, 0, 0), next(seq), (), root)]
    expansions = 0
    best_f = math.inf
    goals: list[tuple[int, ...]] = []
    expanded = []

    while heap:
        f, _, counts, state = heapq.heappop(heap)
        if f > best_f:
            break
        expansions += 1
        if record:
            expanded.append((counts, f))
        k = len(counts)
        if k == K:
            if f < best_f:
                best_f, goals = f, [counts]
            else:
                goals.append(counts)
            continue
        l = sum(counts)
        last = L - (K - k - 1)
        for stop in range(l + 1, last + 1):
            if k == K - 1 and stop != L:
                continue
            if not p.mem_ok(k, l, stop):
                continue
            child = p.extend(state, k, l, stop)
            heapq.heappush(heap, (p.f_value(child, stop, k + 1), next(seq), counts + (stop - l,), child))

    if not goals:
        return OptimizerResult(None, None, expansions, False, "astar", expanded=expanded)
    candidates = [(counts, p.grid_search(counts)) for counts in goals]
    counts, _ = min(candidates, key=lambda c: _tie_key(c[1][0], c[0]))
    res = p.make_result(counts, "astar", expansions)
    res.expanded = expanded
    return res


def compositions(L: int, K: int):
    """All ways to write L as an ordered sum of K positive integers, lexicographic."""
    for cuts in itertools.combinations(range(1, L), K - 1):
        bounds = (0,) + cuts + (L,)
        yield tuple(b - a for a, b in zip(bounds, bounds[1:]))


def brute_force(scn: ScenarioSpec, cap: Optional[int] = None) -> OptimizerResult:
    """Exhaustive optimum over every contiguous split and every grid vector."""
    p = SplitProblem(scn)
    cap = scn.brute_force_cap if cap is None else cap
    size = math.comb(p.L - 1, p.K - 1) * (scn.grid_resolution + 1) ** (p.K - 1)
    if size > cap:
        raise BruteForceCapExceeded(f"{size} candidates exceed the brute-force cap of {cap}")
    best = None
    evaluated = 0
    for counts in compositions(p.L, p.K):
        start, ok = 0, True
        for k, n in enumerate(counts):
            if not p.mem_ok(k, start, start + n):
                ok = False
                break
            start += n
        if not ok:
            continue
        sol = p.grid_search(counts)
        evaluated += 1
        if sol is None:
            continue
        key = (sol[2],) + _tie_key(sol[0], counts)
        if best is None or key < best[0]:
            best = (key, counts)
    if best is None:
        return OptimizerResult(None, None, evaluated, False, "brute_force")
    return p.make_result(best[1], "brute_force", evaluated)


# -- baselines ----------------------------------------------------------------


def uniform_counts(L: int, K: int) -> tuple[int, ...]:
    base, rem = divmod(L, K)
    if base == 0:
        raise PlanError(f"{L} layers cannot cover {K} satellites")
    return tuple(base + (1 if i < rem else 0) for i in range(K))


def proportional_counts(L: int, f) -> tuple[int, ...]:
    """Layers proportional to compute speed; largest-remainder rounding, each >= 1."""
    K = len(f)
    if L < K:
        raise PlanError(f"{L} layers cannot cover {K} satellites")
    total = math.fsum(f)
    share = [L * x / total for x in f]
    counts = [max(1, math.floor(s)) for s in share]
    while sum(counts) < L:
        i = max(range(K), key=lambda i: (share[i] - counts[i], -i))
        counts[i] += 1
    while sum(counts) > L:
        i = min((i for i in range(K) if counts[i] > 1), key=lambda i: (share[i] - counts[i], i))
        counts[i] -= 1
    return tuple(counts)


def _fixed_split(scn: ScenarioSpec, counts, method: str) -> OptimizerResult:
    p = SplitProblem(scn)
    start = 0
    for k, n in enumerate(counts):
        if not p.mem_ok(k, start, start + n):
            return OptimizerResult(None, None, 0, False, method)
        start += n
    if p.grid_search(counts) is None:
        return OptimizerResult(None, None, 0, False, method)
    return p.make_result(counts, method, 0)


def baseline_plan(scn: ScenarioSpec, kind: str) -> OptimizerResult:
    L, K = scn.workload.num_layers, scn.num_stages
    if kind == "uniform":
        return _fixed_split(scn, uniform_counts(L, K), kind)
    if kind == "proportional":
        return _fixed_split(scn, proportional_counts(L, [s.flops_per_sec for s in scn.compute_satellites]), kind)
    if kind == "single_satellite":
        return _single_satellite(scn)
    if kind == "ground_only":
        return _ground_only(scn)
    raise ValueError(f"unknown baseline {kind!r}")


def _single_satellite(scn: ScenarioSpec) -> OptimizerResult:
    model = fit(scn.calibration, scn.workload.layers)
    L = scn.workload.num_layers
    fits = [s for s in scn.compute_satellites if model.mem_usage(0, L) <= s.mem_capacity]
    if not fits:
        return OptimizerResult(None, None, 0, False, "single_satellite")
    host = max(fits, key=lambda s: (s.flops_per_sec, -s.id))
    sub = scn.with_compute_satellites([host])
    plan = Plan((L,), ())
    bd = evaluate_plan(sub, plan)
    bd.extra["host_satellite"] = host.id
    input_bits, _, output_bits = data_sizes(scn.workload, 0)
    return OptimizerResult(
        plan, bd, 0, True, "single_satellite", scn.workload.num_batches * float(input_bits + output_bits)
    )


def _ground_only(scn: ScenarioSpec) -> OptimizerResult:
    """Raw images relayed down the chain and classified on the ground.

    Relay satellites do no computing; each forwards the raw batch (ISL hops,
    then the S2G downlink), and the ground server is the final stage.
    """
    w = scn.workload
    K = scn.num_stages
    input_bits, _, _ = data_sizes(w, 0)
    r_gs = scn.links.s2g_rate_at()
    t0 = comm_delay(input_bits, r_gs)
    comps = [0.0] * K + [math.fsum(lay.flops for lay in w.layers) / scn.ground_flops_per_sec]
    comms = [comm_delay(input_bits, scn.links.isl_rate)] * (K - 1) + [comm_delay(input_bits, r_gs), 0.0]
    bd = compose(t0, comps, comms, w.num_batches)
    return OptimizerResult(None, bd, 0, True, "ground_only", w.num_batches * float(input_bits) * (K + 1))


METHODS = ("astar", "brute_force", "uniform", "proportional", "single_satellite", "ground_only")


def solve(scn: ScenarioSpec, method: str = "astar") -> OptimizerResult:
    if method == "astar":
        return astar_split(scn)
    if method == "brute_force":
        return brute_force(scn)
    return baseline_plan(scn, method)
