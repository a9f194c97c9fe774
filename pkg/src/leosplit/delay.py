"""Closed-form pipeline delay model.

Every stage k computes its layer block in ``comp_k`` seconds and ships its
output in ``comm_k`` seconds (the last stage ships logits to ground). The
first batch pays the serial pass; later batches are paced by the slowest
stage once compute/receive overlap is subtracted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .scenario import ScenarioSpec, data_sizes


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Plan:
    layer_counts: tuple[int, ...]
    compression_ratios: tuple[float, ...] = ()
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "layer_counts", tuple(int(x) for x in self.layer_counts))
        object.__setattr__(self, "compression_ratios", tuple(float(q) for q in self.compression_ratios))

    def boundaries(self) -> list[tuple[int, int]]:
        """Half-open layer ranges ``[start, stop)`` per stage."""
        out, start = [], 0
        for n in self.layer_counts:
            out.append((start, start + n))
            start += n
        return out

    def validate(self, scn: ScenarioSpec) -> None:
        k = scn.num_stages
        L = scn.workload.num_layers
        if len(self.layer_counts) != k:
            raise PlanError(f"plan has {len(self.layer_counts)} stages, scenario has {k} compute satellites")
        if any(n < 1 for n in self.layer_counts):
            raise PlanError(f"every stage needs at least one layer: {self.layer_counts}")
        if sum(self.layer_counts) != L:
            raise PlanError(f"layer counts sum to {sum(self.layer_counts)}, model has {L} layers")
        if len(self.compression_ratios) != k - 1:
            raise PlanError(f"expected {k - 1} compression ratios, got {len(self.compression_ratios)}")
        if any(not 0.0 <= q <= 1.0 for q in self.compression_ratios):
            raise PlanError(f"compression ratios must lie in [0, 1]: {self.compression_ratios}")


@dataclass(frozen=True)
class DelayBreakdown:
    t0_comm: float
    per_stage_comp: tuple[float, ...]
    per_stage_comm: tuple[float, ...]
    per_stage_eff: tuple[float, ...]
    startup: float
    steady: float
    total: float
    num_batches: int = 1
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def objective(self) -> float:
        """Total delay without the uplink constant (what the optimizer minimizes)."""
        return self.startup + (self.num_batches - 1) * self.steady

    @property
    def bottleneck_stage(self) -> int:
        """1-based index of the stage attaining the steady-state delay."""
        return max(range(len(self.per_stage_eff)), key=lambda i: (self.per_stage_eff[i], -i)) + 1

    def to_dict(self) -> dict:
        return {
            "t0_comm": self.t0_comm,
            "per_stage_comp": list(self.per_stage_comp),
            "per_stage_comm": list(self.per_stage_comm),
            "per_stage_eff": list(self.per_stage_eff),
            "startup": self.startup,
            "steady": self.steady,
            "total": self.total,
            "num_batches": self.num_batches,
        }


def comp_delay(flops_assigned: float, f: float) -> float:
    if not f > 0:
        raise ValueError(f"computing capability must be positive, got {f}")
    if flops_assigned < 0:
        raise ValueError(f"negative workload {flops_assigned}")
    return flops_assigned / f


def comm_delay(bits: float, rate: float, q: float = 1.0) -> float:
    if not rate > 0:
        raise ValueError(f"link rate must be positive, got {rate}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"compression ratio must lie in [0, 1], got {q}")
    return q * bits / rate


def effective_delay(comp_k: float, comm_k: float, prev_comm: float) -> float:
    """Stage period once receiving the next batch overlaps with computing."""
    return comp_k + comm_k - min(comp_k, prev_comm)


def stage_flops(scn: ScenarioSpec, start: int, stop: int) -> float:
    return math.fsum(layer.flops for layer in scn.workload.layers[start:stop])


def stage_times(scn: ScenarioSpec, plan: Plan) -> tuple[float, list[float], list[float]]:
    """Uplink delay, per-stage compute delays and per-stage outgoing comm delays.

    Stages ``1..K-1`` ship ``q_k``-compressed activations over the ISL; stage K
    ships the uncompressed logits to ground over S2G.
    """
    plan.validate(scn)
    w = scn.workload
    r_gs = scn.links.s2g_rate_at()
    input_bits, _, output_bits = data_sizes(w, 0)
    t0 = comm_delay(input_bits, r_gs)
    comps, comms = [], []
    sats = scn.compute_satellites
    for k, (start, stop) in enumerate(plan.boundaries()):
        comps.append(comp_delay(stage_flops(scn, start, stop), sats[k].flops_per_sec))
        if k < len(sats) - 1:
            _, act_bits, _ = data_sizes(w, stop - 1)
            comms.append(comm_delay(act_bits, scn.links.isl_rate, plan.compression_ratios[k]))
        else:
            comms.append(comm_delay(output_bits, r_gs))
    return t0, comps, comms


def compose(t0: float, comps, comms, num_batches: int) -> DelayBreakdown:
    """Assemble startup, steady-state and total delay from per-stage times."""
    startup = 0.0
    effs = []
    prev = t0
    for c, m in zip(comps, comms):
        startup += c + m
        effs.append(effective_delay(c, m, prev))
        prev = m
    steady = max(effs)
    total = t0 + startup + (num_batches - 1) * steady
    return DelayBreakdown(
        t0_comm=t0,
        per_stage_comp=tuple(comps),
        per_stage_comm=tuple(comms),
        per_stage_eff=tuple(effs),
        startup=startup,
        steady=steady,
        total=total,
        num_batches=num_batches,
    )


def evaluate_plan(scn: ScenarioSpec, plan: Plan) -> DelayBreakdown:
    t0, comps, comms = stage_times(scn, plan)
    return compose(t0, comps, comms, scn.workload.num_batches)


def plan_from_dict(doc: dict) -> Plan:
    """Read a plan document (the optimizer's JSON output or a hand-written one)."""
    if not isinstance(doc, dict):
        raise PlanError("plan document must be a JSON object")
    counts = doc.get("layer_counts")
    if not isinstance(counts, list) or not counts:
        raise PlanError("$.layer_counts: expected a non-empty list of integers")
    q = doc.get("q", doc.get("compression_ratios", []))
    if not isinstance(q, list):
        raise PlanError("$.q: expected a list of ratios")
    theta = doc.get("theta") or 0.0
    return Plan(tuple(counts), tuple(q), float(theta))


def plan_to_dict(plan: Plan) -> dict:
    return {"layer_counts": list(plan.layer_counts), "q": list(plan.compression_ratios), "theta": plan.theta}
