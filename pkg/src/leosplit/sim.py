"""Discrete-event simulation of the satellite pipeline.

Each compute satellite owns one compute unit and one outbound link. A stage
starts computing a batch once that batch has fully arrived and its previous
batch is done; it starts transmitting once the compute is done and the link
is free. The sensing satellite streams raw batches back to back over the
uplink, and the last stage's downlink delivers results to ground.

The simulator is an independent check on the closed-form model: it never looks
at the overlap formula, only at per-stage service times.
"""

from __future__ import annotations

import csv
import heapq
import io
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .delay import Plan, evaluate_plan, stage_times
from .scenario import ScenarioSpec

COMPUTE_DONE = 0
TRANSFER_DONE = 1


@dataclass(frozen=True, order=True)
class Event:
    time: float
    stage: int  # 0 is the uplink from the sensing satellite
    batch: int
    kind: int


@dataclass
class SimTrace:
    uplink_start: np.ndarray  # (B,)
    uplink_end: np.ndarray  # (B,)
    start_compute: np.ndarray  # (B, K)
    end_compute: np.ndarray
    start_tx: np.ndarray
    end_tx: np.ndarray
    total: float
    stage_utilization: tuple[float, ...]
    link_utilization: tuple[float, ...]
    analytic_total: Optional[float] = None

    @property
    def num_batches(self) -> int:
        return self.start_compute.shape[0]

    @property
    def num_stages(self) -> int:
        return self.start_compute.shape[1]

    @property
    def bottleneck_stage(self) -> int:
        """1-based stage whose compute unit or outbound link is busiest."""
        busy = np.maximum(self.stage_utilization, self.link_utilization)
        return int(np.argmax(busy)) + 1

    def arrival(self, batch: int, stage: int) -> float:
        """Time batch ``batch`` is fully received at 0-based ``stage``."""
        return float(self.uplink_end[batch] if stage == 0 else self.end_tx[batch, stage - 1])

    def summary(self) -> str:
        lines = [f"simulated total: {self.total!r} s"]
        if self.analytic_total is not None:
            diff = self.total - self.analytic_total
            lines.append(f"analytic total:  {self.analytic_total!r} s")
            if diff == 0:
                lines.append("discrepancy: none")
            else:
                lines.append(f"discrepancy: {diff!r} s ({diff / self.analytic_total:+.3e} relative)")
        lines.append("compute utilization: " + ", ".join(f"{u:.4f}" for u in self.stage_utilization))
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["batch", "stage", "start_compute_s", "end_compute_s", "start_tx_s", "end_tx_s"])
        for t in range(self.num_batches):
            for k in range(self.num_stages):
                wr.writerow(
                    [t, k + 1]
                    + [
                        repr(float(a[t, k]))
                        for a in (self.start_compute, self.end_compute, self.start_tx, self.end_tx)
                    ]
                )
        return buf.getvalue()


def simulate_times(t0: float, comps, comms, num_batches: int, buffer_size: Optional[int] = None) -> SimTrace:
    """Run the event loop on explicit service times.

    ``comms[k]`` is stage k's outbound transfer time (the last one is the
    downlink). ``buffer_size`` bounds how many received-or-arriving batches may
    wait at a stage input; ``None`` means unbounded.
    """
    K = len(comps)
    B = int(num_batches)
    if len(comms) != K or K < 1:
        raise ValueError("need one compute and one outbound transfer time per stage")
    if B < 1:
        raise ValueError(f"num_batches must be >= 1, got {B}")
    if buffer_size is not None and buffer_size < 1:
        raise ValueError(f"buffer_size must be >= 1, got {buffer_size}")
    durations_tx = [float(t0)] + [float(m) for m in comms]  # link j leaves stage j
    durations_cp = [float(c) for c in comps]

    nan = np.full((B, K), np.nan)
    up_s, up_e = np.full(B, np.nan), np.full(B, np.nan)
    sc, ec, st, et = nan.copy(), nan.copy(), nan.copy(), nan.copy()

    # stage j's outbox holds batches computed but not yet sent (stage 0 = sensing)
    outbox = [deque() for _ in range(K + 1)]
    outbox[0].extend(range(B))
    inbox = [deque() for _ in range(K)]  # received, waiting to compute
    incoming = [0] * K  # transfers in flight towards stage k
    compute_busy = [False] * K
    link_busy = [False] * (K + 1)
    heap: list[Event] = []

    def room(k: int) -> bool:
        return buffer_size is None or len(inbox[k]) + incoming[k] < buffer_size

    def dispatch(now: float) -> None:
        progress = True
        while progress:
            progress = False
            for j in range(K + 1):
                if not link_busy[j] and outbox[j] and (j == K or room(j)):
                    b = outbox[j].popleft()
                    link_busy[j] = True
                    if j < K:
                        incoming[j] += 1
                    if j == 0:
                        up_s[b] = now
                    else:
                        st[b, j - 1] = now
                    heapq.heappush(heap, Event(now + durations_tx[j], j, b, TRANSFER_DONE))
                    progress = True
            for k in range(K):
                if not compute_busy[k] and inbox[k]:
                    b = inbox[k].popleft()
                    compute_busy[k] = True
                    sc[b, k] = now
                    heapq.heappush(heap, Event(now + durations_cp[k], k + 1, b, COMPUTE_DONE))
                    progress = True

    dispatch(0.0)
    while heap:
        ev = heapq.heappop(heap)
        if ev.kind == COMPUTE_DONE:
            k = ev.stage - 1
            compute_busy[k] = False
            ec[ev.batch, k] = ev.time
            outbox[k + 1].append(ev.batch)
        else:
            j = ev.stage
            link_busy[j] = False
            if j == 0:
                up_e[ev.batch] = ev.time
            else:
                et[ev.batch, j - 1] = ev.time
            if j < K:
                incoming[j] -= 1
                inbox[j].append(ev.batch)
        dispatch(ev.time)

    total = float(np.max(et[:, K - 1]))
    if total > 0:
        util = tuple(float(np.sum(ec[:, k] - sc[:, k]) / total) for k in range(K))
        link = tuple(float(np.sum(et[:, k] - st[:, k]) / total) for k in range(K))
    else:
        util = link = (0.0,) * K
    return SimTrace(up_s, up_e, sc, ec, st, et, total, util, link)


def simulate(scn: ScenarioSpec, plan: Plan, buffer_size: Optional[int] = None) -> SimTrace:
    t0, comps, comms = stage_times(scn, plan)
    trace = simulate_times(t0, comps, comms, scn.workload.num_batches, buffer_size)
    trace.analytic_total = evaluate_plan(scn, plan).total
    return trace


def compare(scn: ScenarioSpec, plan: Plan, buffer_size: Optional[int] = None) -> dict:
    bd = evaluate_plan(scn, plan)
    trace = simulate(scn, plan, buffer_size)
    diff = abs(trace.total - bd.total) / bd.total if bd.total > 0 else abs(trace.total - bd.total)
    return {
        "analytic_total": bd.total,
        "sim_total": trace.total,
        "rel_diff": diff,
        "flagged": diff > 1e-9,
        "bottleneck_stage_analytic": bd.bottleneck_stage,
        "bottleneck_stage_sim": trace.bottleneck_stage,
    }


def trace_violations(trace: SimTrace, comps, comms, t0: float, exact_service: bool = True) -> list[str]:
    """Check causality, link exclusivity and (for unbounded buffers) work conservation.

    Returns human-readable violations; an empty list means the trace is sound.
    """
    out = []
    B, K = trace.num_batches, trace.num_stages
    for t in range(B):
        if t and trace.uplink_start[t] < trace.uplink_end[t - 1]:
            out.append(f"uplink carries batches {t - 1} and {t} at once")
        for k in range(K):
            arr = trace.arrival(t, k)
            sc, ec = trace.start_compute[t, k], trace.end_compute[t, k]
            st, et = trace.start_tx[t, k], trace.end_tx[t, k]
            if sc < arr:
                out.append(f"stage {k + 1} starts batch {t} before it arrives")
            if t and sc < trace.end_compute[t - 1, k]:
                out.append(f"stage {k + 1} computes batches {t - 1} and {t} at once")
            if st < ec:
                out.append(f"stage {k + 1} sends batch {t} before computing it")
            if t and st < trace.end_tx[t - 1, k]:
                out.append(f"link after stage {k + 1} carries batches {t - 1} and {t} at once")
            if exact_service:
                ready = max(arr, trace.end_compute[t - 1, k] if t else 0.0)
                if sc != ready:
                    out.append(f"stage {k + 1} idles with batch {t} ready ({sc} vs {ready})")
                free = max(ec, trace.end_tx[t - 1, k] if t else 0.0)
                if st != free:
                    out.append(f"link after stage {k + 1} idles with batch {t} ready ({st} vs {free})")
                if ec - sc != comps[k] and ec != sc + comps[k]:
                    out.append(f"stage {k + 1} compute of batch {t} has the wrong length")
                if et != st + comms[k]:
                    out.append(f"transfer of batch {t} after stage {k + 1} has the wrong length")
    return out
