"""Accuracy-vs-compression curve and per-stage memory model."""

from __future__ import annotations

import bisect
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .scenario import CalibrationInput, LayerProfile


class CalibrationError(ValueError):
    pass


def pava(y: Sequence[float], w: Optional[Sequence[float]] = None) -> np.ndarray:
    """Least-squares non-decreasing fit of ``y`` (pool adjacent violators)."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    # blocks as (mean, weight, length)
    means: list[float] = []
    weights: list[float] = []
    lengths: list[int] = []
    for yi, wi in zip(y, w):
        means.append(yi)
        weights.append(wi)
        lengths.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, n2 = means.pop(), weights.pop(), lengths.pop()
            m1, w1, n1 = means.pop(), weights.pop(), lengths.pop()
            wt = w1 + w2
            means.append((w1 * m1 + w2 * m2) / wt)
            weights.append(wt)
            lengths.append(n1 + n2)
    return np.repeat(means, lengths)


@dataclass(frozen=True)
class CalibrationModel:
    q_knots: tuple[float, ...]
    acc_knots: tuple[float, ...]
    mem_base_bytes: int
    mem_per_layer: tuple[int, ...]

    def acc_at(self, q: float) -> float:
        """Piecewise-linear fit, clamped outside the knots.

        Arithmetic runs on the decimal values the inputs print as and is
        rounded once, so decimal-friendly inputs give exact answers (0.9825,
        not 0.98249999...). The result is monotone in ``q`` at every ulp.
        """
        q = float(q)
        if not 0.0 <= q <= 1.0:
            raise CalibrationError(f"q must lie in [0, 1], got {q}")
        qs, accs = self.q_knots, self.acc_knots
        if q <= qs[0]:
            return accs[0]
        if q >= qs[-1]:
            return accs[-1]
        j = bisect.bisect_right(qs, q) - 1
        if q == qs[j]:
            return accs[j]
        q0, q1, a0, a1 = (_dec(v) for v in (qs[j], qs[j + 1], accs[j], accs[j + 1]))
        return float(a0 + (_dec(q) - q0) * (a1 - a0) / (q1 - q0))

    def min_feasible_q(self, acc_min: float) -> Optional[float]:
        return min_feasible_q(self, acc_min)

    def mem_usage(self, start: int, stop: int) -> int:
        return mem_usage(self, start, stop)

    def to_csv(self, num: int = 101) -> str:
        lines = ["q,acc"]
        for q in np.linspace(0.0, 1.0, num):
            lines.append(f"{q!r},{self.acc_at(float(q))!r}")
        return "\n".join(lines) + "\n"


def fit(ci: CalibrationInput, layers: Sequence[LayerProfile] = ()) -> CalibrationModel:
    """Isotonic fit of the calibration sweep plus the memory model.

    Per-layer memory comes from ``ci.mem_per_layer_bytes`` when set (a scalar
    is broadcast over ``layers``), otherwise from each layer's ``mem_bytes``.
    """
    if len(ci.acc_points) < 2:
        raise CalibrationError(f"need at least 2 calibration points, got {len(ci.acc_points)}")
    pts = sorted(ci.acc_points)
    q = np.array([p[0] for p in pts])
    if np.any(np.diff(q) == 0):
        raise CalibrationError("calibration q values must be distinct")
    acc = pava([p[1] for p in pts])

    per_layer = ci.mem_per_layer_bytes
    if per_layer is None:
        mem = tuple(int(lay.mem_bytes) for lay in layers)
    elif isinstance(per_layer, int):
        mem = (per_layer,) * len(layers)
    else:
        mem = tuple(int(x) for x in per_layer)
    return CalibrationModel(
        q_knots=tuple(float(x) for x in q),
        acc_knots=tuple(float(x) for x in acc),
        mem_base_bytes=int(ci.mem_base_bytes),
        mem_per_layer=mem,
    )


def _dec(x: float) -> Fraction:
    # exact value of the shortest decimal that round-trips to x
    return Fraction(repr(float(x)))


def _bits(x: float) -> int:
    return struct.unpack("<q", struct.pack("<d", x))[0]


def _float(i: int) -> float:
    return struct.unpack("<d", struct.pack("<q", i))[0]


def acc_at(model: CalibrationModel, q: float) -> float:
    return model.acc_at(q)


def min_feasible_q(model: CalibrationModel, acc_min: float) -> Optional[float]:
    """Smallest calibrated q whose fitted accuracy reaches ``acc_min``.

    The search is limited to the calibrated span ``[q_knots[0], 1]``: compression
    more aggressive than anything measured is never reported as feasible even
    though ``acc_at`` clamps there. Returns ``None`` when even q=1 falls short.
    """
    if model.acc_at(1.0) < acc_min:
        return None
    lo = model.q_knots[0]
    if model.acc_at(lo) >= acc_min:
        return lo
    # bisect over float bit patterns (ordered like the floats for q >= 0):
    # lo fails, hi passes, and the answer is the smallest passing float
    lo_i, hi_i = _bits(lo), _bits(1.0)
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if model.acc_at(_float(mid)) >= acc_min:
            hi_i = mid
        else:
            lo_i = mid
    return _float(hi_i)


def is_q_feasible(model: CalibrationModel, q: float, acc_min: float) -> bool:
    threshold = min_feasible_q(model, acc_min)
    return threshold is not None and q >= threshold


def mem_usage(model: CalibrationModel, start: int, stop: int) -> int:
    """Bytes needed to host layers ``[start, stop)`` on one satellite."""
    if not 0 <= start <= stop <= len(model.mem_per_layer):
        raise CalibrationError(
            f"layer range [{start}, {stop}) outside a {len(model.mem_per_layer)}-layer model"
        )
    return model.mem_base_bytes + sum(model.mem_per_layer[start:stop])
