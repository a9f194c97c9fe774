"""Scenario description: satellites, links, workload and optimizer knobs.

A scenario is a single JSON document. Loading validates every field and
reports problems by JSON path (``$.workload.layers[3].flops``) so a broken
config can be fixed without guessing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional, Sequence

DEFAULT_GROUND_FLOPS = 40e12


class ScenarioError(ValueError):
    """Validation failure; ``path`` is the JSON path of the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class SatelliteSpec:
    id: int
    flops_per_sec: float
    mem_capacity: int


@dataclass(frozen=True)
class LinkSpec:
    isl_rate: float
    s2g_rate: float
    # piecewise-constant (start_time, rate) segments; overrides s2g_rate
    s2g_rate_profile: tuple[tuple[float, float], ...] = ()
    start_time: float = 0.0

    def s2g_rate_at(self, t: Optional[float] = None) -> float:
        """S2G rate of the profile segment containing time ``t``."""
        if t is None:
            t = self.start_time
        rate = self.s2g_rate
        for start, seg_rate in self.s2g_rate_profile:
            if start <= t:
                rate = seg_rate
            else:
                break
        return rate


@dataclass(frozen=True)
class LayerProfile:
    flops: float
    mem_bytes: int
    act_elements: int


@dataclass(frozen=True)
class WorkloadSpec:
    layers: tuple[LayerProfile, ...]
    input_pixels_per_sample: int
    num_classes: int
    batch_size: int
    num_batches: int
    bytes_per_element_raw: int = 4
    pixel_bits: int = 8
    logit_bits: int = 32

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class CodecPoint:
    keep_fraction: float
    bits: int
    q: float
    acc: float


@dataclass(frozen=True)
class CalibrationInput:
    acc_points: tuple[tuple[float, float], ...]
    mem_base_bytes: int = 0
    # None -> use the workload's per-layer mem_bytes
    mem_per_layer_bytes: Optional[int | tuple[int, ...]] = None
    codec_points: tuple[CodecPoint, ...] = ()


@dataclass(frozen=True)
class ScenarioSpec:
    satellites: tuple[SatelliteSpec, ...]
    links: LinkSpec
    workload: WorkloadSpec
    calibration: CalibrationInput
    grid_resolution: int = 10
    acc_min: float = 0.0
    ground_flops_per_sec: float = DEFAULT_GROUND_FLOPS
    brute_force_cap: int = 10**7

    @property
    def compute_satellites(self) -> tuple[SatelliteSpec, ...]:
        return tuple(s for s in self.satellites if s.id != 0)

    @property
    def num_stages(self) -> int:
        return len(self.compute_satellites)

    def with_compute_satellites(self, sats: Sequence[SatelliteSpec]) -> "ScenarioSpec":
        """Copy with the compute chain replaced (renumbered 1..K)."""
        sensing = [s for s in self.satellites if s.id == 0]
        chain = [replace(s, id=i + 1) for i, s in enumerate(sats)]
        return replace(self, satellites=tuple(sensing + chain))


def data_sizes(w: WorkloadSpec, stage_boundary_layer: int) -> tuple[int, int, int]:
    """Bits of (input batch, activation after ``stage_boundary_layer``, output logits)."""
    if not 0 <= stage_boundary_layer < w.num_layers:
        raise IndexError(
            f"stage boundary layer {stage_boundary_layer} outside [0, {w.num_layers})"
        )
    n = w.batch_size
    input_bits = n * w.input_pixels_per_sample * w.pixel_bits
    act_bits = n * w.layers[stage_boundary_layer].act_elements * 8 * w.bytes_per_element_raw
    output_bits = n * w.num_classes * w.logit_bits
    return input_bits, act_bits, output_bits


# -- JSON (de)serialization -------------------------------------------------


def _get(obj: dict, key: str, path: str, default: Any = ...) -> Any:
    if not isinstance(obj, dict):
        raise ScenarioError(path, "expected an object")
    if key not in obj:
        if default is ...:
            raise ScenarioError(f"{path}.{key}", "missing required field")
        return default
    return obj[key]


def _real(v: Any, path: str, *, positive=False, nonneg=False, allow_inf=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(path, f"expected a number, got {v!r}")
    v = float(v)
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise ScenarioError(path, f"must be finite, got {v!r}")
    if positive and not v > 0:
        raise ScenarioError(path, f"must be > 0, got {v!r}")
    if nonneg and v < 0:
        raise ScenarioError(path, f"must be >= 0, got {v!r}")
    return v


def _int(v: Any, path: str, *, minimum: Optional[int] = None) -> int:
    if isinstance(v, bool):
        raise ScenarioError(path, f"expected an integer, got {v!r}")
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    if not isinstance(v, int):
        raise ScenarioError(path, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ScenarioError(path, f"must be >= {minimum}, got {v}")
    return v


def _list(v: Any, path: str) -> list:
    if not isinstance(v, list):
        raise ScenarioError(path, "expected an array")
    return v


def _parse_satellites(raw: Any) -> tuple[SatelliteSpec, ...]:
    sats = []
    for i, s in enumerate(_list(raw, "$.satellites")):
        p = f"$.satellites[{i}]"
        sats.append(
            SatelliteSpec(
                id=_int(_get(s, "id", p), f"{p}.id", minimum=0),
                flops_per_sec=_real(_get(s, "flops_per_sec", p), f"{p}.flops_per_sec", positive=True),
                mem_capacity=_int(_get(s, "mem_capacity", p), f"{p}.mem_capacity", minimum=1),
            )
        )
    ids = sorted(s.id for s in sats)
    if ids != list(range(len(sats))):
        raise ScenarioError("$.satellites", f"ids must be unique and contiguous from 0, got {ids}")
    if len(sats) < 2:
        raise ScenarioError("$.satellites", "need the sensing satellite (id 0) and at least one compute satellite")
    return tuple(sorted(sats, key=lambda s: s.id))


def _parse_links(raw: Any) -> LinkSpec:
    p = "$.links"
    profile = []
    for i, seg in enumerate(_list(_get(raw, "s2g_profile", p, []), f"{p}.s2g_profile")):
        sp = f"{p}.s2g_profile[{i}]"
        if not isinstance(seg, list) or len(seg) != 2:
            raise ScenarioError(sp, "expected [start_time_s, rate_bps]")
        start = _real(seg[0], f"{sp}[0]", nonneg=True)
        rate = _real(seg[1], f"{sp}[1]", positive=True, allow_inf=True)
        if profile and start <= profile[-1][0]:
            raise ScenarioError(f"{sp}[0]", "segment start times must be strictly increasing")
        profile.append((start, rate))
    return LinkSpec(
        isl_rate=_real(_get(raw, "isl_rate_bps", p), f"{p}.isl_rate_bps", positive=True, allow_inf=True),
        s2g_rate=_real(_get(raw, "s2g_rate_bps", p), f"{p}.s2g_rate_bps", positive=True, allow_inf=True),
        s2g_rate_profile=tuple(profile),
        start_time=_real(_get(raw, "start_time_s", p, 0.0), f"{p}.start_time_s", nonneg=True),
    )


def _parse_workload(raw: Any) -> WorkloadSpec:
    p = "$.workload"
    layers = []
    for i, lay in enumerate(_list(_get(raw, "layers", p), f"{p}.layers")):
        lp = f"{p}.layers[{i}]"
        layers.append(
            LayerProfile(
                flops=_real(_get(lay, "flops", lp), f"{lp}.flops", nonneg=True),
                mem_bytes=_int(_get(lay, "mem_bytes", lp), f"{lp}.mem_bytes", minimum=0),
                act_elements=_int(_get(lay, "act_elements", lp), f"{lp}.act_elements", minimum=0),
            )
        )
    if not layers:
        raise ScenarioError(f"{p}.layers", "workload needs at least one layer")
    return WorkloadSpec(
        layers=tuple(layers),
        input_pixels_per_sample=_int(_get(raw, "pixels", p), f"{p}.pixels", minimum=1),
        num_classes=_int(_get(raw, "classes", p), f"{p}.classes", minimum=1),
        batch_size=_int(_get(raw, "batch_size", p), f"{p}.batch_size", minimum=1),
        num_batches=_int(_get(raw, "num_batches", p), f"{p}.num_batches", minimum=1),
        bytes_per_element_raw=_int(_get(raw, "bytes_per_element_raw", p, 4), f"{p}.bytes_per_element_raw", minimum=1),
        pixel_bits=_int(_get(raw, "pixel_bits", p, 8), f"{p}.pixel_bits", minimum=1),
        logit_bits=_int(_get(raw, "logit_bits", p, 32), f"{p}.logit_bits", minimum=1),
    )


def _parse_calibration(raw: Any, num_layers: int) -> CalibrationInput:
    p = "$.calibration"
    points = []
    for i, pt in enumerate(_list(_get(raw, "acc_points", p), f"{p}.acc_points")):
        pp = f"{p}.acc_points[{i}]"
        if not isinstance(pt, list) or len(pt) != 2:
            raise ScenarioError(pp, "expected [q, acc]")
        q = _real(pt[0], f"{pp}[0]")
        acc = _real(pt[1], f"{pp}[1]")
        if not 0 <= q <= 1:
            raise ScenarioError(f"{pp}[0]", f"q must lie in [0, 1], got {q}")
        if not 0 <= acc <= 1:
            raise ScenarioError(f"{pp}[1]", f"accuracy must lie in [0, 1], got {acc}")
        points.append((q, acc))
    if not points:
        raise ScenarioError(f"{p}.acc_points", "need at least one calibration point")
    qs = [q for q, _ in points]
    if len(set(qs)) != len(qs):
        raise ScenarioError(f"{p}.acc_points", "q values must be distinct")

    per_layer = _get(raw, "mem_per_layer_bytes", p, None)
    if isinstance(per_layer, list):
        if len(per_layer) != num_layers:
            raise ScenarioError(f"{p}.mem_per_layer_bytes", f"expected {num_layers} entries, got {len(per_layer)}")
        per_layer = tuple(
            _int(v, f"{p}.mem_per_layer_bytes[{i}]", minimum=0) for i, v in enumerate(per_layer)
        )
    elif per_layer is not None:
        per_layer = _int(per_layer, f"{p}.mem_per_layer_bytes", minimum=0)

    codec_points = []
    for i, cp in enumerate(_list(_get(raw, "codec_points", p, []), f"{p}.codec_points")):
        cpp = f"{p}.codec_points[{i}]"
        codec_points.append(
            CodecPoint(
                keep_fraction=_real(_get(cp, "keep_fraction", cpp), f"{cpp}.keep_fraction", nonneg=True),
                bits=_int(_get(cp, "bits", cpp), f"{cpp}.bits", minimum=2),
                q=_real(_get(cp, "q", cpp), f"{cpp}.q", nonneg=True),
                acc=_real(_get(cp, "acc", cpp), f"{cpp}.acc", nonneg=True),
            )
        )
    return CalibrationInput(
        acc_points=tuple(points),
        mem_base_bytes=_int(_get(raw, "mem_base_bytes", p, 0), f"{p}.mem_base_bytes", minimum=0),
        mem_per_layer_bytes=per_layer,
        codec_points=tuple(codec_points),
    )


def scenario_from_dict(doc: Any) -> ScenarioSpec:
    if not isinstance(doc, dict):
        raise ScenarioError("$", "scenario must be a JSON object")
    satellites = _parse_satellites(_get(doc, "satellites", "$"))
    links = _parse_links(_get(doc, "links", "$"))
    workload = _parse_workload(_get(doc, "workload", "$"))
    calibration = _parse_calibration(_get(doc, "calibration", "$"), workload.num_layers)
    opt = _get(doc, "optimizer", "$", {})
    grid = _int(_get(opt, "grid_resolution", "$.optimizer", 10), "$.optimizer.grid_resolution", minimum=1)
    acc_min = _real(_get(opt, "acc_min", "$.optimizer", 0.0), "$.optimizer.acc_min")
    if not 0 <= acc_min <= 1:
        raise ScenarioError("$.optimizer.acc_min", f"must lie in [0, 1], got {acc_min}")
    cap = _int(_get(opt, "brute_force_cap", "$.optimizer", 10**7), "$.optimizer.brute_force_cap", minimum=1)
    ground = _get(doc, "ground", "$", {})
    ground_f = _real(
        _get(ground, "flops_per_sec", "$.ground", DEFAULT_GROUND_FLOPS), "$.ground.flops_per_sec", positive=True
    )
    return ScenarioSpec(
        satellites=satellites,
        links=links,
        workload=workload,
        calibration=calibration,
        grid_resolution=grid,
        acc_min=acc_min,
        ground_flops_per_sec=ground_f,
        brute_force_cap=cap,
    )


def scenario_to_dict(s: ScenarioSpec) -> dict:
    w, c = s.workload, s.calibration
    per_layer = c.mem_per_layer_bytes
    return {
        "satellites": [
            {"id": x.id, "flops_per_sec": x.flops_per_sec, "mem_capacity": x.mem_capacity} for x in s.satellites
        ],
        "ground": {"flops_per_sec": s.ground_flops_per_sec},
        "links": {
            "isl_rate_bps": s.links.isl_rate,
            "s2g_rate_bps": s.links.s2g_rate,
            "s2g_profile": [[t, r] for t, r in s.links.s2g_rate_profile],
            "start_time_s": s.links.start_time,
        },
        "workload": {
            "layers": [
                {"flops": lay.flops, "mem_bytes": lay.mem_bytes, "act_elements": lay.act_elements}
                for lay in w.layers
            ],
            "pixels": w.input_pixels_per_sample,
            "classes": w.num_classes,
            "batch_size": w.batch_size,
            "num_batches": w.num_batches,
            "bytes_per_element_raw": w.bytes_per_element_raw,
            "pixel_bits": w.pixel_bits,
            "logit_bits": w.logit_bits,
        },
        "optimizer": {
            "grid_resolution": s.grid_resolution,
            "acc_min": s.acc_min,
            "brute_force_cap": s.brute_force_cap,
        },
        "calibration": {
            "acc_points": [[q, a] for q, a in c.acc_points],
            "mem_base_bytes": c.mem_base_bytes,
            "mem_per_layer_bytes": list(per_layer) if isinstance(per_layer, tuple) else per_layer,
            "codec_points": [
                {"keep_fraction": p.keep_fraction, "bits": p.bits, "q": p.q, "acc": p.acc}
                for p in c.codec_points
            ],
        },
    }


def load_scenario(path: str | Path) -> ScenarioSpec:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"malformed JSON: {exc}") from exc
    return scenario_from_dict(doc)


def write_scenario(s: ScenarioSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")
