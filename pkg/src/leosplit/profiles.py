"""Transformer-like layer profiles and ready-made demo scenarios.

Per-block FLOPs follow the usual dense-transformer count (``24 S D^2`` for the
projections and MLP plus ``4 S^2 D`` for attention, per sample), memory is an
equal share of the model footprint, and every block emits an ``S x D``
activation.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

from .scenario import (
    CalibrationInput,
    LayerProfile,
    LinkSpec,
    SatelliteSpec,
    ScenarioSpec,
    WorkloadSpec,
)

GB = 10**9

# (layers, hidden dim, patch size, footprint in bytes)
VIT_PRESETS = {
    "vit-b": (12, 768, 16, 2 * GB),
    "vit-l": (24, 1024, 16, 4 * GB),
    "vit-h": (32, 1280, 14, 7 * GB),
    "vit-g": (48, 1664, 14, 12 * GB),
}

# compute tiers of the 15 W / 30 W / 50 W power modes, ratio 1 : 2 : 3.33
JETSON_TIERS = {"15W": 1.5e12, "30W": 3.0e12, "50W": 5.0e12}

RESOLUTIONS = {
    "240p": (426, 240),
    "360p": (640, 360),
    "480p": (854, 480),
    "720p": (1280, 720),
    "1080p": (1920, 1080),
}

# synthetic stand-ins echoing the reported magnitudes: ~0.985 uncompressed,
# ~0.980 at the 80%-sparsity / 8-bit operating point
DEMO_ACC_POINTS = ((0.02, 0.955), (0.05, 0.975), (0.1, 0.980), (0.25, 0.983), (0.5, 0.984), (1.0, 0.985))


def transformer_layers(
    num_layers: int,
    seq_len: int,
    hidden: int,
    batch_size: int,
    total_mem_bytes: int,
) -> tuple[LayerProfile, ...]:
    per_sample = 24 * seq_len * hidden**2 + 4 * seq_len**2 * hidden
    mem = total_mem_bytes // num_layers
    return tuple(
        LayerProfile(flops=float(batch_size * per_sample), mem_bytes=mem, act_elements=seq_len * hidden)
        for _ in range(num_layers)
    )


def vit_layers(name: str, batch_size: int, image_side: int = 224) -> tuple[LayerProfile, ...]:
    num_layers, hidden, patch, mem = VIT_PRESETS[name]
    seq_len = (image_side // patch) ** 2 + 1
    return transformer_layers(num_layers, seq_len, hidden, batch_size, mem)


def chain(flops, mem_capacity: int = 8 * GB, sensing_flops: float = 1e12) -> tuple[SatelliteSpec, ...]:
    sats = [SatelliteSpec(0, sensing_flops, mem_capacity)]
    sats += [SatelliteSpec(i + 1, float(f), mem_capacity) for i, f in enumerate(flops)]
    return tuple(sats)


def table2_scenario(
    model: str = "vit-g",
    s2g_rate: float = 6e9,
    num_batches: int = 20,
    resolution: str = "1080p",
) -> ScenarioSpec:
    """Desk-scale version of the reported setup.

    One sensing satellite and four compute satellites (8 GB each, mixed power
    modes), 0.5 Gbit/s ISLs, 6 Gbit/s S2G, batches of 64 raw images that the
    model consumes after an onboard resize to 224 x 224.
    """
    w, h = RESOLUTIONS[resolution]
    batch = 64
    workload = WorkloadSpec(
        layers=vit_layers(model, batch),
        input_pixels_per_sample=w * h * 3,
        num_classes=10,
        batch_size=batch,
        num_batches=num_batches,
    )
    tiers = JETSON_TIERS
    return ScenarioSpec(
        satellites=chain([tiers["50W"], tiers["30W"], tiers["15W"], tiers["50W"]]),
        links=LinkSpec(isl_rate=0.5e9, s2g_rate=s2g_rate),
        workload=workload,
        calibration=CalibrationInput(acc_points=DEMO_ACC_POINTS, mem_base_bytes=GB // 2),
        grid_resolution=10,
        acc_min=0.98,
    )


def hetero_vitg_scenario(num_batches: int = 20, grid_resolution: int = 10) -> ScenarioSpec:
    """48 uniform blocks over five satellites with 1 : 2 : 3.33 compute tiers."""
    t = JETSON_TIERS
    scn = table2_scenario("vit-g", num_batches=num_batches)
    scn = scn.with_compute_satellites(
        [SatelliteSpec(0, f, 8 * GB) for f in (t["15W"], t["30W"], t["50W"], t["30W"], t["15W"])]
    )
    return replace(scn, grid_resolution=grid_resolution)


def with_resolution(scn: ScenarioSpec, resolution: str, reference: str = "1080p") -> ScenarioSpec:
    """Rescale raw pixels and activation sizes to another capture resolution."""
    w, h = RESOLUTIONS[resolution]
    rw, rh = RESOLUTIONS[reference]
    ratio = (w * h) / (rw * rh)
    layers = tuple(replace(lay, act_elements=max(1, round(lay.act_elements * ratio))) for lay in scn.workload.layers)
    workload = replace(scn.workload, layers=layers, input_pixels_per_sample=w * h * 3)
    return replace(scn, workload=workload)


def random_scenario(
    rng,
    max_layers: int = 12,
    max_stages: int = 4,
    max_grid: int = 4,
    num_batches: Optional[int] = None,
) -> ScenarioSpec:
    """Small heterogeneous scenario with integer-ish magnitudes, for property tests.

    Layer FLOPs, activation sizes, satellite speeds and link rates are all
    drawn independently, so split points, bottlenecks and compression choices
    vary from draw to draw. Memory is sometimes tight enough to rule out
    some splits.
    """
    K = int(rng.integers(1, max_stages + 1))
    L = int(rng.integers(K, max_layers + 1))
    N = int(rng.integers(1, max_grid + 1))
    B = int(rng.integers(1, 6)) if num_batches is None else num_batches
    layers = tuple(
        LayerProfile(
            flops=float(rng.integers(1, 20)) * 1e9,
            mem_bytes=int(rng.integers(1, 5)) * 10**6,
            act_elements=int(rng.integers(1, 50)) * 1000,
        )
        for _ in range(L)
    )
    total_mem = sum(lay.mem_bytes for lay in layers)
    tight = rng.random() < 0.3
    cap = max(lay.mem_bytes for lay in layers) + (total_mem // K if tight else total_mem)
    flops = [float(rng.integers(1, 10)) * 1e9 for _ in range(K)]
    acc = sorted(float(a) for a in rng.uniform(0.5, 1.0, 3))
    workload = WorkloadSpec(
        layers=layers,
        input_pixels_per_sample=int(rng.integers(100, 5000)),
        num_classes=int(rng.integers(2, 20)),
        batch_size=int(rng.integers(1, 8)),
        num_batches=B,
    )
    return ScenarioSpec(
        satellites=chain(flops, mem_capacity=cap),
        links=LinkSpec(isl_rate=float(rng.integers(1, 20)) * 1e6, s2g_rate=float(rng.integers(1, 20)) * 1e6),
        workload=workload,
        calibration=CalibrationInput(acc_points=((0.0, acc[0]), (0.5, acc[1]), (1.0, acc[2]))),
        grid_resolution=N,
        acc_min=float(rng.uniform(acc[0], acc[2])) if rng.random() < 0.5 else 0.0,
    )
