"""Seeded synthetic scenes shaped like the 2x2x6, R=5, 2 s study setup."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import Pose, ScenarioTraces, VideoManifest
from .partition import CompressionModel, PointCloudFrame, synthesize_manifest
from .qoe import VisibilityMatrix, compute_visibility

# (group id, core count, bandwidth Mbps)
EXPERIMENT_GROUPS = [
    (1, 2, 54.0), (2, 2, 72.2), (3, 2, 104.0),
    (4, 4, 54.0), (5, 4, 72.2), (6, 4, 104.0),
    (7, 6, 54.0), (8, 6, 72.2), (9, 6, 104.0),
]


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 42
    gofs: int = 6
    frames_per_gof: int = 10
    fps: float = 30.0
    grid: tuple[int, int, int] = (2, 2, 6)
    height_axis: str = "Z"
    levels: int = 5
    points_per_frame: int = 66_000
    initial_buffer_s: float = 2.0
    bandwidth_mbps: float = 54.0
    viewer_distance_m: float = 2.5


def default_compression_model(levels: int = 5) -> CompressionModel:
    # kept points grow quadratically with level, so each step up costs more
    frac = tuple((r / levels) ** 2 for r in range(1, levels + 1))
    ratio = (3.0,) * levels
    # deeper levels carry more refinement layers per point to decode
    cost = tuple(1e-3 * (1.0 + 3.0 * r / (levels - 1 or 1)) for r in range(levels))
    return CompressionModel(
        ratio_per_level=ratio,
        subsample_fraction_per_level=frac,
        bits_per_point_raw=120.0,  # 3 x float32 position + 3 x uint8 color
        compute_units_per_point_per_level=cost,
    )


def _figure_points(rng: np.random.Generator, n: int) -> np.ndarray:
    """A standing, roughly human-sized figure centered on the origin's z-axis.

    Points lie on an elliptic surface whose radius varies with height (legs,
    torso, head); density is higher on the upper body.
    """
    # more points toward the head
    z = 1.8 * rng.beta(1.6, 1.0, size=n)
    theta = rng.uniform(0, 2 * math.pi, size=n)
    radius = np.where(z < 0.85, 0.14,            # legs
             np.where(z < 1.5, 0.22,             # torso
             np.where(z < 1.58, 0.07, 0.11)))    # neck, head
    legs = z < 0.85
    x = 0.7 * radius * np.cos(theta)
    y = radius * np.sin(theta) + np.where(legs, np.where(theta < math.pi, 0.12, -0.12), 0.0)
    jitter = rng.normal(scale=0.005, size=(n, 3))
    return np.column_stack([x, y, z]) + jitter


def synth_frames(cfg: SceneConfig, rng: np.random.Generator) -> list[list[PointCloudFrame]]:
    base = _figure_points(rng, cfg.points_per_frame)
    colors = rng.integers(0, 256, size=(cfg.points_per_frame, 3), dtype=np.uint8)
    out = []
    t = 0
    for _ in range(cfg.gofs):
        frames = []
        for _ in range(cfg.frames_per_gof):
            sway = 0.15 * math.sin(2 * math.pi * t / (cfg.fps * 2))
            c, s = math.cos(sway), math.sin(sway)
            rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
            pts = base @ rot.T + rng.normal(scale=0.002, size=base.shape)
            frames.append(PointCloudFrame(pts, colors))
            t += 1
        out.append(frames)
    return out


def viewer_pose(cfg: SceneConfig) -> Pose:
    """Viewer on -X looking at the figure's center along +X."""
    return Pose(position=(-cfg.viewer_distance_m, 0.0, 0.9), orientation=(1.0, 0.0, 0.0, 0.0),
                hfov_deg=90.0, vfov_deg=90.0, near_m=0.1, far_m=100.0)


def generate(cfg: SceneConfig = SceneConfig()) -> tuple[VideoManifest, ScenarioTraces]:
    rng = np.random.default_rng(cfg.seed)
    frames = synth_frames(cfg, rng)
    manifest = synthesize_manifest(
        frames, cfg.grid, cfg.height_axis, cfg.levels, default_compression_model(cfg.levels),
        cfg.fps, cfg.frames_per_gof)
    traces = ScenarioTraces(bandwidth_mbps=tuple([cfg.bandwidth_mbps] * cfg.gofs),
                            poses=tuple([viewer_pose(cfg)] * cfg.gofs))
    return manifest, traces


def with_bandwidth(traces: ScenarioTraces, bw_mbps: float) -> ScenarioTraces:
    return ScenarioTraces(bandwidth_mbps=tuple([bw_mbps] * traces.n_gofs), poses=traces.poses)


def default_cu1(manifest: VideoManifest, visibility: VisibilityMatrix | None = None,
                traces: ScenarioTraces | None = None, tau: float = 1.0,
                level: int = 3, share: float = 0.5, cores: int = 4) -> float:
    """Per-core capacity at which decoding every visible tile compressed at
    ``level`` takes ``share`` of a ``cores``-core device, averaged over GOFs."""
    if visibility is None:
        visibility = compute_visibility(manifest, traces)
    level = min(level, manifest.quality_levels)
    per_gof = [
        sum(manifest.gof(g).tiles[k - 1].variant(level).decode_compute_units
            for k in visibility.visible(g))
        for g in range(1, manifest.n_gofs + 1)
    ]
    demand = sum(per_gof) / len(per_gof)
    if demand <= 0:
        return 1.0
    return demand / (share * cores * tau)


def scene_metadata(cfg: SceneConfig, cu1: float, tau: float) -> dict:
    model = default_compression_model(cfg.levels)
    return {
        "scene": {**asdict(cfg), "grid": list(cfg.grid)},
        "compression_model": {k: list(v) if isinstance(v, tuple) else v
                              for k, v in asdict(model).items()},
        "device_defaults": {
            "cu1": cu1, "tau": tau,
            "cu1_rule": "all visible tiles compressed at level 3 use 50% of a 4-core device",
        },
        "experiment_groups": [{"group": g, "nc": nc, "bw_mbps": bw} for g, nc, bw in EXPERIMENT_GROUPS],
    }
