"""Field-of-view culling, tile weights and the log-ratio QoE score.

Camera convention: in the viewer's local frame +X is forward, +Y is left and
+Z is up, so the identity quaternion looks down world +X with Z up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    AABB, GofManifest, LengthMismatch, PcvError, Plan, Pose, ScenarioTraces,
    ValidationError, VideoManifest,
)

EPS_DIST = 1e-3


class DegenerateQoE(PcvError):
    """Nothing weighted is visible, so the QoE ratio is 0/0."""


@dataclass(frozen=True)
class VisibilityMatrix:
    v: np.ndarray  # (G, M) int8

    def visible(self, g: int) -> list[int]:
        """1-based indices of tiles visible in GOF ``g``."""
        return [int(k) + 1 for k in np.flatnonzero(self.v[g - 1])]

    def is_visible(self, g: int, k: int) -> bool:
        return bool(self.v[g - 1, k - 1])


@dataclass(frozen=True)
class WeightSet:
    p: np.ndarray   # (G, M) distance weights
    qt: np.ndarray  # (G, M) quality (density) weights, zero off-FoV


def rotation_matrix(q) -> np.ndarray:
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def frustum_planes(pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Six inward planes ``(normals, offsets)``; a point p is inside iff
    ``normals @ p >= offsets`` for every row."""
    th = math.tan(math.radians(pose.hfov_deg) / 2)
    tv = math.tan(math.radians(pose.vfov_deg) / 2)
    local = np.array([
        [1.0, 0.0, 0.0],   # near
        [-1.0, 0.0, 0.0],  # far
        [th, -1.0, 0.0],   # left
        [th, 1.0, 0.0],    # right
        [tv, 0.0, -1.0],   # top
        [tv, 0.0, 1.0],    # bottom
    ])
    local /= np.linalg.norm(local, axis=1, keepdims=True)
    local_off = np.array([pose.near_m, -pose.far_m, 0.0, 0.0, 0.0, 0.0])
    rot = rotation_matrix(pose.orientation)
    normals = local @ rot.T
    pos = np.asarray(pose.position, dtype=float)
    offsets = local_off + normals @ pos
    return normals, offsets


def points_in_frustum(points: np.ndarray, planes) -> np.ndarray:
    normals, offsets = planes
    return np.all(points @ normals.T >= offsets, axis=-1)


def aabb_intersects_frustum(aabb: AABB, planes) -> bool:
    """Positive-vertex test: conservative, never misses a real overlap."""
    normals, offsets = planes
    lo = np.asarray(aabb.min)
    hi = np.asarray(aabb.max)
    pv = np.where(normals >= 0, hi, lo)
    return bool(np.all(np.einsum("ij,ij->i", normals, pv) >= offsets))


def compute_visibility(manifest: VideoManifest, traces: ScenarioTraces) -> VisibilityMatrix:
    G, M = manifest.n_gofs, manifest.n_tiles
    if traces.n_gofs != G:
        raise LengthMismatch(G, traces.n_gofs, "trace rows")
    v = np.zeros((G, M), dtype=np.int8)
    for gi, (gof, pose) in enumerate(zip(manifest.gofs, traces.poses)):
        planes = frustum_planes(pose)
        for ki, tile in enumerate(gof.tiles):
            v[gi, ki] = aabb_intersects_frustum(tile.aabb, planes)
    return VisibilityMatrix(v)


def distance_weight(pose: Pose, centroid) -> float:
    d = math.dist(pose.position, centroid)
    return 1.0 / max(EPS_DIST, d)


def quality_weight(gof: GofManifest, visibility_row) -> np.ndarray:
    """Top-level point share of each visible tile within the FoV."""
    n = np.array([t.top_points for t in gof.tiles], dtype=float) * np.asarray(visibility_row)
    total = n.sum()
    if total <= 0:
        return np.zeros_like(n)
    return n / total


def compute_weights(manifest: VideoManifest, traces: ScenarioTraces,
                    visibility: VisibilityMatrix) -> WeightSet:
    G, M = manifest.n_gofs, manifest.n_tiles
    p = np.zeros((G, M))
    qt = np.zeros((G, M))
    for gi, (gof, pose) in enumerate(zip(manifest.gofs, traces.poses)):
        p[gi] = [distance_weight(pose, t.centroid) for t in gof.tiles]
        qt[gi] = quality_weight(gof, visibility.v[gi])
    return WeightSet(p, qt)


def tile_gain(p: float, qt: float, level: int) -> float:
    """QoE contribution of one visible tile at ``level``."""
    return float(p) * level * float(qt)


def check_plan(manifest: VideoManifest, visibility: VisibilityMatrix, plan: Plan) -> None:
    R = manifest.quality_levels
    expected = {(g, k) for g in range(1, manifest.n_gofs + 1) for k in visibility.visible(g)}
    got = set(plan.choices)
    if got != expected:
        extra = sorted(got - expected)
        missing = sorted(expected - got)
        if extra:
            g, k = extra[0]
            raise ValidationError(f"gof {g}, tile {k}: plan entry for a tile outside the FoV")
        g, k = missing[0]
        raise ValidationError(f"gof {g}, tile {k}: visible tile missing from plan")
    for (g, k), c in sorted(plan.choices.items()):
        if not 1 <= c.level <= R:
            raise ValidationError(f"gof {g}, tile {k}, level {c.level}: level outside [1, {R}]")


def qoe_terms(manifest: VideoManifest, weights: WeightSet, visibility: VisibilityMatrix,
              plan: Plan) -> tuple[float, float]:
    """(achieved weighted quality, its all-top-level maximum)."""
    R = manifest.quality_levels
    num = 0.0
    den = 0.0
    for g in range(1, manifest.n_gofs + 1):
        for k in visibility.visible(g):
            p, qt = weights.p[g - 1, k - 1], weights.qt[g - 1, k - 1]
            num += tile_gain(p, qt, plan.choices[(g, k)].level)
            den += tile_gain(p, qt, R)
    return num, den


def aggregate_qoe(manifest: VideoManifest, weights: WeightSet, visibility: VisibilityMatrix,
                  plan: Plan) -> float:
    check_plan(manifest, visibility, plan)
    num, den = qoe_terms(manifest, weights, visibility, plan)
    if den <= 0:
        raise DegenerateQoE("no weighted tile is visible")
    return math.log(num / den)
