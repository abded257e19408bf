"""Domain types shared by every stage of the pipeline.

Units: sizes in Mbits, times in seconds, decode cost in abstract compute
units (the cheapest lowest-quality tile costs 1.0), distances in meters.
GOF and tile indices are 1-based.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

C_BASE = 1.0
EPS_BUF = 1e-9


class PcvError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PcvError):
    pass


class ValidationError(PcvError):
    pass


class LengthMismatch(ValidationError):
    def __init__(self, expected: int, actual: int, what: str = "rows"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"expected {expected} {what}, got {actual}")


def _where(g=None, k=None, r=None) -> str:
    parts = []
    if g is not None:
        parts.append(f"gof {g}")
    if k is not None:
        parts.append(f"tile {k}")
    if r is not None:
        parts.append(f"level {r}")
    return ", ".join(parts)


class Form(enum.Enum):
    COMPRESSED = "compressed"
    RAW = "raw"

    @property
    def e(self) -> int:
        """The binary form indicator: 1 for compressed, 0 for raw."""
        return 1 if self is Form.COMPRESSED else 0


Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class AABB:
    min: Vec3
    max: Vec3

    @property
    def center(self) -> Vec3:
        return tuple((a + b) / 2 for a, b in zip(self.min, self.max))

    @property
    def extent(self) -> Vec3:
        return tuple(b - a for a, b in zip(self.min, self.max))

    @property
    def degenerate(self) -> bool:
        return any(b <= a for a, b in zip(self.min, self.max))

    def contains(self, p) -> bool:
        return all(lo <= x <= hi for lo, x, hi in zip(self.min, p, self.max))


@dataclass(frozen=True)
class QualityVariant:
    level: int
    compressed_size_mbits: float
    raw_size_mbits: float
    decode_compute_units: float
    point_count: int


@dataclass(frozen=True)
class TileEntry:
    tile_index: int
    aabb: AABB
    centroid: Vec3
    variants: tuple[QualityVariant, ...]

    def variant(self, level: int) -> QualityVariant:
        return self.variants[level - 1]

    @property
    def top_points(self) -> int:
        return self.variants[-1].point_count


@dataclass(frozen=True)
class GofManifest:
    gof_index: int
    frame_count: int
    tiles: tuple[TileEntry, ...]


@dataclass(frozen=True)
class VideoManifest:
    fps: float
    grid: tuple[int, int, int]
    quality_levels: int
    gofs: tuple[GofManifest, ...]

    @property
    def n_gofs(self) -> int:
        return len(self.gofs)

    @property
    def n_tiles(self) -> int:
        n, m, h = self.grid
        return n * m * h

    @property
    def gof_duration(self) -> float:
        """Ti = f / fps, identical for every GOF after validation."""
        return self.gofs[0].frame_count / self.fps

    def gof(self, g: int) -> GofManifest:
        return self.gofs[g - 1]

    def validate(self) -> "VideoManifest":
        validate_manifest(self)
        return self


@dataclass(frozen=True)
class DeviceProfile:
    core_count: int
    per_core_capacity: float
    efficiency: float = 1.0

    def __post_init__(self):
        if self.core_count < 1:
            raise ValidationError(f"core_count must be >= 1, got {self.core_count}")
        if not self.per_core_capacity > 0:
            raise ValidationError(f"per_core_capacity must be > 0, got {self.per_core_capacity}")
        if not 0 < self.efficiency <= 1:
            raise ValidationError(f"efficiency must lie in (0, 1], got {self.efficiency}")

    @property
    def capacity(self) -> float:
        """CU_NC = NC * tau * CU1, compute units per GOF duration."""
        return self.core_count * self.efficiency * self.per_core_capacity


@dataclass(frozen=True)
class Pose:
    position: Vec3
    orientation: tuple[float, float, float, float]  # (w, x, y, z)
    hfov_deg: float = 90.0
    vfov_deg: float = 90.0
    near_m: float = 0.1
    far_m: float = 100.0

    def validate(self, g=None) -> None:
        where = _where(g) + ": " if g is not None else ""
        if not all(math.isfinite(x) for x in self.position):
            raise ValidationError(f"{where}pose position not finite")
        qn = math.sqrt(sum(q * q for q in self.orientation))
        if not abs(qn - 1.0) < 1e-6:
            raise ValidationError(f"{where}orientation quaternion not unit (norm {qn:g})")
        for name, a in (("hfov", self.hfov_deg), ("vfov", self.vfov_deg)):
            if not 0 < a < 180:
                raise ValidationError(f"{where}{name} {a} outside (0, 180) degrees")
        if not 0 <= self.near_m < self.far_m:
            raise ValidationError(f"{where}near {self.near_m} must be below far {self.far_m}")


@dataclass(frozen=True)
class ScenarioTraces:
    bandwidth_mbps: tuple[float, ...]
    poses: tuple[Pose, ...]

    def __post_init__(self):
        if len(self.bandwidth_mbps) != len(self.poses):
            raise LengthMismatch(len(self.bandwidth_mbps), len(self.poses), "poses")
        for g, bw in enumerate(self.bandwidth_mbps, start=1):
            if not (bw > 0 and math.isfinite(bw)):
                raise ValidationError(f"{_where(g)}: bandwidth must be > 0, got {bw}")
        for g, pose in enumerate(self.poses, start=1):
            pose.validate(g)

    @property
    def n_gofs(self) -> int:
        return len(self.bandwidth_mbps)


@dataclass(frozen=True)
class Choice:
    form: Form
    level: int


@dataclass(frozen=True)
class Plan:
    """One (form, level) choice per visible (g, k) pair."""

    choices: dict[tuple[int, int], Choice] = field(default_factory=dict)

    def for_gof(self, g: int) -> list[tuple[int, Choice]]:
        return sorted((k, c) for (gg, k), c in self.choices.items() if gg == g)

    def __len__(self) -> int:
        return len(self.choices)


@dataclass(frozen=True)
class SimulationReport:
    ts: tuple[float, ...]
    td: tuple[float, ...]
    tu: tuple[float, ...]
    tb: tuple[float, ...]
    qoe: float
    utilization: float
    feasible: bool

    @property
    def n_gofs(self) -> int:
        return len(self.tb)


def validate_manifest(manifest: VideoManifest) -> None:
    """Raise ValidationError naming the first violated invariant and its location."""
    n, m, h = manifest.grid
    if min(n, m, h) < 1:
        raise ValidationError(f"grid {manifest.grid} must be >= (1, 1, 1)")
    if not (manifest.fps > 0 and math.isfinite(manifest.fps)):
        raise ValidationError(f"fps must be > 0, got {manifest.fps}")
    R = manifest.quality_levels
    if R < 1:
        raise ValidationError(f"R must be >= 1, got {R}")
    if not manifest.gofs:
        raise ValidationError("manifest has no GOFs")
    M = n * m * h
    ti = None
    for gi, gof in enumerate(manifest.gofs, start=1):
        g = gof.gof_index
        if g != gi:
            raise ValidationError(f"{_where(gi)}: gof index {g} out of order")
        if gof.frame_count < 1:
            raise ValidationError(f"{_where(g)}: frame count must be >= 1")
        dur = gof.frame_count / manifest.fps
        if ti is None:
            ti = dur
        elif dur != ti:
            raise ValidationError(f"{_where(g)}: duration {dur} differs from {ti}")
        if len(gof.tiles) != M:
            raise ValidationError(f"{_where(g)}: expected {M} tiles, got {len(gof.tiles)}")
        for ki, tile in enumerate(gof.tiles, start=1):
            _validate_tile(tile, g, ki, R)


def _validate_tile(tile: TileEntry, g: int, ki: int, R: int) -> None:
    k = tile.tile_index
    if k != ki:
        raise ValidationError(f"{_where(g, ki)}: tile index {k} out of order")
    lo, hi = tile.aabb.min, tile.aabb.max
    if not all(math.isfinite(x) for x in (*lo, *hi, *tile.centroid)):
        raise ValidationError(f"{_where(g, k)}: non-finite geometry")
    if not all(a < b for a, b in zip(lo, hi)):
        raise ValidationError(f"{_where(g, k)}: aabb min {lo} not below max {hi}")
    if not tile.aabb.contains(tile.centroid):
        raise ValidationError(f"{_where(g, k)}: centroid {tile.centroid} outside aabb")
    if len(tile.variants) != R:
        raise ValidationError(f"{_where(g, k)}: expected {R} variants, got {len(tile.variants)}")
    prev = None
    for ri, v in enumerate(tile.variants, start=1):
        where = _where(g, k, ri)
        if v.level != ri:
            raise ValidationError(f"{where}: level {v.level} out of order")
        for name in ("compressed_size_mbits", "raw_size_mbits", "decode_compute_units"):
            x = getattr(v, name)
            if not (math.isfinite(x) and x >= 0):
                raise ValidationError(f"{where}: {name} must be finite and >= 0, got {x}")
        if v.point_count < 0:
            raise ValidationError(f"{where}: negative point count")
        if v.compressed_size_mbits > v.raw_size_mbits:
            raise ValidationError(
                f"{where}: compressed size {v.compressed_size_mbits} exceeds raw size "
                f"{v.raw_size_mbits}")
        if v.decode_compute_units < C_BASE:
            raise ValidationError(
                f"{where}: compute units {v.decode_compute_units} below base cost {C_BASE}")
        if prev is not None:
            for name in ("point_count", "compressed_size_mbits", "raw_size_mbits"):
                if getattr(v, name) < getattr(prev, name):
                    raise ValidationError(f"{where}: {name} decreases with level")
        prev = v
