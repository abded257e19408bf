"""Point-cloud ingestion, n x m x h tiling and manifest synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    AABB, C_BASE, GofManifest, ParseError, PcvError, QualityVariant, TileEntry,
    ValidationError, VideoManifest, validate_manifest,
)

AXES = {"X": 0, "Y": 1, "Z": 2}
# half-width added to zero-extent cell boxes so manifest boxes stay non-degenerate
DEGENERATE_PAD_M = 5e-4


class EmptyFrame(PcvError):
    pass


class InvalidModel(ValidationError):
    pass


@dataclass(frozen=True)
class PointCloudFrame:
    positions: np.ndarray  # (N, 3) float64
    colors: np.ndarray | None = None  # (N, 3) uint8

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValidationError(f"positions must have shape (N, 3), got {pos.shape}")
        if not np.isfinite(pos).all():
            raise ValidationError("point coordinates must be finite")
        object.__setattr__(self, "positions", pos)
        if self.colors is not None:
            col = np.asarray(self.colors, dtype=np.uint8)
            if col.shape != pos.shape:
                raise ValidationError("colors must match positions in shape")
            object.__setattr__(self, "colors", col)

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class CompressionModel:
    """Parametric stand-in for a real codec, one entry per quality level."""

    ratio_per_level: tuple[float, ...]
    subsample_fraction_per_level: tuple[float, ...]
    bits_per_point_raw: float
    compute_units_per_point_per_level: tuple[float, ...]

    @property
    def levels(self) -> int:
        return len(self.ratio_per_level)

    def validate(self) -> None:
        R = self.levels
        if R < 1:
            raise InvalidModel("model needs at least one level")
        for name in ("subsample_fraction_per_level", "compute_units_per_point_per_level"):
            if len(getattr(self, name)) != R:
                raise InvalidModel(f"{name} has {len(getattr(self, name))} entries, expected {R}")
        if any(not r > 1 for r in self.ratio_per_level):
            raise InvalidModel("compression ratios must exceed 1")
        fr = self.subsample_fraction_per_level
        if any(not 0 < x <= 1 for x in fr) or fr[-1] != 1.0:
            raise InvalidModel("subsample fractions must lie in (0, 1] and end at 1")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise InvalidModel("subsample fractions must be strictly increasing")
        if not self.bits_per_point_raw > 0:
            raise InvalidModel("bits_per_point_raw must be > 0")
        if any(not c > 0 for c in self.compute_units_per_point_per_level):
            raise InvalidModel("compute units per point must be > 0")


@dataclass(frozen=True)
class Tile:
    tile_index: int
    points: np.ndarray
    aabb: AABB
    centroid: tuple[float, float, float]


# -- PLY ----------------------------------------------------------------------

def read_ply(path) -> PointCloudFrame:
    """Read an ASCII PLY file's ``vertex`` element (x, y, z and optional colors)."""
    with open(path, encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{path}: not a PLY file")
    elements: list[tuple[str, int, list[str]]] = []
    fmt = None
    i = 1
    while i < len(lines):
        tok = lines[i].split()
        i += 1
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before element")
            if tok[1] == "list":
                elements[-1][2].append("__list__:" + tok[4])
            else:
                elements[-1][2].append(tok[2])
        elif tok[0] == "end_header":
            break
    else:
        raise ParseError(f"{path}: missing end_header")
    if fmt != "ascii":
        raise ParseError(f"{path}: only ASCII PLY is supported (format {fmt})")

    body = lines[i:]
    cursor = 0
    for name, count, props in elements:
        if name != "vertex":
            cursor += count
            continue
        missing = [p for p in ("x", "y", "z") if p not in props]
        if missing:
            raise ParseError(f"{path}: vertex element lacks {missing}")
        if any(p.startswith("__list__") for p in props):
            raise ParseError(f"{path}: list properties on vertex are not supported")
        rows = body[cursor:cursor + count]
        if len(rows) != count:
            raise ParseError(f"{path}: expected {count} vertices, found {len(rows)}")
        try:
            data = np.array([r.split() for r in rows], dtype=float).reshape(count, len(props))
        except ValueError as exc:
            raise ParseError(f"{path}: bad vertex row: {exc}") from exc
        pos = data[:, [props.index("x"), props.index("y"), props.index("z")]]
        colors = None
        if all(c in props for c in ("red", "green", "blue")):
            colors = data[:, [props.index(c) for c in ("red", "green", "blue")]].astype(np.uint8)
        if count == 0:
            raise EmptyFrame(f"{path}: no vertices")
        return PointCloudFrame(pos, colors)
    raise ParseError(f"{path}: no vertex element")


def write_ply(frame: PointCloudFrame, path) -> None:
    header = ["ply", "format ascii 1.0", f"element vertex {len(frame)}",
              "property float x", "property float y", "property float z"]
    if frame.colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(header) + "\n")
        for i, p in enumerate(frame.positions):
            row = " ".join(repr(float(x)) for x in p)
            if frame.colors is not None:
                row += " " + " ".join(str(int(c)) for c in frame.colors[i])
            fh.write(row + "\n")


# -- geometry -----------------------------------------------------------------

def bounding_cuboid(frame: PointCloudFrame) -> AABB:
    """Component-wise min/max box; ``AABB.degenerate`` flags zero extent."""
    if len(frame) == 0:
        raise EmptyFrame("cannot bound an empty frame")
    lo = frame.positions.min(axis=0)
    hi = frame.positions.max(axis=0)
    return AABB(tuple(map(float, lo)), tuple(map(float, hi)))


def _axis_order(height_axis: str) -> tuple[int, int, int]:
    try:
        h = AXES[height_axis.upper()]
    except KeyError:
        raise ValidationError(f"height axis must be X, Y or Z, got {height_axis!r}") from None
    a, b = (ax for ax in range(3) if ax != h)
    return a, b, h


def cell_edges(box: AABB, grid: tuple[int, int, int], height_axis: str = "Z"):
    """Per-grid-dimension edge arrays (n+1, m+1, h+1) along the mapped world axes."""
    axes = _axis_order(height_axis)
    edges = []
    for count, ax in zip(grid, axes):
        lo, hi = box.min[ax], box.max[ax]
        e = lo + (hi - lo) * np.arange(count + 1) / count
        e[0], e[-1] = lo, hi
        edges.append(e)
    return axes, edges


def tile_index(i: int, j: int, l: int, grid) -> int:
    """1-based tile index, x-major, then y, then layer."""
    _, m, h = grid
    return (i * m + j) * h + l + 1


def partition(frame: PointCloudFrame, grid=(2, 2, 6), height_axis: str = "Z",
              bounds: AABB | None = None) -> list[Tile]:
    """Split ``frame`` into n*m*h cells of its bounding cuboid.

    Cells are half-open ``[lo, hi)`` along each axis except the last one,
    which is closed, so a point on an interior boundary lands in the
    higher-index cell. ``bounds`` overrides the cuboid (e.g. a GOF-wide box);
    points outside it are clamped into the border cells.
    """
    n, m, h = grid
    if min(grid) < 1:
        raise ValidationError(f"grid {grid} must be >= (1, 1, 1)")
    if len(frame) == 0:
        raise EmptyFrame("cannot partition an empty frame")
    box = bounds if bounds is not None else bounding_cuboid(frame)
    axes, edges = cell_edges(box, grid, height_axis)
    idx = []
    for ax, e in zip(axes, edges):
        idx.append(np.searchsorted(e[1:-1], frame.positions[:, ax], side="right"))
    flat = (idx[0] * m + idx[1]) * h + idx[2]

    tiles = []
    for i in range(n):
        for j in range(m):
            for l in range(h):
                k = tile_index(i, j, l, grid)
                pts = frame.positions[flat == k - 1]
                lo = [0.0] * 3
                hi = [0.0] * 3
                for ax, e, c in zip(axes, edges, (i, j, l)):
                    lo[ax], hi[ax] = float(e[c]), float(e[c + 1])
                cell = AABB(tuple(lo), tuple(hi))
                if len(pts):
                    centroid = tuple(float(x) for x in np.clip(pts.mean(axis=0), lo, hi))
                else:
                    centroid = cell.center
                tiles.append(Tile(k, pts, cell, centroid))
    return tiles


def _pad(box: AABB) -> AABB:
    lo, hi = list(box.min), list(box.max)
    for ax in range(3):
        if hi[ax] <= lo[ax]:
            lo[ax] -= DEGENERATE_PAD_M
            hi[ax] += DEGENERATE_PAD_M
    return AABB(tuple(lo), tuple(hi))


def _union(boxes) -> AABB:
    boxes = list(boxes)
    lo = tuple(min(b.min[a] for b in boxes) for a in range(3))
    hi = tuple(max(b.max[a] for b in boxes) for a in range(3))
    return AABB(lo, hi)


def synthesize_manifest(gof_frames, grid, height_axis: str, R: int, model: CompressionModel,
                        fps: float, f: int) -> VideoManifest:
    """Turn raw frames, grouped by GOF, into a validated manifest.

    Every GOF is tiled against the union cuboid of its frames. Per level r,
    each frame keeps ``round(fraction[r] * count)`` points of a tile; raw size
    is ``bits_per_point_raw`` per kept point, compressed size is raw divided
    by the level's ratio. Decode cost scales with kept points and is
    normalized so the cheapest non-empty tile at level 1 costs exactly 1;
    tiles with nothing kept cost the base unit.
    """
    model.validate()
    if model.levels != R:
        raise InvalidModel(f"model has {model.levels} levels, expected R={R}")
    frac = np.asarray(model.subsample_fraction_per_level, dtype=float)
    # per GOF: (tile_entries_without_cost, points per level per tile)
    staged = []
    for gi, frames in enumerate(gof_frames, start=1):
        if len(frames) != f:
            raise ValidationError(f"gof {gi}: expected {f} frames, got {len(frames)}")
        bounds = _union(bounding_cuboid(fr) for fr in frames)
        per_frame = [partition(fr, grid, height_axis, bounds=bounds) for fr in frames]
        tiles = []
        for t in range(len(per_frame[0])):
            counts = np.array([len(pf[t].points) for pf in per_frame])
            kept = np.floor(np.outer(frac, counts) + 0.5).astype(np.int64)  # (R, frames)
            pts_r = kept.sum(axis=1)
            ply = [sum(model.bits_per_point_raw * int(c) / 1e6 for c in kept[r]) for r in range(R)]
            all_pts = np.concatenate([pf[t].points for pf in per_frame])
            cell = per_frame[0][t].aabb
            if len(all_pts):
                centroid = tuple(float(x) for x in np.clip(all_pts.mean(axis=0), cell.min, cell.max))
            else:
                centroid = cell.center
            tiles.append((per_frame[0][t].tile_index, _pad(cell), centroid, pts_r, ply))
        staged.append(tiles)

    raw_cost = lambda r, n: model.compute_units_per_point_per_level[r] * int(n)
    level1 = [raw_cost(0, t[3][0]) for tiles in staged for t in tiles if t[3][0] > 0]
    norm = min(level1) if level1 else 1.0

    gofs = []
    for gi, tiles in enumerate(staged, start=1):
        entries = []
        for k, box, centroid, pts_r, ply in tiles:
            variants = []
            for r in range(R):
                cu = raw_cost(r, pts_r[r]) / norm if pts_r[-1] > 0 else C_BASE
                variants.append(QualityVariant(
                    level=r + 1,
                    compressed_size_mbits=ply[r] / model.ratio_per_level[r],
                    raw_size_mbits=ply[r],
                    decode_compute_units=max(C_BASE, cu),
                    point_count=int(pts_r[r]),
                ))
            entries.append(TileEntry(k, box, centroid, tuple(variants)))
        gofs.append(GofManifest(gof_index=gi, frame_count=f, tiles=tuple(entries)))
    manifest = VideoManifest(fps=float(fps), grid=tuple(grid), quality_levels=R, gofs=tuple(gofs))
    validate_manifest(manifest)
    return manifest
