import numpy as np
import pytest

from pcvstream.model import (
    AABB, DeviceProfile, GofManifest, Pose, QualityVariant, ScenarioTraces, TileEntry,
    VideoManifest, validate_manifest,
)


def make_tile(k, variants, center=(2.0, 0.0, 0.0), half=0.25):
    """variants: list of (bin, ply, compute, points) per level."""
    lo = tuple(c - half for c in center)
    hi = tuple(c + half for c in center)
    return TileEntry(
        tile_index=k,
        aabb=AABB(lo, hi),
        centroid=tuple(center),
        variants=tuple(QualityVariant(r, b, p, c, n)
                       for r, (b, p, c, n) in enumerate(variants, start=1)),
    )


def make_manifest(gof_tiles, fps=30.0, f=10, grid=None):
    """gof_tiles: list (per GOF) of list of TileEntry."""
    M = len(gof_tiles[0])
    R = len(gof_tiles[0][0].variants)
    manifest = VideoManifest(
        fps=fps, grid=grid or (M, 1, 1), quality_levels=R,
        gofs=tuple(GofManifest(g, f, tuple(tiles)) for g, tiles in enumerate(gof_tiles, start=1)),
    )
    validate_manifest(manifest)
    return manifest


def forward_pose(position=(0.0, 0.0, 0.0), fov=90.0):
    return Pose(position=position, orientation=(1.0, 0.0, 0.0, 0.0),
                hfov_deg=fov, vfov_deg=fov, near_m=0.1, far_m=100.0)


def constant_traces(G, bw, pose=None):
    pose = pose or forward_pose()
    return ScenarioTraces(bandwidth_mbps=tuple([bw] * G), poses=tuple([pose] * G))


@pytest.fixture
def four_option():
    """One tile, two levels: the compressed top level is the only fit."""
    tile = make_tile(1, [(2.0, 6.0, 3.0, 100), (8.0, 24.0, 9.0, 200)])
    manifest = make_manifest([[tile]], fps=3.0, f=1)
    traces = constant_traces(1, 30.0)
    device = DeviceProfile(core_count=1, per_core_capacity=15.0, efficiency=1.0)
    return manifest, traces, device, 0.2


def random_instance(rng, max_g=3, max_slots=4, max_r=3):
    """Random small scenario: (manifest, traces, device, b) with every tile visible."""
    G = int(rng.integers(1, max_g + 1))
    R = int(rng.integers(1, max_r + 1))
    M = int(rng.integers(1, max_slots + 1))
    while G * M > max_slots and M > 1:
        M -= 1
    while G * M > max_slots:
        G -= 1
    gofs = []
    for _ in range(G):
        tiles = []
        for k in range(1, M + 1):
            pts = np.sort(rng.integers(10, 1000, size=R))
            ply = np.sort(rng.uniform(1.0, 20.0, size=R))
            ratio = rng.uniform(1.5, 8.0, size=R)
            binr = np.maximum.accumulate(ply / ratio)
            binr = np.minimum(binr, ply)
            cu = rng.uniform(1.0, 10.0, size=R)
            if rng.random() < 0.2:
                # duplicate level costs to exercise ties
                binr[:] = binr[0]
                ply[:] = ply[0]
            variants = [(float(binr[r]), float(ply[r]), float(cu[r]), int(pts[r])) for r in range(R)]
            center = (float(rng.uniform(1.0, 6.0)), float(rng.uniform(-0.5, 0.5)),
                      float(rng.uniform(-0.5, 0.5)))
            tiles.append(make_tile(k, variants, center=center, half=0.1))
        gofs.append(tiles)
    if rng.random() < 0.3:
        # identical tiles make distinct level vectors tie on the objective
        gofs = [[make_tile(k, [(v.compressed_size_mbits, v.raw_size_mbits,
                                v.decode_compute_units, v.point_count)
                               for v in gofs[0][0].variants], center=(3.0, 0.0, 0.0), half=0.1)
                 for k in range(1, M + 1)] for _ in range(G)]
    manifest = make_manifest(gofs, fps=3.0, f=1)
    bw = tuple(float(x) for x in rng.uniform(5.0, 80.0, size=G))
    traces = ScenarioTraces(bandwidth_mbps=bw, poses=tuple([forward_pose()] * G))
    device = DeviceProfile(core_count=int(rng.integers(1, 5)),
                           per_core_capacity=float(rng.uniform(2.0, 30.0)),
                           efficiency=float(rng.uniform(0.5, 1.0)))
    b = float(rng.uniform(0.05, 1.0))
    return manifest, traces, device, b
