import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import constant_traces, forward_pose, make_manifest, make_tile
from pcvstream.model import AABB, Choice, Form, Plan, Pose, ValidationError
from pcvstream.qoe import (
    DegenerateQoE, VisibilityMatrix, WeightSet, aabb_intersects_frustum, aggregate_qoe,
    compute_visibility, compute_weights, distance_weight, frustum_planes, points_in_frustum,
    quality_weight, rotation_matrix,
)


def _two_levels(points=100):
    return [(1.0, 2.0, 1.0, points // 2), (2.0, 4.0, 2.0, points)]


def test_tile_ahead_is_visible():
    m = make_manifest([[make_tile(1, _two_levels(), center=(2.0, 0.0, 0.0))]])
    vis = compute_visibility(m, constant_traces(1, 10.0))
    assert vis.v.tolist() == [[1]]


def test_tile_behind_is_not_visible():
    m = make_manifest([[make_tile(1, _two_levels(), center=(-2.0, 0.0, 0.0))]])
    vis = compute_visibility(m, constant_traces(1, 10.0))
    assert vis.v.tolist() == [[0]]


def test_tile_beyond_far_plane_or_before_near():
    pose = Pose((0, 0, 0), (1, 0, 0, 0), 90, 90, near_m=1.0, far_m=5.0)
    planes = frustum_planes(pose)
    assert not aabb_intersects_frustum(AABB((6, -0.1, -0.1), (7, 0.1, 0.1)), planes)
    assert not aabb_intersects_frustum(AABB((0.2, -0.1, -0.1), (0.5, 0.1, 0.1)), planes)
    assert aabb_intersects_frustum(AABB((4.5, -0.1, -0.1), (5.5, 0.1, 0.1)), planes)


def test_turned_viewer_sees_side_tile():
    # 90 degrees about +Z turns the view from +X to +Y
    c = math.cos(math.pi / 4)
    pose = Pose((0, 0, 0), (c, 0, 0, c))
    assert np.allclose(rotation_matrix(pose.orientation) @ [1, 0, 0], [0, 1, 0])
    planes = frustum_planes(pose)
    assert aabb_intersects_frustum(AABB((-0.2, 2, -0.2), (0.2, 2.4, 0.2)), planes)
    assert not aabb_intersects_frustum(AABB((1.8, -0.2, -0.2), (2.2, 0.2, 0.2)), planes)


def _sample_box(rng, box, n):
    lo, hi = np.asarray(box.min), np.asarray(box.max)
    return lo + (hi - lo) * rng.random((n, 3))


def test_straddling_left_plane_matches_sampling():
    pose = forward_pose()
    planes = frustum_planes(pose)
    # left plane of a 90 degree frustum is y = x
    box = AABB((2.0, 1.8, -0.2), (2.4, 2.6, 0.2))
    rng = np.random.default_rng(0)
    inside = points_in_frustum(_sample_box(rng, box, 100_000), planes)
    assert inside.any() and not inside.all()
    assert aabb_intersects_frustum(box, planes)


def _random_quat(rng):
    q = rng.normal(size=4)
    return tuple(q / np.linalg.norm(q))


def test_culling_agrees_with_sampling_oracle():
    """Conservative test never misses a sampled overlap; clear misses stay out."""
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(300):
        pose = Pose(tuple(rng.uniform(-1, 1, 3)), _random_quat(rng),
                    float(rng.uniform(30, 120)), float(rng.uniform(30, 120)), 0.1, 8.0)
        lo = rng.uniform(-4, 4, 3)
        box = AABB(tuple(lo), tuple(lo + rng.uniform(0.05, 1.5, 3)))
        planes = frustum_planes(pose)
        frac = points_in_frustum(_sample_box(rng, box, 20_000), planes).mean()
        if frac > 1e-3:
            assert aabb_intersects_frustum(box, planes)
            checked += 1
        # a box entirely behind the near plane is never reported
        normals, offsets = planes
        corners = np.array([[x, y, z] for x in (box.min[0], box.max[0])
                            for y in (box.min[1], box.max[1]) for z in (box.min[2], box.max[2])])
        if np.any(np.all(corners @ normals.T < offsets, axis=0)):
            assert not aabb_intersects_frustum(box, planes)
    assert checked > 20


def test_distance_weight_examples():
    pose = forward_pose()
    assert distance_weight(pose, (2.0, 0.0, 0.0)) == 0.5
    assert distance_weight(pose, (0.0, 0.0, 0.0)) == 1000.0
    assert distance_weight(pose, (0.0, 1.0, 0.0)) == 1.0


def _gof_with_points(top_points):
    tiles = [make_tile(k, [(1.0, 2.0, 1.0, n // 2), (1.0, 2.0, 1.0, n)], center=(2.0 + k, 0, 0))
             for k, n in enumerate(top_points, start=1)]
    return make_manifest([tiles]).gofs[0]


def test_quality_weight_examples():
    assert quality_weight(_gof_with_points([300, 700]), [1, 1]).tolist() == \
        pytest.approx([0.3, 0.7])
    assert quality_weight(_gof_with_points([300, 700, 5]), [0, 1, 0]).tolist() == [0.0, 1.0, 0.0]
    assert quality_weight(_gof_with_points([300, 700]), [0, 0]).tolist() == [0.0, 0.0]


def _qoe_case(levels, p, qt, R=5):
    """Direct evaluation with hand-set weights on a one-GOF manifest."""
    n = len(levels)
    variants = [(1.0, 2.0, 1.0, 10 * r) for r in range(1, R + 1)]
    m = make_manifest([[make_tile(k, variants, center=(2.0 + k, 0, 0)) for k in range(1, n + 1)]])
    vis = VisibilityMatrix(np.ones((1, n), dtype=np.int8))
    weights = WeightSet(np.array([p], dtype=float), np.array([qt], dtype=float))
    plan = Plan({(1, k): Choice(Form.COMPRESSED, r) for k, r in enumerate(levels, start=1)})
    return aggregate_qoe(m, weights, vis, plan)


def test_two_tile_qoe_value():
    q = _qoe_case([2, 5], [1.0, 0.5], [0.6, 0.4])
    assert q == pytest.approx(math.log(2.2 / 4.0), abs=1e-12)
    assert q == pytest.approx(-0.59784, abs=1e-5)


def test_all_top_level_is_zero():
    assert _qoe_case([5, 5, 5], [0.3, 1.0, 0.7], [0.2, 0.5, 0.3]) == 0.0


def test_all_bottom_level_uniform_weights():
    assert _qoe_case([1] * 4, [1.0] * 4, [0.25] * 4) == pytest.approx(math.log(0.2), abs=1e-12)


def test_nothing_visible_is_degenerate():
    m = make_manifest([[make_tile(1, _two_levels(), center=(-2.0, 0, 0))]])
    traces = constant_traces(1, 10.0)
    vis = compute_visibility(m, traces)
    with pytest.raises(DegenerateQoE):
        aggregate_qoe(m, compute_weights(m, traces, vis), vis, Plan({}))


def test_plan_must_match_visible_tiles():
    m = make_manifest([[make_tile(1, _two_levels(), center=(2.0, 0, 0)),
                        make_tile(2, _two_levels(), center=(-2.0, 0, 0))]])
    traces = constant_traces(1, 10.0)
    vis = compute_visibility(m, traces)
    w = compute_weights(m, traces, vis)
    with pytest.raises(ValidationError, match="gof 1, tile 2"):
        aggregate_qoe(m, w, vis, Plan({(1, 1): Choice(Form.RAW, 1), (1, 2): Choice(Form.RAW, 1)}))
    with pytest.raises(ValidationError, match="gof 1, tile 1"):
        aggregate_qoe(m, w, vis, Plan({}))
    with pytest.raises(ValidationError, match="level 3"):
        aggregate_qoe(m, w, vis, Plan({(1, 1): Choice(Form.RAW, 3)}))


def _scene(seed, n_tiles=5, R=4):
    rng = np.random.default_rng(seed)
    tiles = []
    for k in range(1, n_tiles + 1):
        pts = np.sort(rng.integers(0, 500, size=R))
        variants = [(1.0, 2.0, 1.0, int(x)) for x in pts]
        center = (float(rng.uniform(-1, 5)), float(rng.uniform(-2, 2)), float(rng.uniform(-1, 1)))
        tiles.append(make_tile(k, variants, center=center, half=0.2))
    m = make_manifest([tiles])
    traces = constant_traces(1, 10.0)
    vis = compute_visibility(m, traces)
    return m, traces, vis, compute_weights(m, traces, vis), rng


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_weight_and_qoe_properties(seed):
    m, traces, vis, w, rng = _scene(seed)
    visible = vis.visible(1)
    qt = w.qt[0]
    if any(m.gofs[0].tiles[k - 1].top_points for k in visible):
        assert qt[[k - 1 for k in visible]].sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(qt[vis.v[0] == 0] == 0)
    assert np.all(w.p <= 1000.0)
    if not visible or w.qt[0].sum() == 0:
        return
    R = m.quality_levels
    levels = {k: int(rng.integers(1, R + 1)) for k in visible}
    forms = {k: Form.RAW if rng.random() < 0.5 else Form.COMPRESSED for k in visible}
    plan = Plan({(1, k): Choice(forms[k], levels[k]) for k in visible})
    q = aggregate_qoe(m, w, vis, plan)
    assert q <= 0.0
    # the form bit does not enter the score
    flipped = Plan({(1, k): Choice(Form.RAW if forms[k] is Form.COMPRESSED else Form.COMPRESSED,
                                   levels[k]) for k in visible})
    assert aggregate_qoe(m, w, vis, flipped) == q
    # raising one level never hurts
    k = visible[0]
    if levels[k] < R:
        up = dict(plan.choices)
        up[(1, k)] = Choice(forms[k], levels[k] + 1)
        assert aggregate_qoe(m, w, vis, Plan(up)) >= q
    # zero only when every weighted tile is at the top
    weighted = [k for k in visible if qt[k - 1] > 0]
    assert (q == 0.0) == all(levels[k] == R for k in weighted)


def test_scaling_point_counts_keeps_qoe():
    m, traces, vis, w, _ = _scene(3)
    scaled = make_manifest([[make_tile(t.tile_index,
                                       [(1.0, 2.0, 1.0, 7 * v.point_count) for v in t.variants],
                                       center=t.centroid, half=0.2)
                             for t in m.gofs[0].tiles]])
    w2 = compute_weights(scaled, traces, vis)
    assert np.allclose(w.qt, w2.qt, atol=1e-15)


def test_visibility_length_checked():
    m = make_manifest([[make_tile(1, _two_levels())]])
    with pytest.raises(ValidationError):
        compute_visibility(m, constant_traces(2, 10.0))
