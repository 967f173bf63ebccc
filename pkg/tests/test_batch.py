import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rgg.batch import (
    BatchEngine,
    LabelBuffer,
    batch_over,
    batch_sat,
    batch_segment_sphere,
    batch_under,
    batch_update,
    serialize,
    set_pose,
    update_transforms,
)
from rgg.bench import engines_agree, initial_obstacles, move_script, relative_move, with_overrides
from rgg.geometry import Aabb, Obb, Transform, _sat_separated, _segment_point_distance
from rgg.grid import grid_build, grid_candidates
from rgg.roadmap import ExactOracle, GeometrySet, Roadmap, Scene, ValidityState
from rgg.sequential import RggEngine, narrow_over_test, narrow_under_test
from rgg.swept import DEFAULT_K, ObstacleModel, RobotModel

from .conftest import random_rotation

ENV = Aabb((-10, -10, -10), (10, 10, 10))
seeds = st.integers(0, 2**32 - 1)


def random_obstacle(r) -> ObstacleModel:
    o = ObstacleModel(r.uniform(0.3, 4, size=3))
    return o.placed(Transform(random_rotation(r), r.uniform(-8, 8, size=3)))


# ------------------------------------------------------------ layout


def test_single_translation_edge_layout():
    m = RobotModel.free_box()
    r = Roadmap(np.array([[0.0] * 6, [3, 1, 0, 0, 0, 0]]), [[0, 1]])
    g = GeometrySet.build(m, r)
    lay = serialize(g, {})
    mask = lay.seg_mask[2, 0, 0]
    assert mask[0] and not mask[1:].any()
    assert len(mask) == DEFAULT_K
    np.testing.assert_array_equal(lay.E_minus[2, 0, 0, 0], g[2].under[0][0].segments()[0])


def test_layout_roundtrips_source(small_prepared):
    p = small_prepared
    obstacles = initial_obstacles(p.scenario)
    lay = serialize(p.geoms, obstacles)
    s = lay.shape_summary
    N, B = p.roadmap.n_components, p.robot.n_bodies
    assert lay.E_plus.shape == (N, B, 8, 3)
    assert lay.E_minus.shape == (N, B, s["S"], s["K"], 2, 3)
    assert lay.O_plus.shape == (len(obstacles), 8, 3)
    assert lay.O_minus_r.shape == (len(obstacles),)
    R = lay.spill_rows
    for n, geo in enumerate(p.geoms.items):
        assert lay.E_plus[n].tobytes() == geo.over_corners.tobytes()
        for b, sl, spline in geo.splines():
            segs = spline.segments()
            got = lay.E_minus[n, b, sl * R:(sl + 1) * R].reshape(-1, 2, 3)
            mask = lay.seg_mask[n, b, sl * R:(sl + 1) * R].reshape(-1)
            assert got[:len(segs)].tobytes() == segs.tobytes()
            assert mask[:len(segs)].all() and not mask[len(segs):].any()
    for j, o in enumerate(obstacles.values()):
        np.testing.assert_array_equal(lay.O_plus[j], o.outer_corners)
        assert lay.O_minus_r[j] == o.radius
        # corner rows come from a consistent box
        np.testing.assert_allclose(Obb.from_corners(lay.O_plus[j]).corners(), lay.O_plus[j], atol=1e-6)


def test_long_splines_spill_over_rows():
    # a half turn in yaw bends the outer sphere centers into an arc of several segments
    m = RobotModel.free_box((1.0, 0.1, 0.1))
    r = Roadmap(np.array([[0.0] * 6, [0, 0, 0, 0, 0, 3.0]]), [[0, 1]])
    g = GeometrySet.build(m, r, K=None)
    g.K = 2  # uncapped splines, packed two segments per slot
    lay = serialize(g, {})
    longest = max(s.n_segments for geo in g.items for _, _, s in geo.splines())
    assert longest > 2
    assert lay.spill_rows >= -(-longest // 2)
    assert lay.seg_mask.sum() == sum(s.n_segments for geo in g.items for _, _, s in geo.splines())


# ------------------------------------------------------------ transforms


def _layout_with(o):
    m = RobotModel.free_box()
    r = Roadmap(np.zeros((1, 6)), np.zeros((0, 2)))
    return serialize(GeometrySet.build(m, r), {"o": o})


def test_identity_move_keeps_rows():
    o = ObstacleModel((2, 1, 1)).placed(Transform.from_euler_xyz(0.1, 0.2, 0.3, (1, 2, 3)))
    lay = _layout_with(o)
    before, centers, radius = lay.O_plus.copy(), lay.O_minus_c.copy(), lay.O_minus_r.copy()
    update_transforms(lay, [("o", Transform())])
    np.testing.assert_allclose(lay.O_plus, before, atol=1e-12, rtol=0)
    np.testing.assert_allclose(lay.O_minus_c, centers, atol=1e-12, rtol=0)
    np.testing.assert_array_equal(lay.O_minus_r, radius)


def test_translation_shifts_corners():
    lay = _layout_with(ObstacleModel((1, 1, 1)))
    before = lay.O_plus.copy()
    update_transforms(lay, [("o", Transform.from_translation((1, 0, 0)))])
    np.testing.assert_allclose(lay.O_plus - before, np.tile([1.0, 0, 0], (1, 8, 1)), atol=1e-12)


def test_many_moves_no_drift(rng):
    o = ObstacleModel((2, 1, 0.5))
    lay = _layout_with(o)
    total = Transform()
    for _ in range(1000):
        t = Transform(random_rotation(rng), rng.uniform(-1, 1, size=3))
        update_transforms(lay, [("o", t)])
        total = t.compose(total)
    want = o.placed(total)
    np.testing.assert_allclose(lay.O_plus[0], want.outer_corners, atol=1e-7)
    np.testing.assert_allclose(lay.O_minus_c[0], want.inner_centers, atol=1e-7)


def test_unknown_obstacle_id():
    lay = _layout_with(ObstacleModel((1, 1, 1)))
    with pytest.raises(KeyError):
        update_transforms(lay, [("nope", Transform())])


# ------------------------------------------------------------ predicates


def test_batch_sat_bit_equal_scalar(rng):
    n = 10_000
    ca, cb = rng.uniform(-3, 3, size=(2, n, 3))
    A = np.array([random_rotation(rng) for _ in range(n)])
    B = np.array([random_rotation(rng) for _ in range(n)])
    ha, hb = rng.uniform(0.05, 2, size=(2, n, 3))
    got = batch_sat(ca, A, ha, cb, B, hb)
    want = [not _sat_separated(ca[i].tolist(), A[i].tolist(), ha[i].tolist(), cb[i].tolist(), B[i].tolist(),
                               hb[i].tolist()) for i in range(n)]
    np.testing.assert_array_equal(got, want)
    assert 0 < got.sum() < n


def test_batch_segment_sphere_equals_definition(rng):
    a, b, c = rng.uniform(-3, 3, size=(3, 5000, 3))
    reach = rng.uniform(0, 2, size=5000)
    got = batch_segment_sphere(a, b, c, reach)
    want = [_segment_point_distance(a[i].tolist(), b[i].tolist(), c[i].tolist()) <= reach[i] for i in range(5000)]
    np.testing.assert_array_equal(got, want)


@settings(max_examples=20)
@given(seeds)
def test_batch_masks_equal_scalar(small_prepared, seed):
    p = small_prepared
    r = np.random.default_rng(seed)
    o = random_obstacle(r)
    lay = serialize(p.geoms, {"o": o})
    rows = np.arange(p.roadmap.n_components)
    over = batch_over(lay, rows, "o")
    under = batch_under(lay, rows, "o")
    for cid, geo in enumerate(p.geoms.items):
        assert over[cid] == narrow_over_test(o, geo)
        assert under[cid] == narrow_under_test(o, geo)


def test_batch_far_and_engulfing(small_prepared):
    p = small_prepared
    rows = np.arange(p.roadmap.n_components)
    far = ObstacleModel((1, 1, 1)).placed(Transform.from_translation((0, 0, 50)))
    huge = ObstacleModel((30, 30, 30))
    lay = serialize(p.geoms, {"far": far, "huge": huge})
    assert not batch_over(lay, rows, "far").any() and not batch_under(lay, rows, "far").any()
    assert batch_over(lay, rows, "huge").all() and batch_under(lay, rows, "huge").all()


def test_padding_neutrality(small_prepared, rng):
    p = small_prepared
    rows = np.arange(p.roadmap.n_components)
    obstacles = {i: random_obstacle(rng) for i in range(6)}
    lay = serialize(p.geoms, obstacles)
    before = [(batch_over(lay, rows, i), batch_under(lay, rows, i)) for i in obstacles]
    pad = ~lay.seg_mask
    assert pad.any()
    # drop garbage (including points right on the obstacles) into every masked slot
    lay.E_minus[pad] = rng.uniform(-10, 10, size=(int(pad.sum()), 2, 3))
    lay.E_minus[pad, 0] = lay.O_minus_c[0, 0]
    for i, (o, u) in zip(obstacles, before):
        np.testing.assert_array_equal(batch_over(lay, rows, i), o)
        np.testing.assert_array_equal(batch_under(lay, rows, i), u)


# ------------------------------------------------------------ grid


def _brute_members(grid, lo, hi, cell):
    idx = np.array(np.unravel_index(cell, grid.shape))
    dims = np.array(grid.shape)
    clo = grid.origin + idx * grid.cell_size
    chi = clo + grid.cell_size
    clo = np.where(idx == 0, -np.inf, clo)
    chi = np.where(idx == dims - 1, np.inf, chi)
    return set(np.flatnonzero(np.all((lo <= chi) & (hi >= clo), axis=1)).tolist())


@settings(max_examples=25)
@given(seeds, st.integers(1, 300), st.sampled_from([1, 4, 32, 1024]))
def test_grid_membership_brute_force(seed, n, cap):
    r = np.random.default_rng(seed)
    lo = r.uniform(-12, 10, size=(n, 3))
    hi = lo + r.uniform(0, 2, size=(n, 3))
    g = grid_build(lo, hi, ENV, cap)
    for cell in range(int(np.prod(g.shape))):
        members = g.members(cell).tolist()
        assert len(members) == len(set(members))
        assert set(members) == _brute_members(g, lo, hi, cell)
    nonempty = g.counts[g.counts > 0]
    small_cells = g.cell_size.max() / 2 < 2 * (hi - lo).max(axis=0)[np.argmax(g.cell_size)]
    assert nonempty.mean() <= cap or small_cells


@settings(max_examples=25)
@given(seeds, st.integers(1, 200), st.sampled_from([1, 8, 1024]))
def test_grid_candidates_superset(seed, n, cap):
    r = np.random.default_rng(seed)
    lo = r.uniform(-12, 10, size=(n, 3))
    hi = lo + r.uniform(0, 3, size=(n, 3))
    g = grid_build(lo, hi, ENV, cap)
    for _ in range(10):
        qlo = r.uniform(-14, 12, size=3)
        q = Aabb(qlo, qlo + r.uniform(0, 5, size=3))
        cand = grid_candidates(g, q)
        assert np.all(np.diff(cand) > 0)
        overlapping = np.flatnonzero(np.all((lo <= q.max) & (hi >= q.min), axis=1))
        assert set(overlapping.tolist()) <= set(cand.tolist())
        a, b = g.cell_range(q.min, q.max)
        union = set()
        for i in range(a[0], b[0] + 1):
            for j in range(a[1], b[1] + 1):
                for k in range(a[2], b[2] + 1):
                    union |= set(g.members(int(g.flat(i, j, k))).tolist())
        assert set(cand.tolist()) == union


def test_grid_single_item():
    g = grid_build([[1.0, 1.0, 1.0]], [[1.5, 1.5, 1.5]], Aabb((-1000,) * 3, (1000,) * 3))
    assert g.n_nonempty == 1
    assert grid_candidates(g, Aabb((0, 0, 0), (2, 2, 2))).tolist() == [0]


def test_grid_item_spanning_two_cells():
    g = grid_build([[-1.0, 1.0, 1.0]], [[1.0, 2.0, 2.0]], ENV)
    assert g.n_nonempty == 2


def test_grid_far_and_covering_queries(rng):
    lo = rng.uniform(-9, 8, size=(100, 3))
    g = grid_build(lo, lo + 1, ENV, 8)
    assert grid_candidates(g, Aabb((50,) * 3, (60,) * 3)).size in (0, len(g.members(int(np.prod(g.shape)) - 1)))
    assert grid_candidates(g, ENV).tolist() == list(range(100))


def test_grid_overflow_kept():
    lo = np.zeros((50, 3))
    g = grid_build(lo, lo + 0.1, ENV, 4)
    assert g.overflow
    assert grid_candidates(g, Aabb((0, 0, 0), (0.1, 0.1, 0.1))).tolist() == list(range(50))


def test_grid_bad_capacity():
    with pytest.raises(ValueError):
        grid_build(np.zeros((1, 3)), np.ones((1, 3)), ENV, 0)


# ------------------------------------------------------------ engine


def _replay_both(p, s, lazy, check):
    scene = p.scene(s)
    resolver = ExactOracle(p.robot, p.roadmap, p.geoms.eps).resolver()
    seq = RggEngine(p.roadmap, p.geoms, scene, resolver, lazy=lazy)
    bat = BatchEngine(p.roadmap, p.geoms, scene, resolver, lazy=lazy)
    check(seq, bat)
    for oid, target in move_script(s, scene.obstacles):
        t = relative_move(seq.obstacles[oid].pose, target)
        rs = seq.update_obstacle(oid, t, lazy)
        (rb,) = batch_update(bat, [(oid, t)], lazy)
        for f in ("newly_valid", "newly_invalid", "newly_unknown", "unknown_after", "resolved"):
            assert getattr(rs, f) == getattr(rb, f), f
        check(seq, bat)
    return seq, bat


@pytest.mark.parametrize("mode", ["lazy", "eager"])
@pytest.mark.parametrize("move_seed", [1, 2, 3])
def test_engines_identical(small_prepared, small_scenario, mode, move_seed):
    s = with_overrides(small_scenario, mode=mode, move_seed=move_seed, iterations=25)

    def check(seq, bat):
        assert engines_agree(seq, bat), bat.labels.diff(seq.states(), seq.intersections())
        assert bat.labels.equals(seq.states(), seq.intersections())

    _replay_both(small_prepared, s, s.lazy, check)


def test_outer_only_engines_identical(small_prepared, small_scenario):
    p = small_prepared
    s = with_overrides(small_scenario, under_phase=False, iterations=10)
    scene = p.scene(s)
    seq = RggEngine(p.roadmap, p.geoms, scene, under_phase=False)
    bat = BatchEngine(p.roadmap, p.geoms, scene, under_phase=False)
    for oid, target in move_script(s, scene.obstacles):
        t = relative_move(seq.obstacles[oid].pose, target)
        seq.update_obstacle(oid, t)
        bat.update_obstacle(oid, t)
        assert engines_agree(seq, bat)
    assert not (seq.states() == ValidityState.INVALID).any()


def test_empty_move_list(small_prepared):
    p = small_prepared
    bat = BatchEngine(p.roadmap, p.geoms, p.scene())
    before = bat.states()
    assert batch_update(bat, []) == []
    np.testing.assert_array_equal(bat.states(), before)


def test_small_cells_engine_identical(small_prepared, small_scenario):
    """Capacity 1 forces overflow lists in every busy cell."""
    p = small_prepared
    s = with_overrides(small_scenario, iterations=10, cell_capacity=1)
    scene = p.scene(s)
    seq = RggEngine(p.roadmap, p.geoms, scene)
    bat = BatchEngine(p.roadmap, p.geoms, scene, cell_capacity=1)
    assert bat.grid.overflow
    for oid, target in move_script(s, scene.obstacles):
        t = relative_move(seq.obstacles[oid].pose, target)
        seq.update_obstacle(oid, t)
        bat.update_obstacle(oid, t)
        assert engines_agree(seq, bat)


def test_set_pose_and_insert(small_prepared):
    p = small_prepared
    o = ObstacleModel((1, 1, 1))
    lay = serialize(p.geoms, {"o": o})
    set_pose(lay, "o", Transform.from_translation((1, 2, 3)))
    np.testing.assert_allclose(lay.O_plus[0], o.outer_corners + [1, 2, 3])
    bat = BatchEngine(p.roadmap, p.geoms, Scene(ENV, p.robot, {}), layout=serialize(p.geoms, {"o": o}))
    assert (bat.states() == 0).all()
    bat.insert_obstacle("o", o)
    with pytest.raises(KeyError):
        bat.insert_obstacle("o", o)


def test_label_buffer_diff():
    lb = LabelBuffer.empty(3, ["a", "b"])
    lb.bits[1, 0] = True
    lb.states[1] = 2
    seq_states = np.array([0, 2, 0], dtype=np.int8)
    assert lb.equals(seq_states, [set(), {"a"}, set()])
    diff = lb.diff(seq_states, [set(), {"b"}, set()])
    assert len(diff) == 1 and "component 1" in diff[0]
