import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rgg.bench import initial_obstacles, move_script, relative_move
from rgg.geometry import Aabb, Transform, aabb_of_obb
from rgg.roadmap import ExactOracle, GeometrySet, Roadmap, Scene, ValidityState
from rgg.sequential import (
    RggEngine,
    narrow_over_test,
    narrow_under_test,
    padded_aabb,
    revalidate_old_intersections,
    update_obstacle,
)
from rgg.swept import ObstacleModel, RobotModel
from rgg.tree import AabbTree, tree_build, tree_query

VALID, INVALID, UNKNOWN = ValidityState.VALID, ValidityState.INVALID, ValidityState.UNKNOWN
ENV = Aabb((-10, -10, -10), (10, 10, 10))
seeds = st.integers(0, 2**32 - 1)


# ------------------------------------------------------------ tree


def random_boxes(r, n):
    lo = r.uniform(-10, 10, size=(n, 3))
    return lo, lo + r.uniform(0, 3, size=(n, 3))


def test_tree_single_item():
    t = tree_build([[0, 0, 0]], [[1, 1, 1]], [7])
    assert t.item[0] == 0 and t.left[0] == -1
    assert tree_query(t, Aabb((0.5, 0.5, 0.5), (2, 2, 2))) == {7}


def test_tree_empty():
    with pytest.raises(ValueError):
        tree_build(np.zeros((0, 3)), np.zeros((0, 3)), [])


def test_tree_universe_and_disjoint(rng):
    lo, hi = random_boxes(rng, 50)
    t = tree_build(lo, hi, np.arange(50))
    assert tree_query(t, Aabb((-100,) * 3, (100,) * 3)) == set(range(50))
    assert tree_query(t, Aabb((50,) * 3, (60,) * 3)) == set()
    assert 17 in tree_query(t, Aabb(lo[17], hi[17]))


@given(seeds, st.integers(1, 80))
def test_tree_matches_linear_scan(seed, n):
    r = np.random.default_rng(seed)
    lo, hi = random_boxes(r, n)
    ids = r.integers(0, 20, size=n)
    t = tree_build(lo, hi, ids)
    for k in range(len(t.lo)):
        if t.left[k] >= 0:
            for ch in (t.left[k], t.right[k]):
                assert np.all(t.lo[k] <= t.lo[ch]) and np.all(t.hi[ch] <= t.hi[k])
    perm = r.permutation(n)
    shuffled = tree_build(lo[perm], hi[perm], ids[perm])
    for _ in range(10):
        qlo = r.uniform(-12, 12, size=3)
        q = Aabb(qlo, qlo + r.uniform(0, 6, size=3))
        scan = {int(ids[i]) for i in range(n) if np.all(lo[i] <= q.max) and np.all(q.min <= hi[i])}
        assert tree_query(t, q) == scan == tree_query(shuffled, q)


# ------------------------------------------------------------ constructed scenes

ROBOT = RobotModel.free_box()
EDGE = 2  # component id of the single edge below


def line_roadmap():
    nodes = np.array([[0, 0, 0, 0, 0, 0], [4, 0, 0, 0, 0, 0]], dtype=float)
    r = Roadmap(nodes, [[0, 1]])
    return r, GeometrySet.build(ROBOT, r)


def corner_beam(offset=0.55):
    """Thin beam clipping the robot's box along one edge while missing its sphere."""
    return ObstacleModel((2, 0.06, 0.06)).placed(Transform.from_translation((2, offset, offset)))


def big_cube():
    return ObstacleModel((1, 1, 1)).placed(Transform.from_translation((2, 0, 0)))


FAR = Transform.from_translation((0, 0, 30))


def engine(obstacles, lazy=True, **kw):
    r, g = line_roadmap()
    return RggEngine(r, g, Scene(ENV, ROBOT, obstacles), lazy=lazy, **kw)


def test_grazing_obstacle_lazy_gray_eager_red():
    r, g = line_roadmap()
    o = corner_beam()
    assert narrow_over_test(o, g[EDGE]) and not narrow_under_test(o, g[EDGE])
    assert not ExactOracle(ROBOT, r, g.eps).valid_mask(Scene(ENV, ROBOT, {"b": o}))[EDGE]
    assert engine({"b": o}, lazy=True).components[EDGE].state == UNKNOWN
    assert engine({"b": o}, lazy=False).components[EDGE].state == INVALID


def test_inner_hit_forces_red_on_node():
    o = ObstacleModel((0.2, 0.2, 0.2))
    e = engine({"o": o})
    assert e.components[0].state == INVALID
    assert "o" in e.components[0].over_intersecting


def test_far_obstacle_reports_nothing():
    o = ObstacleModel((1, 1, 1)).placed(Transform.from_translation((0, 0, 8)))
    e = engine({"o": o})
    assert all(c.state == VALID for c in e.components)
    rep = update_obstacle(e, "o", Transform.from_translation((0, 5, 0)))
    assert (rep.newly_valid, rep.newly_invalid, rep.newly_unknown) == (0, 0, 0)
    assert rep.unknown_after == 0
    assert all(c.state == VALID for c in e.components)


def test_departure_restores_green():
    e = engine({"b": corner_beam()})
    assert e.components[EDGE].state == UNKNOWN
    rep = e.update_obstacle("b", FAR)
    assert e.components[EDGE].state == VALID
    assert e.components[EDGE].over_intersecting == set()
    assert rep.newly_valid >= 1


def test_departure_leaves_gray_when_other_outer_remains():
    e = engine({"cube": big_cube(), "b": corner_beam()})
    assert e.components[EDGE].state == INVALID
    assert e.components[EDGE].over_intersecting == {"cube", "b"}
    e.update_obstacle("cube", FAR)
    assert e.components[EDGE].state == UNKNOWN
    assert e.components[EDGE].over_intersecting == {"b"}
    # the beam really touches the edge, so the gray label is the honest answer
    r, g = line_roadmap()
    assert not ExactOracle(ROBOT, r, g.eps).valid_mask(e.scene)[EDGE]


def test_departure_keeps_red_when_other_inner_hits():
    inner = ObstacleModel((0.3, 0.3, 0.3)).placed(Transform.from_translation((3, 0, 0)))
    e = engine({"cube": big_cube(), "small": inner})
    e.update_obstacle("cube", FAR)
    assert e.components[EDGE].state == INVALID


def test_revalidate_without_members_is_noop():
    e = engine({"b": corner_beam()})
    before = e.states()
    assert revalidate_old_intersections(e, "nobody") == []
    np.testing.assert_array_equal(e.states(), before)


def test_unknown_obstacle():
    e = engine({})
    with pytest.raises(KeyError):
        e.update_obstacle("ghost", Transform())


def test_previously_red_component_still_listed():
    # listing is unconditional: a red component overlapped by a second outer box records it too
    e = engine({"cube": big_cube()})
    e.insert_obstacle("b", corner_beam())
    assert e.components[EDGE].over_intersecting == {"cube", "b"}


def test_narrow_far_and_engulfing():
    _, g = line_roadmap()
    far = ObstacleModel((1, 1, 1)).placed(Transform.from_translation((0, 0, 9)))
    huge = ObstacleModel((8, 8, 8))
    for geo in g.items:
        assert not narrow_over_test(far, geo) and not narrow_under_test(far, geo)
        assert narrow_over_test(huge, geo) and narrow_under_test(huge, geo)


# ------------------------------------------------------------ properties on random scenes


def random_obstacle(r) -> ObstacleModel:
    o = ObstacleModel(r.uniform(0.3, 4, size=3))
    yaw = r.uniform(-np.pi, np.pi)
    return o.placed(Transform.from_euler_xyz(r.uniform(-0.5, 0.5), 0, yaw, r.uniform(-8, 8, size=3)))


@settings(max_examples=25)
@given(seeds)
def test_under_implies_over_and_broadphase_superset(small_prepared, seed):
    p = small_prepared
    r = np.random.default_rng(seed)
    o = random_obstacle(r)
    e = RggEngine(p.roadmap, p.geoms, Scene(ENV, p.robot, {}))
    over_ids = e.over_tree.query(padded_aabb(aabb_of_obb(o.outer)))
    under_ids = e.under_tree.query(padded_aabb(o.inner_aabb()))
    for cid, geo in enumerate(p.geoms.items):
        over, under = narrow_over_test(o, geo), narrow_under_test(o, geo)
        assert not under or over
        assert not over or cid in over_ids
        assert not under or cid in under_ids


def replay(p, s, seed, lazy):
    s = s.__class__(**{**s.__dict__, "move_seed": seed})
    scene = Scene(s.env, p.robot, initial_obstacles(s))
    e = RggEngine(p.roadmap, p.geoms, scene, lazy=lazy)
    yield e
    for oid, target in move_script(s, scene.obstacles):
        e.update_obstacle(oid, relative_move(e.obstacles[oid].pose, target), lazy=lazy)
        yield e


@settings(max_examples=8)
@given(st.integers(0, 10_000))
def test_three_way_consistency_and_soundness(small_prepared, small_scenario, seed):
    p = small_prepared
    oracle = ExactOracle(p.robot, p.roadmap, p.geoms.eps)
    for e in replay(p, small_scenario, seed, lazy=True):
        states = e.states()
        valid = oracle.valid_mask(e.scene)
        assert not np.any((states == VALID) & ~valid)
        assert not np.any((states == INVALID) & valid)
        for cid in range(0, len(states), 5):
            geo = p.geoms[cid]
            obs = list(e.obstacles.values())
            if any(narrow_under_test(o, geo) for o in obs):
                assert states[cid] == INVALID
            if not any(narrow_over_test(o, geo) for o in obs):
                assert states[cid] == VALID


@settings(max_examples=6)
@given(st.integers(0, 10_000))
def test_lazy_then_resolve_equals_eager(small_prepared, small_scenario, seed):
    p = small_prepared
    oracle = ExactOracle(p.robot, p.roadmap, p.geoms.eps)
    *_, lazy = replay(p, small_scenario, seed, lazy=True)
    *_, eager = replay(p, small_scenario, seed, lazy=False)
    lazy._resolver = oracle.resolver()
    lazy.resolve_all()
    np.testing.assert_array_equal(lazy.states(), eager.states())


@settings(max_examples=8)
@given(st.integers(0, 10_000))
def test_identity_move_idempotent(small_prepared, small_scenario, seed):
    p = small_prepared
    *_, e = replay(p, small_scenario, seed, lazy=True)
    oid = next(iter(e.obstacles))
    e.update_obstacle(oid, Transform())
    once, lists = e.states(), e.intersections()
    e.update_obstacle(oid, Transform())
    np.testing.assert_array_equal(e.states(), once)
    assert e.intersections() == lists


def test_report_counts_consistent(small_prepared, small_scenario):
    p = small_prepared
    prev = None
    for e in replay(p, small_scenario, 3, lazy=True):
        states = e.states()
        assert e.n_unknown == int(np.count_nonzero(states == UNKNOWN))
        assert e.n_unknown_edges == int(np.count_nonzero(states[p.roadmap.n_nodes:] == UNKNOWN))
        prev = states
    assert prev is not None


def test_tree_items_per_body_and_spline(small_prepared):
    p = small_prepared
    e = RggEngine(p.roadmap, p.geoms, Scene(ENV, p.robot, {}))
    assert isinstance(e.over_tree, AabbTree)
    assert len(e.over_tree.item_ids) == p.roadmap.n_components * p.robot.n_bodies
    assert len(e.under_tree.item_ids) == sum(1 for g in p.geoms.items for _ in g.splines())
