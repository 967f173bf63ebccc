import os
import time

import numpy as np
import pytest

from rgg.geometry import Aabb, Transform
from rgg.persist import (
    ChecksumError,
    RoadmapFileError,
    TruncatedFileError,
    VersionMismatchError,
    load_roadmap,
    save_roadmap,
)
from rgg.roadmap import (
    ExactOracle,
    GeometrySet,
    Roadmap,
    Scene,
    ValidityState,
    build_prm,
    configs_collide,
    exact_component_valid,
    knn_edges,
    make_components,
)
from rgg.swept import ObstacleModel, RobotModel, discretize_edge

ENV = Aabb((-10, -10, -10), (10, 10, 10))


def free_scene(**obstacles) -> Scene:
    return Scene(ENV, RobotModel.free_box(), obstacles)


def test_validity_codes():
    assert [int(s) for s in ValidityState] == [0, 1, 2]


def test_roadmap_invariants():
    nodes = np.zeros((3, 6))
    with pytest.raises(ValueError):
        Roadmap(nodes, [[0, 3]])
    with pytest.raises(ValueError):
        Roadmap(nodes, [[1, 0]])
    with pytest.raises(ValueError):
        Roadmap(nodes, [[0, 1], [0, 1]])
    r = Roadmap(nodes, [[0, 1], [1, 2]])
    assert r.n_components == 5
    assert r.adjacency[1] == [3, 4]
    a, b = r.endpoints(0)
    assert a is b or np.array_equal(a, b)


def test_prm_ten_nodes_edge_count():
    r = build_prm(free_scene(), 10, 16, seed=0)
    assert r.n_nodes == 10
    assert 40 <= r.n_edges <= 120


def test_prm_single_node():
    assert build_prm(free_scene(), 1, 4).n_edges == 0


def test_prm_rejects_zero_nodes():
    with pytest.raises(ValueError):
        build_prm(free_scene(), 0, 4)


def test_prm_deterministic():
    a = build_prm(free_scene(), 50, 8, seed=3)
    b = build_prm(free_scene(), 50, 8, seed=3)
    assert a == b
    assert a.nodes.tobytes() == b.nodes.tobytes()
    assert not (a == build_prm(free_scene(), 50, 8, seed=4))


def test_prm_samples_inside_bounds():
    r = build_prm(free_scene(), 200, 4, seed=1)
    assert np.all(r.nodes[:, :3] >= -10) and np.all(r.nodes[:, :3] <= 10)
    assert np.all(np.abs(r.nodes[:, 3:]) <= np.pi)


def test_prm_with_obstacle_drops_collisions():
    big = ObstacleModel((4, 4, 4))
    scene = free_scene(big=big)
    r = build_prm(scene, 200, 6, seed=2)
    eps = scene.robot.default_epsilon()
    assert r.n_nodes < 200
    for u, v in r.edges[:40]:
        assert not configs_collide(scene.robot, discretize_edge(r.nodes[u], r.nodes[v], eps), [big])


def test_knn_edges_brute_force(rng):
    P = rng.uniform(size=(30, 3))
    got = {tuple(e) for e in knn_edges(P, 3)}
    d = np.linalg.norm(P[:, None] - P[None], axis=2)
    want = set()
    for i in range(30):
        for j in np.argsort(d[i])[1:4]:
            want.add((min(i, j), max(i, j)))
    assert got == want


# ------------------------------------------------------------ exact oracle


def test_empty_scene_all_valid(small_prepared):
    p = small_prepared
    scene = Scene(ENV, p.robot, {})
    comps = make_components(p.roadmap, p.geoms)
    assert all(exact_component_valid(c, scene, p.geoms.eps) for c in comps[:30])


def test_obstacle_on_node_is_invalid(small_prepared):
    p = small_prepared
    q = p.roadmap.nodes[0]
    o = ObstacleModel((0.3, 0.3, 0.3)).placed(Transform.from_translation(q[:3]))
    comps = make_components(p.roadmap, p.geoms)
    assert not exact_component_valid(comps[0], Scene(ENV, p.robot, {"o": o}), p.geoms.eps)


def test_touching_boxes_collide():
    m = RobotModel.free_box()
    o = ObstacleModel((0.5, 0.5, 0.5)).placed(Transform.from_translation((1.0, 0, 0)))
    assert configs_collide(m, [np.zeros(6)], [o])
    far = o.placed(Transform.from_translation((1.0 + 1e-9, 0, 0)))
    assert not configs_collide(m, [np.zeros(6)], [far])


def test_exact_check_resolution_refinement(small_prepared):
    """No tunneling at the chosen resolution: a 4x finer check agrees."""
    p = small_prepared
    r = np.random.default_rng(7)
    obstacles = {
        i: ObstacleModel(r.uniform(0.5, 3, size=3)).placed(Transform.from_translation(r.uniform(-6, 6, size=3)))
        for i in range(4)
    }
    scene = Scene(ENV, p.robot, obstacles)
    comps = make_components(p.roadmap, p.geoms)
    picks = r.choice(len(comps), size=min(100, len(comps)), replace=False)
    for cid in picks:
        c = comps[cid]
        fine = not configs_collide(p.robot, discretize_edge(c.start, c.end, p.geoms.eps / 4), obstacles.values())
        assert exact_component_valid(c, scene, p.geoms.eps) == fine


def test_oracle_table_matches_direct_check(small_prepared):
    p = small_prepared
    scene = p.scene()
    oracle = ExactOracle(p.robot, p.roadmap, p.geoms.eps)
    mask = oracle.valid_mask(scene)
    comps = make_components(p.roadmap, p.geoms)
    direct = np.array([exact_component_valid(c, scene, p.geoms.eps) for c in comps])
    np.testing.assert_array_equal(mask, direct)
    assert not mask.all()
    # moving an obstacle only recomputes its column
    oid = next(iter(scene.obstacles))
    moved = scene.copy()
    moved.obstacles[oid] = moved.obstacles[oid].moved(Transform.from_translation((3, 0, 0)))
    direct = np.array([exact_component_valid(c, moved, p.geoms.eps) for c in comps])
    np.testing.assert_array_equal(oracle.valid_mask(moved), direct)
    resolve = oracle.resolver()
    assert all(resolve(cid, moved) == direct[cid] for cid in range(0, len(comps), 7))


# ------------------------------------------------------------ persistence


def test_roundtrip_bitwise(tmp_path, small_prepared):
    p = small_prepared
    path = tmp_path / "r.rgg"
    save_roadmap(p.roadmap, p.geoms, path)
    r, g = load_roadmap(path)
    assert r == p.roadmap and g == p.geoms
    assert r.nodes.tobytes() == p.roadmap.nodes.tobytes()
    for a, b in zip(g.items, p.geoms.items):
        assert a.over_corners.tobytes() == b.over_corners.tobytes()


def test_roundtrip_ten_nodes_and_chain_robot(tmp_path):
    m = RobotModel.arm(3)
    scene = Scene(Aabb((-5, -5, -5), (5, 5, 5)), m)
    r = build_prm(scene, 10, 16, seed=1)
    g = GeometrySet.build(m, r)
    save_roadmap(r, g, tmp_path / "a.rgg")
    r2, g2 = load_roadmap(tmp_path / "a.rgg")
    assert r2 == r and g2 == g
    assert g2.robot.dof == 3


def _saved(tmp_path, p):
    path = tmp_path / "r.rgg"
    save_roadmap(p.roadmap, p.geoms, path)
    return path, path.read_bytes()


def test_corrupted_byte(tmp_path, small_prepared):
    path, data = _saved(tmp_path, small_prepared)
    bad = bytearray(data)
    bad[len(bad) // 2] ^= 0x40
    path.write_bytes(bytes(bad))
    with pytest.raises(ChecksumError):
        load_roadmap(path)


def test_truncated(tmp_path, small_prepared):
    path, data = _saved(tmp_path, small_prepared)
    path.write_bytes(data[:-100])
    with pytest.raises(TruncatedFileError):
        load_roadmap(path)
    path.write_bytes(data[:10])
    with pytest.raises(TruncatedFileError):
        load_roadmap(path)


def test_version_mismatch(tmp_path, small_prepared):
    path, data = _saved(tmp_path, small_prepared)
    bad = bytearray(data)
    bad[8] = 99
    path.write_bytes(bytes(bad))
    with pytest.raises(VersionMismatchError):
        load_roadmap(path)


def test_error_kinds_are_distinct():
    kinds = {ChecksumError, TruncatedFileError, VersionMismatchError}
    assert len(kinds) == 3
    assert all(issubclass(k, RoadmapFileError) for k in kinds)
    assert not issubclass(ChecksumError, TruncatedFileError)


def test_not_a_roadmap(tmp_path):
    path = tmp_path / "x.rgg"
    path.write_bytes(b"hello world, definitely not a roadmap")
    with pytest.raises(RoadmapFileError):
        load_roadmap(path)


def test_failed_save_keeps_old_file(tmp_path, small_prepared, monkeypatch):
    path, data = _saved(tmp_path, small_prepared)

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        save_roadmap(small_prepared.roadmap, small_prepared.geoms, path)
    assert path.read_bytes() == data
    assert [f.name for f in tmp_path.iterdir()] == ["r.rgg"]


def test_layout_embedding(tmp_path, small_prepared):
    from rgg.batch import serialize

    p = small_prepared
    layout = serialize(p.geoms, {})
    save_roadmap(p.roadmap, p.geoms, tmp_path / "l.rgg", layout)
    _, _, stored = load_roadmap(tmp_path / "l.rgg", with_layout=True)
    for k, v in layout.robot_arrays().items():
        assert stored[k].tobytes() == v.tobytes()
    save_roadmap(p.roadmap, p.geoms, tmp_path / "n.rgg")
    assert load_roadmap(tmp_path / "n.rgg", with_layout=True)[2] is None


def test_load_speed_small(tmp_path, small_prepared):
    path, _ = _saved(tmp_path, small_prepared)
    t0 = time.perf_counter()
    load_roadmap(path)
    assert time.perf_counter() - t0 < 1.0
