"""Roadmaps, component labels, scenes and the exact collision oracle.

Components are numbered nodes first (``0 .. V-1``) then edges
(``V .. V+E-1``).  A node is handled as the zero-length edge from its
configuration to itself, so both kinds share every code path.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import boxes_overlap_vertex
from .geometry import Aabb
from .swept import (
    DEFAULT_K,
    BodySpheres,
    EdgeGeometry,
    ObstacleModel,
    RobotModel,
    build_edge_geometry,
    discretize_edge,
)


class ValidityState(enum.IntEnum):
    VALID = 0  # green
    INVALID = 1  # red
    UNKNOWN = 2  # gray


@dataclass(eq=False)
class Roadmap:
    """Undirected graph of configurations; `edges[i] = (u, v)` with ``u < v``."""

    nodes: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=np.float64)
        if self.nodes.ndim != 2:
            raise ValueError("nodes must be a (V, dof) array")
        self.edges = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= len(self.nodes):
                raise ValueError("edge endpoint does not exist")
            if np.any(self.edges[:, 0] >= self.edges[:, 1]):
                raise ValueError("edges must be stored once as (u, v) with u < v")
            if len(np.unique(self.edges, axis=0)) != len(self.edges):
                raise ValueError("duplicate edge")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_components(self) -> int:
        return self.n_nodes + self.n_edges

    @property
    def dof(self) -> int:
        return self.nodes.shape[1]

    @cached_property
    def adjacency(self) -> dict[int, list[int]]:
        """Node id to the component ids of its incident edges."""
        adj: dict[int, list[int]] = {i: [] for i in range(self.n_nodes)}
        for e, (u, v) in enumerate(self.edges.tolist()):
            adj[u].append(self.n_nodes + e)
            adj[v].append(self.n_nodes + e)
        return adj

    def is_node(self, cid: int) -> bool:
        return cid < self.n_nodes

    def endpoints(self, cid: int) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= cid < self.n_components:
            raise IndexError(f"component {cid} out of range")
        if cid < self.n_nodes:
            return self.nodes[cid], self.nodes[cid]
        u, v = self.edges[cid - self.n_nodes]
        return self.nodes[u], self.nodes[v]

    def all_endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        starts = np.concatenate([self.nodes, self.nodes[self.edges[:, 0]]])
        ends = np.concatenate([self.nodes, self.nodes[self.edges[:, 1]]])
        return starts, ends

    def __eq__(self, other):
        if not isinstance(other, Roadmap):
            return NotImplemented
        return np.array_equal(self.nodes, other.nodes) and np.array_equal(self.edges, other.edges)

    __hash__ = None


@dataclass(eq=False)
class Component:
    id: int
    kind: str  # "node" or "edge"
    start: np.ndarray
    end: np.ndarray
    geometry: EdgeGeometry
    state: ValidityState = ValidityState.VALID
    over_intersecting: set = field(default_factory=set)


@dataclass(eq=False)
class Scene:
    bounds: Aabb
    robot: RobotModel
    obstacles: dict = field(default_factory=dict)

    def __post_init__(self):
        self.obstacles = dict(self.obstacles)
        for oid, o in self.obstacles.items():
            if not isinstance(o, ObstacleModel):
                raise TypeError(f"obstacle {oid} is not an ObstacleModel")

    def copy(self) -> "Scene":
        return Scene(self.bounds, self.robot, dict(self.obstacles))


@dataclass(eq=False)
class GeometrySet:
    """Approximations of every component plus the parameters that produced them."""

    robot: RobotModel
    spheres: BodySpheres
    eps: float
    K: int
    items: list

    @classmethod
    def build(cls, robot: RobotModel, roadmap: Roadmap, eps: float | None = None,
              K: int = DEFAULT_K, spheres: BodySpheres | None = None) -> "GeometrySet":
        eps = robot.default_epsilon() if eps is None else float(eps)
        spheres = spheres or BodySpheres.for_robot(robot)
        if not spheres.contained_in(robot):
            raise ValueError("body spheres must lie inside their boxes")
        starts, ends = roadmap.all_endpoints()
        items = [
            build_edge_geometry(robot, spheres, discretize_edge(a, b, eps), K)
            for a, b in zip(starts, ends)
        ]
        return cls(robot, spheres, eps, K, items)

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, i) -> EdgeGeometry:
        return self.items[i]

    def __eq__(self, other):
        if not isinstance(other, GeometrySet):
            return NotImplemented
        return (
            self.eps == other.eps
            and self.K == other.K
            and self.spheres_equal(other)
            and len(self.items) == len(other.items)
            and all(a == b for a, b in zip(self.items, other.items))
        )

    def spheres_equal(self, other: "GeometrySet") -> bool:
        mine = [(s.center.tolist(), s.radius) for row in self.spheres.spheres for s in row]
        theirs = [(s.center.tolist(), s.radius) for row in other.spheres.spheres for s in row]
        return mine == theirs

    __hash__ = None


def make_components(roadmap: Roadmap, geoms: GeometrySet) -> list[Component]:
    if len(geoms) != roadmap.n_components:
        raise ValueError("geometry count does not match the roadmap")
    out = []
    for cid in range(roadmap.n_components):
        a, b = roadmap.endpoints(cid)
        kind = "node" if roadmap.is_node(cid) else "edge"
        out.append(Component(cid, kind, a, b, geoms[cid]))
    return out


# ------------------------------------------------------------ exact oracle


def boxes_collide(body_corners: np.ndarray, obstacle_corners: np.ndarray) -> np.ndarray:
    """Exact overlap of many boxes against one box, by vertex projections.

    Candidate axes are the face normals of both boxes and the cross products
    of their edge directions.  Touching boxes overlap.
    """
    body_corners = np.ascontiguousarray(body_corners, dtype=np.float64)
    out = np.zeros(len(body_corners), dtype=np.bool_)
    if len(body_corners):
        boxes_overlap_vertex(body_corners, np.ascontiguousarray(obstacle_corners, dtype=np.float64), out)
    return out


def _corner_aabbs(corners: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return corners.min(axis=-2), corners.max(axis=-2)


def configs_collide(robot: RobotModel, cfgs, obstacles: Iterable[ObstacleModel]) -> bool:
    """Whether any body at any of `cfgs` overlaps any obstacle box."""
    obstacles = list(obstacles)
    if not obstacles:
        return False
    corners = robot.body_corners(cfgs).reshape(-1, 8, 3)
    lo, hi = _corner_aabbs(corners)
    for o in obstacles:
        olo, ohi = _corner_aabbs(o.outer_corners)
        near = np.all((lo <= ohi) & (hi >= olo), axis=1)
        if near.any() and boxes_collide(corners[near], o.outer_corners).any():
            return True
    return False


def exact_component_valid(c: Component, scene: Scene, eps: float) -> bool:
    """Ground truth: no body at any discretized configuration touches an obstacle."""
    return not configs_collide(scene.robot, discretize_edge(c.start, c.end, eps), scene.obstacles.values())


class ExactOracle:
    """Exact per-(component, obstacle) collision table for one roadmap.

    Gives the same answers as `exact_component_valid`, but keeps every
    component's discretized body corners so that moving one obstacle only
    re-evaluates that obstacle's column, and only where bounding boxes meet.
    """

    def __init__(self, robot: RobotModel, roadmap: Roadmap, eps: float):
        self.robot = robot
        self.eps = float(eps)
        self.n = roadmap.n_components
        starts, ends = roadmap.all_endpoints()
        chunks, counts = [], []
        for a, b in zip(starts, ends):
            cfgs = discretize_edge(a, b, self.eps)
            chunks.append(cfgs)
            counts.append(len(cfgs))
        cfgs = np.concatenate(chunks)
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.owner = np.repeat(np.arange(self.n), counts)
        B = robot.n_bodies
        corners = robot.body_corners(cfgs)  # (T, B, 8, 3)
        self.corners = corners.reshape(-1, 8, 3)
        self.box_owner = np.repeat(self.owner, B)
        self.box_lo, self.box_hi = _corner_aabbs(self.corners)
        self.comp_lo = np.minimum.reduceat(self.box_lo, self.offsets[:-1] * B, axis=0)
        self.comp_hi = np.maximum.reduceat(self.box_hi, self.offsets[:-1] * B, axis=0)
        self.boxes_per_comp = np.diff(self.offsets) * B
        self.B = B
        self.columns: dict = {}
        self._poses: dict = {}

    def column(self, o: ObstacleModel) -> np.ndarray:
        """Boolean array over components: does the component touch obstacle `o`."""
        olo, ohi = _corner_aabbs(o.outer_corners)
        hit = np.zeros(self.n, dtype=bool)
        near_c = np.all((self.comp_lo <= ohi) & (self.comp_hi >= olo), axis=1)
        if not near_c.any():
            return hit
        idx = np.flatnonzero(np.repeat(near_c, self.boxes_per_comp))
        near = np.all((self.box_lo[idx] <= ohi) & (self.box_hi[idx] >= olo), axis=1)
        idx = idx[near]
        if len(idx):
            touching = boxes_collide(self.corners[idx], o.outer_corners)
            hit[np.unique(self.box_owner[idx[touching]])] = True
        return hit

    def set_obstacle(self, oid, o: ObstacleModel) -> None:
        known = self._poses.get(oid)
        if known is not None and (known is o or (
                known.pose == o.pose and np.array_equal(known.half_extents, o.half_extents))):
            return
        self.columns[oid] = self.column(o)
        self._poses[oid] = o

    def remove_obstacle(self, oid) -> None:
        self.columns.pop(oid, None)
        self._poses.pop(oid, None)

    def sync(self, scene: Scene) -> None:
        for oid in list(self.columns):
            if oid not in scene.obstacles:
                self.remove_obstacle(oid)
        for oid, o in scene.obstacles.items():
            self.set_obstacle(oid, o)

    def valid_mask(self, scene: Scene | None = None) -> np.ndarray:
        if scene is not None:
            self.sync(scene)
        bad = np.zeros(self.n, dtype=bool)
        for col in self.columns.values():
            bad |= col
        return ~bad

    def resolver(self):
        """Callable ``(cid, scene) -> bool`` usable as an engine's exact check."""
        def valid(cid: int, scene: Scene) -> bool:
            self.sync(scene)
            return not any(col[cid] for col in self.columns.values())
        return valid


# -------------------------------------------------------------------- PRM


def build_prm(scene: Scene, n_nodes: int, k_neighbors: int, eps: float | None = None,
              seed: int = 0) -> Roadmap:
    """Uniform-sampling PRM with k-nearest-neighbor straight edges.

    Nodes are drawn uniformly inside the robot's DOF bounds for the scene.
    When the scene already holds obstacles, colliding nodes and edges are
    dropped using the exact oracle at resolution `eps`.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be at least 1")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be at least 1")
    robot = scene.robot
    eps = robot.default_epsilon() if eps is None else float(eps)
    rng = np.random.default_rng(seed)
    lo, hi = robot.dof_bounds(scene.bounds)
    nodes = rng.uniform(lo, hi, size=(n_nodes, robot.dof))
    obstacles = list(scene.obstacles.values())
    if obstacles:
        keep = [not configs_collide(robot, q[None], obstacles) for q in nodes]
        nodes = nodes[np.array(keep, dtype=bool)]
    edges = knn_edges(nodes, k_neighbors)
    if obstacles and len(edges):
        keep = [not configs_collide(robot, discretize_edge(nodes[u], nodes[v], eps), obstacles) for u, v in edges]
        edges = edges[np.array(keep, dtype=bool)]
    return Roadmap(nodes, edges)


def knn_edges(nodes: np.ndarray, k: int) -> np.ndarray:
    """Sorted unique (u, v), u < v, linking every node to its k nearest others."""
    n = len(nodes)
    kk = min(k, n - 1)
    if kk < 1:
        return np.zeros((0, 2), dtype=np.int64)
    _, nbr = cKDTree(nodes).query(nodes, k=kk + 1)
    u = np.repeat(np.arange(n), kk + 1)
    v = nbr.reshape(-1)
    pairs = np.stack([np.minimum(u, v), np.maximum(u, v)], axis=1)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    return np.unique(pairs, axis=0).astype(np.int64)


__all__ = [
    "Component",
    "ExactOracle",
    "GeometrySet",
    "Roadmap",
    "Scene",
    "ValidityState",
    "boxes_collide",
    "build_prm",
    "configs_collide",
    "exact_component_valid",
    "knn_edges",
    "make_components",
]
