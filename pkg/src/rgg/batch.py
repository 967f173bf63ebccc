"""Batched red/green/gray engine over dense fixed-shape arrays.

All robot-side approximations are packed once into a `BatchLayout`; an
obstacle move only rewrites that obstacle's rows.  Candidates come from a
one-layer `SpatialGrid`, and the over/under tests run as uniform kernels over
the candidate rows.  Labels match `RggEngine` exactly.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .geometry import Aabb, Obb, Transform, aabb_of_obb, segment_point_distance_batch, transform_points
from .grid import DEFAULT_CELL_CAPACITY, SpatialGrid, grid_build, grid_candidates
from .roadmap import GeometrySet, Roadmap, Scene, ValidityState, exact_component_valid, make_components
from .sequential import Resolver, UpdateReport, pad_box, padded_aabb
from .swept import ObstacleModel

VALID, INVALID, UNKNOWN = int(ValidityState.VALID), int(ValidityState.INVALID), int(ValidityState.UNKNOWN)


@dataclass(eq=False)
class BatchLayout:
    """Dense approximation arrays.

    Robot side (fixed after preprocessing), N components, B bodies,
    S sphere slots per body (spheres times spill rows R), K segments per slot:
    ``E_plus`` (N, B, 8, 3), ``E_minus`` (N, B, S, K, 2, 3), ``seg_mask``
    (N, B, S, K), ``spline_radius`` (B, S).  A spline longer than K segments
    continues in the next slot of its sphere.

    Obstacle side, M obstacles with C spheres each: ``O_plus`` (M, 8, 3),
    ``O_minus_c`` (M, C, 3), ``O_minus_r`` (M,).
    """

    E_plus: np.ndarray
    E_minus: np.ndarray
    seg_mask: np.ndarray
    spline_radius: np.ndarray
    spill_rows: int
    O_plus: np.ndarray
    O_minus_c: np.ndarray
    O_minus_r: np.ndarray
    obstacle_ids: list
    poses: list
    canonical_corners: np.ndarray
    canonical_centers: np.ndarray
    # derived
    E_center: np.ndarray = field(init=False)
    E_axes: np.ndarray = field(init=False)
    E_half: np.ndarray = field(init=False)
    over_lo: np.ndarray = field(init=False)
    over_hi: np.ndarray = field(init=False)
    slot_lo: np.ndarray = field(init=False)
    slot_hi: np.ndarray = field(init=False)

    def __post_init__(self):
        N, B = self.E_plus.shape[:2]
        self.E_center = np.empty((N, B, 3))
        self.E_axes = np.empty((N, B, 3, 3))
        self.E_half = np.empty((N, B, 3))
        for n in range(N):
            for b in range(B):
                o = Obb.from_corners(self.E_plus[n, b])
                self.E_center[n, b], self.E_axes[n, b], self.E_half[n, b] = o.center, o.axes, o.half_extents
        ext = np.abs(self.E_axes[..., 0, :]) * self.E_half[..., 0:1]
        ext = ext + np.abs(self.E_axes[..., 1, :]) * self.E_half[..., 1:2]
        ext = ext + np.abs(self.E_axes[..., 2, :]) * self.E_half[..., 2:3]
        self.over_lo, self.over_hi = pad_box(self.E_center - ext, self.E_center + ext)
        # per-slot bounds of the thickened segments
        m = self.seg_mask[..., None, None]
        lo = np.where(m, self.E_minus, np.inf).min(axis=(3, 4), initial=np.inf)
        hi = np.where(m, self.E_minus, -np.inf).max(axis=(3, 4), initial=-np.inf)
        empty = ~self.seg_mask[..., 0]
        lo[empty] = 0.0
        hi[empty] = 0.0
        r = self.spline_radius[None, :, :, None]
        self.slot_lo, self.slot_hi = pad_box(lo - r, hi + r)

    @property
    def shape_summary(self) -> dict:
        N, B, S, K = self.seg_mask.shape
        M, C = self.O_minus_c.shape[:2]
        return {"N": N, "B": B, "S": S, "K": K, "R": self.spill_rows, "M": M, "C": C}

    def slot(self, oid) -> int:
        try:
            return self.obstacle_ids.index(oid)
        except ValueError:
            raise KeyError(f"unknown obstacle id {oid!r}") from None

    def robot_arrays(self) -> dict:
        return {
            "E_plus": self.E_plus,
            "E_minus": self.E_minus,
            "seg_mask": self.seg_mask,
            "spline_radius": self.spline_radius,
            "spill_rows": np.array([self.spill_rows]),
        }

    def arrays(self) -> dict:
        out = self.robot_arrays()
        out.update(O_plus=self.O_plus, O_minus_c=self.O_minus_c, O_minus_r=self.O_minus_r)
        return out

    def obstacle_box(self, j: int) -> Obb:
        return Obb.from_corners(self.O_plus[j])

    def obstacle_query(self, j: int) -> Aabb:
        return padded_aabb(aabb_of_obb(self.obstacle_box(j)))

    def obstacle_inner_query(self, j: int) -> Aabb:
        c, r = self.O_minus_c[j], self.O_minus_r[j]
        return padded_aabb(Aabb(c.min(axis=0) - r, c.max(axis=0) + r))

    def component_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-component box covering every body box and every spline slot."""
        lo = self.over_lo.min(axis=1)
        hi = self.over_hi.max(axis=1)
        used = self.seg_mask[..., 0]
        if used.any():
            slo = np.where(used[..., None], self.slot_lo, np.inf).min(axis=(1, 2))
            shi = np.where(used[..., None], self.slot_hi, -np.inf).max(axis=(1, 2))
            lo, hi = np.minimum(lo, slo), np.maximum(hi, shi)
        return lo, hi


def serialize(geoms: GeometrySet, obstacles: dict) -> BatchLayout:
    """Pack component approximations and obstacles into a `BatchLayout`."""
    items = geoms.items
    N = len(items)
    if N == 0:
        raise ValueError("no components to serialize")
    B = items[0].n_bodies
    S = max(len(row) for row in geoms.spheres.spheres)
    K = geoms.K
    longest = max(spline.n_segments for g in items for _, _, spline in g.splines())
    R = max(1, math.ceil(longest / K))
    E_plus = np.array([g.over_corners for g in items]).reshape(N, B, 8, 3)
    E_minus = np.zeros((N, B, S * R, K, 2, 3))
    seg_mask = np.zeros((N, B, S * R, K), dtype=bool)
    spline_radius = np.zeros((B, S * R))
    for b, row in enumerate(geoms.spheres.spheres):
        for s, sphere in enumerate(row):
            spline_radius[b, s * R:(s + 1) * R] = sphere.radius
    for n, g in enumerate(items):
        if g.n_bodies != B:
            raise ValueError("components disagree on the body count")
        for b, s, spline in g.splines():
            if spline.radius != spline_radius[b, s * R]:
                raise ValueError("spline radius differs from its sphere slot")
            segs = spline.segments()
            if len(segs) > R * K:
                raise ValueError(f"spline with {len(segs)} segments exceeds {R} x {K} slots")
            for r in range(R):
                part = segs[r * K:(r + 1) * K]
                E_minus[n, b, s * R + r, :len(part)] = part
                seg_mask[n, b, s * R + r, :len(part)] = True
    ids = list(obstacles)
    M = len(ids)
    C = max((o.n_spheres for o in obstacles.values()), default=1)
    canon_c = np.zeros((M, 8, 3))
    canon_s = np.zeros((M, C, 3))
    radii = np.zeros(M)
    poses = []
    for j, oid in enumerate(ids):
        o = obstacles[oid]
        canon_c[j] = o.canonical_corners
        cc = o.canonical_centers
        canon_s[j, :len(cc)] = cc
        canon_s[j, len(cc):] = cc[0]  # repeated spheres never change a hit
        radii[j] = o.radius
        poses.append(o.pose)
    layout = BatchLayout(E_plus, E_minus, seg_mask, spline_radius, R,
                         np.zeros((M, 8, 3)), np.zeros((M, C, 3)), radii, ids, poses, canon_c, canon_s)
    for j in range(M):
        _write_obstacle_rows(layout, j)
    return layout


def _write_obstacle_rows(layout: BatchLayout, j: int) -> None:
    pose = layout.poses[j]
    layout.O_plus[j] = transform_points(pose.rotation, pose.translation, layout.canonical_corners[j])
    layout.O_minus_c[j] = transform_points(pose.rotation, pose.translation, layout.canonical_centers[j])


def update_transforms(layout: BatchLayout, moves) -> None:
    """Apply ``(obstacle id, Transform)`` moves; rows are rebuilt from the canonical shapes."""
    for oid, t in moves:
        j = layout.slot(oid)
        layout.poses[j] = t.compose(layout.poses[j])
        _write_obstacle_rows(layout, j)


def set_pose(layout: BatchLayout, oid, pose: Transform) -> None:
    j = layout.slot(oid)
    layout.poses[j] = pose
    _write_obstacle_rows(layout, j)


def batch_over(layout: BatchLayout, rows, oid) -> np.ndarray:
    """For each candidate row, whether any of its body boxes meets obstacle `oid`'s box."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    j = layout.slot(oid)
    box = layout.obstacle_box(j)
    q = padded_aabb(aabb_of_obb(box))
    out = np.zeros(len(rows), dtype=bool)
    kern.over_kernel(rows, layout.E_center, layout.E_axes, layout.E_half, layout.over_lo, layout.over_hi,
                     box.center, box.axes, box.half_extents, q.min, q.max, out)
    return out


def batch_under(layout: BatchLayout, rows, oid) -> np.ndarray:
    """For each candidate row, whether any real spline segment reaches an obstacle sphere."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    j = layout.slot(oid)
    q = layout.obstacle_inner_query(j)
    out = np.zeros(len(rows), dtype=bool)
    kern.under_kernel(rows, layout.E_minus, layout.seg_mask, layout.spline_radius, layout.slot_lo,
                      layout.slot_hi, layout.O_minus_c[j], float(layout.O_minus_r[j]), q.min, q.max, out)
    return out


def batch_sat(a_center, a_axes, a_half, b_center, b_axes, b_half) -> np.ndarray:
    """Pairwise box intersection over stacked boxes, same arithmetic as the scalar test."""
    args = [np.ascontiguousarray(x, dtype=np.float64) for x in (a_center, a_axes, a_half, b_center, b_axes, b_half)]
    out = np.zeros(len(args[0]), dtype=bool)
    kern.sat_pairs(*args, out)
    return out


def batch_segment_sphere(seg_a, seg_b, centers, reach) -> np.ndarray:
    """Pairwise closed segment-sphere test, ``dist <= reach``."""
    return segment_point_distance_batch(seg_a, seg_b, centers) <= np.asarray(reach)


@dataclass(eq=False)
class LabelBuffer:
    """Component states plus the per-component obstacle bitset."""

    states: np.ndarray
    bits: np.ndarray
    obstacle_ids: list

    @classmethod
    def empty(cls, n: int, obstacle_ids) -> "LabelBuffer":
        ids = list(obstacle_ids)
        return cls(np.zeros(n, dtype=np.int8), np.zeros((n, len(ids)), dtype=bool), ids)

    def intersections(self) -> list[set]:
        ids = self.obstacle_ids
        return [{ids[j] for j in np.flatnonzero(row)} for row in self.bits]

    def equals(self, states: np.ndarray, intersections: list[set]) -> bool:
        return np.array_equal(self.states, states) and self.intersections() == intersections

    def diff(self, states: np.ndarray, intersections: list[set], limit: int = 10) -> list[str]:
        out = []
        mine = self.intersections()
        for cid in range(len(self.states)):
            if self.states[cid] != states[cid] or mine[cid] != intersections[cid]:
                out.append(f"component {cid}: batch state {self.states[cid]} list {sorted(map(repr, mine[cid]))}; "
                           f"sequential state {states[cid]} list {sorted(map(repr, intersections[cid]))}")
                if len(out) >= limit:
                    break
        return out


def _us(t0: float) -> float:
    return (time.perf_counter() - t0) * 1e6


class BatchEngine:
    """Batched engine with the same labels as `RggEngine` for any move sequence."""

    def __init__(self, roadmap: Roadmap, geoms: GeometrySet, scene: Scene,
                 resolver: Resolver | None = None, under_phase: bool = True, lazy: bool = True,
                 cell_capacity: int = DEFAULT_CELL_CAPACITY, layout: BatchLayout | None = None):
        self.roadmap = roadmap
        self.geoms = geoms
        self.under_phase = under_phase
        self._resolver = resolver
        self.layout = layout or serialize(geoms, scene.obstacles)
        self.labels = LabelBuffer.empty(roadmap.n_components, self.layout.obstacle_ids)
        self.is_edge = np.arange(roadmap.n_components) >= roadmap.n_nodes
        lo, hi = self.layout.component_bounds()
        self.grid: SpatialGrid = grid_build(lo, hi, scene.bounds, cell_capacity)
        self.scene = Scene(scene.bounds, scene.robot, {})
        self._components = None
        self._prev = self.labels.states.copy()
        for oid, o in scene.obstacles.items():
            self.insert_obstacle(oid, o, lazy=lazy)

    @property
    def obstacles(self) -> dict:
        return self.scene.obstacles

    def states(self) -> np.ndarray:
        return self.labels.states.copy()

    def intersections(self) -> list[set]:
        return self.labels.intersections()

    def exact_valid(self, cid: int) -> bool:
        if self._resolver is not None:
            return self._resolver(cid, self.scene)
        if self._components is None:
            self._components = make_components(self.roadmap, self.geoms)
        return exact_component_valid(self._components[cid], self.scene, self.geoms.eps)

    # ----------------------------------------------------------- phases

    def revalidate(self, j: int) -> np.ndarray:
        lab = self.labels
        rows = np.flatnonzero(lab.bits[:, j])
        if len(rows) == 0:
            return rows
        lab.bits[rows, j] = False
        rest = lab.bits[rows]
        listed = rest.any(axis=1)
        lab.states[rows[~listed]] = VALID
        lab.states[rows[listed]] = UNKNOWN
        if self.under_phase:
            for k in np.flatnonzero(rest.any(axis=0)):
                sub = rows[rest[:, k]]
                hit = batch_under(self.layout, sub, self.layout.obstacle_ids[k])
                lab.states[sub[hit]] = INVALID
        return rows

    def _place(self, oid, j: int, lazy: bool, report: UpdateReport, touched: np.ndarray) -> UpdateReport:
        lab, layout = self.labels, self.layout
        t0 = time.perf_counter()
        cand = grid_candidates(self.grid, layout.obstacle_query(j))
        over_hits = cand[batch_over(layout, cand, oid)]
        lab.bits[over_hits, j] = True
        st = lab.states[over_hits]
        lab.states[over_hits[st == VALID]] = UNKNOWN
        report.over_candidates = len(cand)
        report.over_us = _us(t0)
        under_hits = np.zeros(0, dtype=np.int64)
        t0 = time.perf_counter()
        if self.under_phase:
            # the sphere box lies inside the outer box, so its cells are among those already gathered
            under_hits = cand[batch_under(layout, cand, oid)]
            lab.bits[under_hits, j] = True
            lab.states[under_hits] = INVALID
            report.under_candidates = len(cand)
        report.under_us = _us(t0)
        gray = lab.states == UNKNOWN
        report.pending_unknown = int(np.count_nonzero(gray))
        report.pending_unknown_edges = int(np.count_nonzero(gray & self.is_edge))
        rows_all = np.union1d(np.union1d(touched, over_hits), under_hits)
        old_all = self._prev[rows_all]
        t0 = time.perf_counter()
        if not lazy:
            for cid in np.union1d(touched, over_hits).tolist():
                if lab.states[cid] == UNKNOWN:
                    lab.states[cid] = VALID if self.exact_valid(cid) else INVALID
                    report.resolved += 1
        report.resolve_us = _us(t0)
        new_all = lab.states[rows_all]
        changed = new_all != old_all
        report.newly_valid = int(np.count_nonzero(changed & (new_all == VALID)))
        report.newly_invalid = int(np.count_nonzero(changed & (new_all == INVALID)))
        report.newly_unknown = int(np.count_nonzero(changed & (new_all == UNKNOWN)))
        gray = lab.states == UNKNOWN
        report.unknown_after = int(np.count_nonzero(gray))
        report.unknown_edges_after = int(np.count_nonzero(gray & self.is_edge))
        return report

    # -------------------------------------------------------------- api

    def update_obstacle(self, oid, t: Transform, lazy: bool = True) -> UpdateReport:
        if oid not in self.obstacles:
            raise KeyError(f"unknown obstacle id {oid!r}")
        j = self.layout.slot(oid)
        report = UpdateReport(oid)
        self._prev = self.labels.states.copy()
        t0 = time.perf_counter()
        touched = self.revalidate(j)
        report.revalidate_us = _us(t0)
        t0 = time.perf_counter()
        update_transforms(self.layout, [(oid, t)])
        self.obstacles[oid] = self.obstacles[oid].moved(t)
        report.transform_us = _us(t0)
        return self._place(oid, j, lazy, report, touched)

    def insert_obstacle(self, oid, o: ObstacleModel, lazy: bool = True) -> UpdateReport:
        if oid in self.obstacles:
            raise KeyError(f"obstacle id {oid!r} already present")
        j = self.layout.slot(oid)
        set_pose(self.layout, oid, o.pose)
        self.obstacles[oid] = o
        self._prev = self.labels.states.copy()
        return self._place(oid, j, lazy, UpdateReport(oid), np.zeros(0, dtype=np.int64))

    def batch_update(self, moves, lazy: bool = True) -> list[UpdateReport]:
        """Process ``(obstacle id, Transform)`` moves in order; one report per move."""
        return [self.update_obstacle(oid, t, lazy) for oid, t in moves]

    def resolve_all(self) -> int:
        n = 0
        for cid in np.flatnonzero(self.labels.states == UNKNOWN).tolist():
            self.labels.states[cid] = VALID if self.exact_valid(cid) else INVALID
            n += 1
        return n


def batch_update(engine: BatchEngine, moves, lazy: bool = True) -> list[UpdateReport]:
    return engine.batch_update(moves, lazy)
