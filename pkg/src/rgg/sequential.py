"""Reference red/green/gray update engine built on two AABB trees.

The over tree holds one leaf per (component, body) outer box; the under
tree one leaf per (component, body, sphere) spline.  Each obstacle update
revalidates the components the obstacle previously overlapped, moves it,
marks over-hits gray and under-hits red, and in eager mode settles the
remaining grays with the exact oracle.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import Aabb, Transform, _sat_separated, _segment_point_distance, aabb_of_obb
from .roadmap import (
    Component,
    GeometrySet,
    Roadmap,
    Scene,
    ValidityState,
    exact_component_valid,
    make_components,
)
from .swept import EdgeGeometry, ObstacleModel
from .tree import AabbTree

VALID, INVALID, UNKNOWN = ValidityState.VALID, ValidityState.INVALID, ValidityState.UNKNOWN

# broadphase boxes are grown by this fraction of their size (at least of 1 unit)
BROADPHASE_PAD_REL = 1e-9

Resolver = Callable[[int, Scene], bool]


def pad_box(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scale = np.maximum(1.0, np.max(np.abs(np.concatenate([lo, hi], axis=-1)), axis=-1, keepdims=True))
    pad = BROADPHASE_PAD_REL * scale
    return lo - pad, hi + pad


def padded_aabb(box: Aabb) -> Aabb:
    lo, hi = pad_box(box.min, box.max)
    return Aabb(lo, hi)


@dataclass
class UpdateReport:
    """Outcome of one obstacle update.

    ``newly_*`` count components whose state differs from before the update.
    ``pending_unknown`` is the gray count after the approximation phases and
    before exact resolution; ``unknown_after`` is the final gray count.
    """

    obstacle: object
    newly_valid: int = 0
    newly_invalid: int = 0
    newly_unknown: int = 0
    pending_unknown: int = 0
    pending_unknown_edges: int = 0
    unknown_after: int = 0
    unknown_edges_after: int = 0
    resolved: int = 0
    over_candidates: int = 0
    under_candidates: int = 0
    revalidate_us: float = 0.0
    transform_us: float = 0.0
    over_us: float = 0.0
    under_us: float = 0.0
    resolve_us: float = 0.0

    @property
    def heuristic_us(self) -> float:
        return self.revalidate_us + self.transform_us + self.over_us + self.under_us

    @property
    def total_us(self) -> float:
        return self.heuristic_us + self.resolve_us


def _us(t0: float) -> float:
    return (time.perf_counter() - t0) * 1e6


def narrow_over_test(o: ObstacleModel, g: EdgeGeometry) -> bool:
    """Whether any body box of `g` meets the obstacle box (separating-axis test)."""
    oc = o.outer
    ca, A, ha = oc.center.tolist(), oc.axes.tolist(), oc.half_extents.tolist()
    return any(
        not _sat_separated(ca, A, ha, b.center.tolist(), b.axes.tolist(), b.half_extents.tolist())
        for b in g.over
    )


def _segments_hit(segs: list, radius: float, centers: list, r_obs: float) -> bool:
    reach = r_obs + radius
    for a, b in segs:
        for c in centers:
            if _segment_point_distance(a, b, c) <= reach:
                return True
    return False


def narrow_under_test(o: ObstacleModel, g: EdgeGeometry) -> bool:
    """Whether any spline of `g`, thickened by its radius, touches an obstacle sphere."""
    centers = o.inner_centers.tolist()
    for _, _, spline in g.splines():
        if _segments_hit(spline.segments().tolist(), spline.radius, centers, o.radius):
            return True
    return False


class RggEngine:
    """Sequential engine; owns the component labels of one roadmap.

    Parameters
    ----------
    roadmap, geoms : the roadmap and its approximations
    scene : obstacles present at start are inserted through `insert_obstacle`
    resolver : exact validity check ``(component id, scene) -> bool``; defaults
        to discretized box-vs-box checking at the geometry's resolution
    under_phase : disable to get the outer-approximation-only baseline
    """

    def __init__(self, roadmap: Roadmap, geoms: GeometrySet, scene: Scene,
                 resolver: Resolver | None = None, under_phase: bool = True, lazy: bool = True):
        self.roadmap = roadmap
        self.geoms = geoms
        self.scene = Scene(scene.bounds, scene.robot, {})
        self.components: list[Component] = make_components(roadmap, geoms)
        self.under_phase = under_phase
        self._resolver = resolver
        self.n_unknown = 0
        self.n_unknown_edges = 0
        self._members: dict = {}  # obstacle id -> ids of components listing it
        self._build_trees()
        for oid, o in scene.obstacles.items():
            self.insert_obstacle(oid, o, lazy=lazy)

    # ------------------------------------------------------------ setup

    def _build_trees(self) -> None:
        over_lo, over_hi, over_ids, self._over_leaf = [], [], [], []
        under_lo, under_hi, under_ids, self._under_leaf = [], [], [], []
        self._splines_of: list[list] = [[] for _ in self.components]
        for c in self.components:
            for b, box in enumerate(c.geometry.over):
                bb = aabb_of_obb(box)
                over_lo.append(bb.min)
                over_hi.append(bb.max)
                over_ids.append(c.id)
                self._over_leaf.append((c.id, box.center.tolist(), box.axes.tolist(), box.half_extents.tolist()))
            for b, s, spline in c.geometry.splines():
                bb = spline.aabb()
                under_lo.append(bb.min)
                under_hi.append(bb.max)
                under_ids.append(c.id)
                self._under_leaf.append((c.id, spline.segments().tolist(), spline.radius))
                self._splines_of[c.id].append(self._under_leaf[-1])
        self.over_tree = AabbTree(*pad_box(np.array(over_lo), np.array(over_hi)), over_ids)
        self.under_tree = AabbTree(*pad_box(np.array(under_lo), np.array(under_hi)), under_ids)

    @property
    def obstacles(self) -> dict:
        return self.scene.obstacles

    def states(self) -> np.ndarray:
        return np.array([int(c.state) for c in self.components], dtype=np.int8)

    def intersections(self) -> list[set]:
        return [set(c.over_intersecting) for c in self.components]

    def membership_bits(self, obstacle_ids) -> np.ndarray:
        """(components, obstacles) bool table of the intersection lists, columns in `obstacle_ids` order."""
        bits = np.zeros((len(self.components), len(obstacle_ids)), dtype=bool)
        for j, oid in enumerate(obstacle_ids):
            cids = self._members.get(oid)
            if cids:
                bits[list(cids), j] = True
        return bits

    def _set_state(self, c: Component, s: ValidityState) -> None:
        if c.state == s:
            return
        if c.state == UNKNOWN:
            self.n_unknown -= 1
            self.n_unknown_edges -= c.kind == "edge"
        if s == UNKNOWN:
            self.n_unknown += 1
            self.n_unknown_edges += c.kind == "edge"
        c.state = s

    def exact_valid(self, cid: int) -> bool:
        if self._resolver is not None:
            return self._resolver(cid, self.scene)
        return exact_component_valid(self.components[cid], self.scene, self.geoms.eps)

    # ----------------------------------------------------------- phases

    def _under_hits_component(self, cid: int, o: ObstacleModel) -> bool:
        centers = o.inner_centers.tolist()
        return any(_segments_hit(segs, radius, centers, o.radius) for _, segs, radius in self._splines_of[cid])

    def _list_add(self, c: Component, oid) -> None:
        c.over_intersecting.add(oid)
        self._members.setdefault(oid, set()).add(c.id)

    def revalidate_old_intersections(self, oid) -> list[int]:
        """Drop `oid` from every component list that holds it; returns those ids, ascending."""
        touched = sorted(self._members.pop(oid, ()))
        for cid in touched:
            c = self.components[cid]
            c.over_intersecting.discard(oid)
            if not c.over_intersecting:
                self._set_state(c, VALID)
                continue
            self._set_state(c, UNKNOWN)
            if self.under_phase and any(
                self._under_hits_component(cid, self.obstacles[other]) for other in c.over_intersecting
            ):
                self._set_state(c, INVALID)
        return touched

    def _over_hits(self, o: ObstacleModel) -> tuple[list[int], int]:
        items = self.over_tree.query_items(padded_aabb(aabb_of_obb(o.outer)))
        oc = o.outer
        ca, A, ha = oc.center.tolist(), oc.axes.tolist(), oc.half_extents.tolist()
        hits = set()
        for i in items:
            cid, cb, B, hb = self._over_leaf[i]
            if cid in hits:
                continue
            if not _sat_separated(ca, A, ha, cb, B, hb):
                hits.add(cid)
        return sorted(hits), len(items)

    def _under_hits(self, o: ObstacleModel) -> tuple[list[int], int]:
        items = self.under_tree.query_items(padded_aabb(o.inner_aabb()))
        centers = o.inner_centers.tolist()
        r_obs = o.radius
        hits = set()
        for i in items:
            cid, segs, radius = self._under_leaf[i]
            if cid in hits:
                continue
            if _segments_hit(segs, radius, centers, r_obs):
                hits.add(cid)
        return sorted(hits), len(items)

    def _place(self, oid, o: ObstacleModel, lazy: bool, report: UpdateReport, touched: list[int],
               before: dict) -> UpdateReport:
        t0 = time.perf_counter()
        over_hits, report.over_candidates = self._over_hits(o)
        for cid in over_hits:
            c = self.components[cid]
            before.setdefault(cid, c.state)
            self._list_add(c, oid)
            if c.state == VALID:
                self._set_state(c, UNKNOWN)
        report.over_us = _us(t0)
        t0 = time.perf_counter()
        if self.under_phase:
            under_hits, report.under_candidates = self._under_hits(o)
            for cid in under_hits:
                c = self.components[cid]
                before.setdefault(cid, c.state)
                self._list_add(c, oid)
                self._set_state(c, INVALID)
        report.under_us = _us(t0)
        report.pending_unknown = self.n_unknown
        report.pending_unknown_edges = self.n_unknown_edges
        t0 = time.perf_counter()
        if not lazy:
            for cid in sorted(set(touched) | set(over_hits)):
                c = self.components[cid]
                if c.state == UNKNOWN:
                    self._set_state(c, VALID if self.exact_valid(cid) else INVALID)
                    report.resolved += 1
        report.resolve_us = _us(t0)
        for cid, old in before.items():
            new = self.components[cid].state
            if new != old:
                if new == VALID:
                    report.newly_valid += 1
                elif new == INVALID:
                    report.newly_invalid += 1
                else:
                    report.newly_unknown += 1
        report.unknown_after = self.n_unknown
        report.unknown_edges_after = self.n_unknown_edges
        return report

    # -------------------------------------------------------------- api

    def update_obstacle(self, oid, t: Transform, lazy: bool = True) -> UpdateReport:
        """Move obstacle `oid` by `t` (applied on top of its current pose) and relabel."""
        if oid not in self.obstacles:
            raise KeyError(f"unknown obstacle id {oid!r}")
        report = UpdateReport(oid)
        t0 = time.perf_counter()
        before = {cid: self.components[cid].state for cid in self._members.get(oid, ())}
        touched = self.revalidate_old_intersections(oid)
        report.revalidate_us = _us(t0)
        t0 = time.perf_counter()
        o = self.obstacles[oid].moved(t)
        self.obstacles[oid] = o
        report.transform_us = _us(t0)
        return self._place(oid, o, lazy, report, touched, before)

    def insert_obstacle(self, oid, o: ObstacleModel, lazy: bool = True) -> UpdateReport:
        """Add a new obstacle at its current pose; processed like an update with nothing to revalidate."""
        if oid in self.obstacles:
            raise KeyError(f"obstacle id {oid!r} already present")
        self.obstacles[oid] = o
        return self._place(oid, o, lazy, UpdateReport(oid), [], {})

    def resolve_all(self) -> int:
        """Settle every gray component with the exact check; returns how many."""
        n = 0
        for c in self.components:
            if c.state == UNKNOWN:
                self._set_state(c, VALID if self.exact_valid(c.id) else INVALID)
                n += 1
        return n


def update_obstacle(engine: RggEngine, o, t: Transform, lazy: bool = True) -> UpdateReport:
    return engine.update_obstacle(o, t, lazy)


def revalidate_old_intersections(engine: RggEngine, o) -> list[int]:
    return engine.revalidate_old_intersections(o)
