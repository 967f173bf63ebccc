"""Robot models, edge discretization and swept-volume approximations.

Every roadmap component gets two approximations of the volume its robot
sweeps: one oriented box per body that contains the motion (outer), and one
polyline per body sphere tracing that sphere's center (inner).  Obstacles get
the same treatment through `ObstacleModel`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from ._kernels import shortcut_indices
from .geometry import (
    Aabb,
    Obb,
    Sphere,
    Transform,
    _segment_point_distance,
    as_vec3,
    axis_angle_matrices,
    euler_xyz_matrices,
    obb_from_points,
    transform_points,
    transform_points_batch,
)

DEFAULT_K = 16

# outer boxes grow by this fraction of their size so rounding never exposes a body corner
OUTER_PAD_REL = 1e-9


@dataclass(frozen=True, eq=False)
class BoxBody:
    """A box centered on the origin of its own frame; `local` places that frame on its link."""

    half_extents: np.ndarray
    local: Transform = field(default_factory=Transform)

    def __post_init__(self):
        h = as_vec3(self.half_extents, "half_extents")
        if np.any(h <= 0):
            raise ValueError("body half-extents must be positive")
        object.__setattr__(self, "half_extents", h)

    @cached_property
    def local_corners(self) -> np.ndarray:
        return Obb(np.zeros(3), np.eye(3), self.half_extents).corners()


@dataclass(frozen=True)
class FreeFlying:
    """Six DOFs: translation x, y, z then fixed-axis XYZ Euler angles (radians)."""

    rotation_limits: tuple = (-math.pi, math.pi)

    @property
    def dof(self) -> int:
        return 6


@dataclass(frozen=True, eq=False)
class Joint:
    axis: np.ndarray
    offset: np.ndarray  # joint origin in the parent link frame

    def __post_init__(self):
        a = as_vec3(self.axis, "axis")
        if np.linalg.norm(a) == 0:
            raise ValueError("joint axis must be nonzero")
        object.__setattr__(self, "axis", a / np.linalg.norm(a))
        object.__setattr__(self, "offset", as_vec3(self.offset, "offset"))


@dataclass(frozen=True, eq=False)
class SerialChain:
    """Revolute chain; body i rides on the link after joint i."""

    joints: tuple
    base: Transform = field(default_factory=Transform)
    limits: tuple = (-math.pi, math.pi)

    @property
    def dof(self) -> int:
        return len(self.joints)


Kinematics = Union[FreeFlying, SerialChain]


@dataclass(frozen=True, eq=False)
class RobotModel:
    bodies: tuple
    kinematics: Kinematics = field(default_factory=FreeFlying)

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        if len(self.bodies) < 1:
            raise ValueError("a robot needs at least one body")
        if isinstance(self.kinematics, SerialChain) and len(self.kinematics.joints) != len(self.bodies):
            raise ValueError("a serial chain needs one body per joint")

    @classmethod
    def free_box(cls, half_extents=(0.5, 0.5, 0.5)) -> "RobotModel":
        return cls((BoxBody(half_extents),), FreeFlying())

    @classmethod
    def arm(cls, n_links: int = 6, link_length: float = 1.0, link_half_width: float = 0.15,
            base: Transform | None = None) -> "RobotModel":
        """Planar-ish manipulator: joints alternate about z and y, links extend along x."""
        joints, bodies = [], []
        for i in range(n_links):
            axis = (0.0, 0.0, 1.0) if i % 2 == 0 else (0.0, 1.0, 0.0)
            offset = (0.0, 0.0, 0.0) if i == 0 else (link_length, 0.0, 0.0)
            joints.append(Joint(axis, offset))
            bodies.append(BoxBody(
                (0.5 * link_length, link_half_width, link_half_width),
                Transform.from_translation((0.5 * link_length, 0.0, 0.0)),
            ))
        return cls(tuple(bodies), SerialChain(tuple(joints), base or Transform()))

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)

    @property
    def dof(self) -> int:
        return self.kinematics.dof

    @property
    def min_half_extent(self) -> float:
        return float(min(b.half_extents.min() for b in self.bodies))

    def default_epsilon(self) -> float:
        return 0.1 * self.min_half_extent

    def dof_bounds(self, env: Aabb) -> tuple[np.ndarray, np.ndarray]:
        kin = self.kinematics
        if isinstance(kin, FreeFlying):
            lo = np.concatenate([env.min, np.full(3, kin.rotation_limits[0])])
            hi = np.concatenate([env.max, np.full(3, kin.rotation_limits[1])])
            return lo, hi
        return np.full(kin.dof, kin.limits[0], dtype=float), np.full(kin.dof, kin.limits[1], dtype=float)

    def body_poses(self, cfgs) -> tuple[np.ndarray, np.ndarray]:
        """World poses of every body for a stack of configurations.

        Returns rotations of shape (T, B, 3, 3) and translations (T, B, 3).
        """
        C = np.asarray(cfgs, dtype=np.float64).reshape(-1, self.dof)
        T = len(C)
        kin = self.kinematics
        if isinstance(kin, FreeFlying):
            Rr = euler_xyz_matrices(C[:, 3:6])
            tr = C[:, :3]
            link_R = [Rr] * self.n_bodies
            link_t = [tr] * self.n_bodies
        else:
            R = np.broadcast_to(kin.base.rotation, (T, 3, 3))
            t = np.broadcast_to(kin.base.translation, (T, 3))
            link_R, link_t = [], []
            for i, joint in enumerate(kin.joints):
                t = np.einsum("tij,j->ti", R, joint.offset) + t
                R = R @ axis_angle_matrices(joint.axis, C[:, i])
                link_R.append(R)
                link_t.append(t)
        Rs = np.empty((T, self.n_bodies, 3, 3))
        ts = np.empty((T, self.n_bodies, 3))
        for b, body in enumerate(self.bodies):
            Rs[:, b] = link_R[b] @ body.local.rotation
            ts[:, b] = np.einsum("tij,j->ti", link_R[b], body.local.translation) + link_t[b]
        return Rs, ts

    def body_corners(self, cfgs) -> np.ndarray:
        """Box corners of every body, shape (T, B, 8, 3)."""
        R, t = self.body_poses(cfgs)
        out = np.empty(R.shape[:2] + (8, 3))
        for b, body in enumerate(self.bodies):
            out[:, b] = transform_points_batch(R[:, b], t[:, b], body.local_corners)
        return out


def discretize_edge(a, b, eps: float) -> np.ndarray:
    """Linearly interpolated configurations from `a` to `b` at most `eps` apart.

    The count is ``max(2, ceil(|b - a| / eps) + 1)`` with the Euclidean norm
    taken over raw DOF values.
    """
    if not eps > 0:
        raise ValueError("resolution eps must be positive")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("configurations differ in DOF count")
    n = max(2, math.ceil(float(np.linalg.norm(b - a)) / eps) + 1)
    s = np.linspace(0.0, 1.0, n)[:, None]
    out = a + s * (b - a)
    out[0] = a
    out[-1] = b
    return out


def forward_kinematics(m: RobotModel, c) -> list[Transform]:
    R, t = m.body_poses(np.asarray(c, dtype=np.float64)[None])
    return [Transform(R[0, b], t[0, b]) for b in range(m.n_bodies)]


# -------------------------------------------------------------- sphere sets


def box_inner_spheres(half_extents, count: int) -> list[Sphere]:
    """Equal spheres inscribed in a box, spread evenly along its longest axis."""
    h = as_vec3(half_extents, "half_extents")
    if count < 1:
        raise ValueError("need at least one sphere")
    if np.any(h <= 0):
        raise ValueError("half-extents must be positive")
    r = float(h.min())
    axis = int(np.argmax(h))
    span = float(h[axis]) - r
    offsets = [0.0] if count == 1 else np.linspace(-span, span, count)
    spheres = []
    for off in offsets:
        c = np.zeros(3)
        c[axis] = off
        spheres.append(Sphere(c, r))
    return spheres


def obstacle_inner_spheres(half_extents, count: int) -> list[Sphere]:
    return box_inner_spheres(half_extents, count)


def default_sphere_count(half_extents) -> int:
    h = as_vec3(half_extents)
    return max(1, math.ceil(float(h.max() / h.min())))


@dataclass(frozen=True, eq=False)
class BodySpheres:
    """Per-body sphere sets, in each body's own frame."""

    spheres: tuple

    def __post_init__(self):
        object.__setattr__(self, "spheres", tuple(tuple(s) for s in self.spheres))

    @classmethod
    def for_robot(cls, m: RobotModel, per_body: int | None = None) -> "BodySpheres":
        return cls(tuple(
            box_inner_spheres(b.half_extents, per_body or default_sphere_count(b.half_extents))
            for b in m.bodies
        ))

    @property
    def per_body(self) -> int:
        return max(len(s) for s in self.spheres)

    def contained_in(self, m: RobotModel) -> bool:
        for body, spheres in zip(m.bodies, self.spheres):
            for s in spheres:
                if np.any(np.abs(s.center) + s.radius > body.half_extents):
                    return False
        return True


# ----------------------------------------------------------------- splines


@dataclass(frozen=True, eq=False)
class Spline:
    """Polyline through a sphere's successive centers, with that sphere's radius."""

    points: np.ndarray
    radius: float

    def __post_init__(self):
        P = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if len(P) < 1:
            raise ValueError("a spline needs at least one point")
        if not np.all(np.isfinite(P)):
            raise ValueError("spline points must be finite")
        if len(P) > 1 and np.any(np.all(P[1:] == P[:-1], axis=1)):
            raise ValueError("consecutive spline points must differ")
        if not self.radius > 0:
            raise ValueError("spline radius must be positive")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n_segments(self) -> int:
        return max(1, len(self.points) - 1)

    def segments(self) -> np.ndarray:
        """Segment endpoints (n_segments, 2, 3); a single point is one degenerate segment."""
        P = self.points
        if len(P) == 1:
            return np.stack([P, P], axis=1)
        return np.stack([P[:-1], P[1:]], axis=1)

    def aabb(self) -> Aabb:
        return Aabb(self.points.min(axis=0) - self.radius, self.points.max(axis=0) + self.radius)

    def __eq__(self, other):
        if not isinstance(other, Spline):
            return NotImplemented
        return self.radius == other.radius and np.array_equal(self.points, other.points)

    __hash__ = None


def _drop_repeats(points: np.ndarray) -> np.ndarray:
    if len(points) < 2:
        return points
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(points[1:] != points[:-1], axis=1)
    return points[keep]


def simplify_spline(points, radius: float) -> np.ndarray:
    """Greedy forward shortcutting of a polyline.

    From the current kept point, the next kept point is pushed forward while
    every skipped point stays strictly closer than `radius` to the shortcut.
    First and last points are always kept.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    P = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if len(P) < 1:
        raise ValueError("need at least one point")
    if len(P) <= 2:
        return P.copy()
    return P[shortcut_indices(P, float(radius))]


def shortcut_violations(raw, kept, radius: float) -> int:
    """Count raw points that are not strictly within `radius` of their covering shortcut.

    `kept` must be a subsequence of `raw` containing its first and last point.
    """
    raw = np.asarray(raw, dtype=np.float64).reshape(-1, 3)
    kept = np.asarray(kept, dtype=np.float64).reshape(-1, 3)
    bad = 0
    i = 0
    for s in range(len(kept) - 1):
        a, b = kept[s], kept[s + 1]
        while not np.array_equal(raw[i], a):
            i += 1
        i += 1
        while not np.array_equal(raw[i], b):
            if not _segment_point_distance(a.tolist(), b.tolist(), raw[i].tolist()) < radius:
                bad += 1
            i += 1
    return bad


def cap_spline(raw: np.ndarray, simplified: np.ndarray, radius: float, K: int) -> np.ndarray:
    """Fit a simplified spline into at most `K` segments when the criterion allows.

    Splines already within the cap pass through.  Otherwise an even
    subsample of the raw centers is tried and kept only if every dropped
    center still satisfies the shortcut criterion; failing that the long
    spline is returned and the batch layout spreads it over extra rows.
    """
    if len(simplified) - 1 <= K:
        return simplified
    idx = np.unique(np.round(np.linspace(0, len(raw) - 1, K + 1)).astype(int))
    candidate = raw[idx]
    if shortcut_violations(raw, candidate, radius) == 0:
        return candidate
    return simplified


# ---------------------------------------------------------- approximations


def build_outer_approx(m: RobotModel, cfgs) -> list[Obb]:
    """One box per body around all of that body's corners along `cfgs`."""
    return _outer_from_poses(m, *m.body_poses(cfgs))


def _outer_from_poses(m: RobotModel, R: np.ndarray, t: np.ndarray) -> list[Obb]:
    if len(R) == 0:
        raise ValueError("need at least one configuration")
    return [
        obb_from_points(transform_points_batch(R[:, b], t[:, b], body.local_corners).reshape(-1, 3))
        for b, body in enumerate(m.bodies)
    ]


def build_inner_approx(m: RobotModel, spheres: BodySpheres, cfgs, K: int | None = None) -> list[list[Spline]]:
    """Simplified center polylines for every (body, sphere)."""
    return _inner_from_poses(spheres, *m.body_poses(cfgs), K)


def _inner_from_poses(spheres: BodySpheres, R: np.ndarray, t: np.ndarray, K: int | None) -> list[list[Spline]]:
    if len(R) == 0:
        raise ValueError("need at least one configuration")
    out = []
    for b, body_spheres in enumerate(spheres.spheres):
        centers = transform_points_batch(R[:, b], t[:, b], np.array([s.center for s in body_spheres]))
        row = []
        for s, sphere in enumerate(body_spheres):
            raw = _drop_repeats(centers[:, s])
            pts = simplify_spline(raw, sphere.radius)
            if K is not None:
                pts = cap_spline(raw, pts, sphere.radius, K)
            row.append(Spline(pts, sphere.radius))
        out.append(row)
    return out


def padded_outer(box: Obb) -> Obb:
    return box.padded(OUTER_PAD_REL * max(1.0, float(box.half_extents.max())))


@dataclass(eq=False)
class EdgeGeometry:
    """Both approximations of one roadmap component.

    `over_corners` (B, 8, 3) is the stored form of the outer boxes; `over`
    is derived from it so every consumer sees the same box bits.
    """

    over_corners: np.ndarray
    under: tuple

    def __post_init__(self):
        self.over_corners = np.asarray(self.over_corners, dtype=np.float64).reshape(-1, 8, 3)
        self.under = tuple(tuple(row) for row in self.under)
        self.over = tuple(Obb.from_corners(c) for c in self.over_corners)

    @property
    def n_bodies(self) -> int:
        return len(self.over_corners)

    def splines(self):
        for b, row in enumerate(self.under):
            for s, spline in enumerate(row):
                yield b, s, spline

    def aabb(self) -> Aabb:
        lo = self.over_corners.reshape(-1, 3).min(axis=0)
        hi = self.over_corners.reshape(-1, 3).max(axis=0)
        return Aabb(lo, hi)

    def __eq__(self, other):
        if not isinstance(other, EdgeGeometry):
            return NotImplemented
        return np.array_equal(self.over_corners, other.over_corners) and self.under == other.under

    __hash__ = None


def build_edge_geometry(m: RobotModel, spheres: BodySpheres, cfgs, K: int | None = DEFAULT_K) -> EdgeGeometry:
    R, t = m.body_poses(cfgs)
    over = [padded_outer(o).corners() for o in _outer_from_poses(m, R, t)]
    return EdgeGeometry(np.array(over), _inner_from_poses(spheres, R, t, K))


def build_geometries(m: RobotModel, spheres: BodySpheres, starts, ends, eps: float,
                     K: int | None = DEFAULT_K) -> list[EdgeGeometry]:
    """Geometry for a list of components given by endpoint configurations."""
    return [
        build_edge_geometry(m, spheres, discretize_edge(a, b, eps), K)
        for a, b in zip(np.asarray(starts), np.asarray(ends))
    ]


# ---------------------------------------------------------------- obstacles


@dataclass(frozen=True, eq=False)
class ObstacleModel:
    """Box obstacle with its inscribed spheres, placed by `pose`.

    Posed geometry is always recomputed from the canonical (unposed) box,
    so repeated moves never accumulate rounding drift.
    """

    half_extents: np.ndarray
    n_spheres: int = 0
    pose: Transform = field(default_factory=Transform)

    def __post_init__(self):
        h = as_vec3(self.half_extents, "half_extents")
        if np.any(h <= 0):
            raise ValueError("obstacle half-extents must be positive")
        object.__setattr__(self, "half_extents", h)
        if not self.n_spheres:
            object.__setattr__(self, "n_spheres", default_sphere_count(h))

    @cached_property
    def canonical_corners(self) -> np.ndarray:
        return Obb(np.zeros(3), np.eye(3), self.half_extents).corners()

    @cached_property
    def canonical_spheres(self) -> list[Sphere]:
        return obstacle_inner_spheres(self.half_extents, self.n_spheres)

    @cached_property
    def canonical_centers(self) -> np.ndarray:
        return np.array([s.center for s in self.canonical_spheres])

    @property
    def radius(self) -> float:
        return float(self.half_extents.min())

    @cached_property
    def outer_corners(self) -> np.ndarray:
        return transform_points(self.pose.rotation, self.pose.translation, self.canonical_corners)

    @cached_property
    def outer(self) -> Obb:
        return Obb.from_corners(self.outer_corners)

    @cached_property
    def inner_centers(self) -> np.ndarray:
        return transform_points(self.pose.rotation, self.pose.translation, self.canonical_centers)

    @property
    def inner(self) -> list[Sphere]:
        return [Sphere(c, self.radius) for c in self.inner_centers]

    def inner_aabb(self) -> Aabb:
        return Aabb(self.inner_centers.min(axis=0) - self.radius, self.inner_centers.max(axis=0) + self.radius)

    def moved(self, t: Transform) -> "ObstacleModel":
        """The same obstacle after applying `t` on top of its current pose."""
        return replace(self, pose=t.compose(self.pose))

    def placed(self, pose: Transform) -> "ObstacleModel":
        return replace(self, pose=pose)
