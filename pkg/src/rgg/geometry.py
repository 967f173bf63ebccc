"""Geometric primitives and predicates.

Boxes, spheres and segments are small immutable value types backed by
numpy arrays.  The scalar predicates here (`obb_intersects_obb`,
`segment_point_distance`) are written over plain Python floats with a fixed
operation order; `rgg.batch` evaluates the same expressions over arrays, and
the two must agree bit for bit.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ._kernels import descend_rotation_grid

Vec3 = np.ndarray

# cross-product SAT axes below this squared norm come from (near) parallel edges
AXIS_EPS2 = 1e-12

# corner i has sign +1 on axis k when bit k of i is set
CORNER_SIGNS = np.array(
    [[1.0 if (i >> k) & 1 else -1.0 for k in range(3)] for i in range(8)]
)


def as_vec3(x, name="vector") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite, got {v}")
    return v


_EYE3 = np.eye(3)


def _orthonormal(R: np.ndarray, tol: float = 1e-9) -> bool:
    return float(np.abs(R @ R.T - _EYE3).max()) <= tol


def _finite_array(x, shape, name) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).reshape(shape)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


@dataclass(frozen=True, eq=False)
class Transform:
    """Rigid motion ``x -> rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _finite_array(self.rotation, (3, 3), "rotation")
        t = as_vec3(self.translation, "translation")
        if not _orthonormal(R.T):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Transform":
        return cls()

    @classmethod
    def from_translation(cls, t) -> "Transform":
        return cls(np.eye(3), t)

    @classmethod
    def from_euler_xyz(cls, rx, ry, rz, translation=(0.0, 0.0, 0.0)) -> "Transform":
        return cls(euler_xyz_matrices(np.array([[rx, ry, rz]], dtype=float))[0], translation)

    @classmethod
    def from_axis_angle(cls, axis, angle, translation=(0.0, 0.0, 0.0)) -> "Transform":
        return cls(axis_angle_matrices(as_vec3(axis), np.array([angle], dtype=float))[0], translation)

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.rotation == np.eye(3)) and np.all(self.translation == 0.0))

    def compose(self, other: "Transform") -> "Transform":
        """Return ``self ∘ other`` (apply `other` first)."""
        return Transform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Transform":
        Rt = self.rotation.T
        return Transform(Rt, -(Rt @ self.translation))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __eq__(self, other):
        if not isinstance(other, Transform):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    __hash__ = None


def euler_xyz_matrices(angles: np.ndarray) -> np.ndarray:
    """Fixed-axis XYZ rotations, ``Rz(c) @ Ry(b) @ Rx(a)``, for rows ``(a, b, c)``."""
    angles = np.asarray(angles, dtype=np.float64)
    ca, cb, cc = np.cos(angles[..., 0]), np.cos(angles[..., 1]), np.cos(angles[..., 2])
    sa, sb, sc = np.sin(angles[..., 0]), np.sin(angles[..., 1]), np.sin(angles[..., 2])
    R = np.empty(angles.shape[:-1] + (3, 3))
    R[..., 0, 0] = cc * cb
    R[..., 0, 1] = cc * sb * sa - sc * ca
    R[..., 0, 2] = cc * sb * ca + sc * sa
    R[..., 1, 0] = sc * cb
    R[..., 1, 1] = sc * sb * sa + cc * ca
    R[..., 1, 2] = sc * sb * ca - cc * sa
    R[..., 2, 0] = -sb
    R[..., 2, 1] = cb * sa
    R[..., 2, 2] = cb * ca
    return R


def axis_angle_matrices(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues rotations about one fixed unit axis for an array of angles."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    angles = np.asarray(angles, dtype=np.float64)
    s = np.sin(angles)[..., None, None]
    c = np.cos(angles)[..., None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def transform_points(rotation: np.ndarray, translation: np.ndarray, points) -> np.ndarray:
    """Apply one rigid motion to points of shape ``(..., 3)``.

    Written out elementwise so identical inputs give identical bits on every
    call path; both update engines place obstacles through here.
    """
    R = rotation
    t = translation
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    out = np.empty(p.shape)
    out[..., 0] = R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + t[0]
    out[..., 1] = R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + t[1]
    out[..., 2] = R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + t[2]
    return out


def transform_points_batch(rotations: np.ndarray, translations: np.ndarray, points) -> np.ndarray:
    """Per-pose version of `transform_points`.

    rotations (n, 3, 3) and translations (n, 3) act on points (m, 3) shared by
    all poses, or (n, m, 3) per pose; the result is (n, m, 3).
    """
    R = rotations
    t = translations
    p = np.asarray(points, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    out = np.empty((len(R), p.shape[1], 3))
    for i in range(3):
        out[..., i] = (
            R[:, i, 0, None] * x + R[:, i, 1, None] * y + R[:, i, 2, None] * z + t[:, i, None]
        )
    return out


@dataclass(frozen=True, eq=False)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = as_vec3(self.min, "min")
        hi = as_vec3(self.max, "max")
        if np.any(lo > hi):
            raise ValueError("Aabb min must not exceed max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def from_points(cls, points) -> "Aabb":
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return cls(p.min(axis=0), p.max(axis=0))

    def overlaps(self, other: "Aabb") -> bool:
        """Closed overlap test: touching boxes overlap."""
        return bool(np.all(self.min <= other.max) and np.all(other.min <= self.max))

    def contains(self, points, slack: float = 0.0) -> bool:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return bool(np.all(p >= self.min - slack) and np.all(p <= self.max + slack))

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))

    def padded(self, pad: float) -> "Aabb":
        return Aabb(self.min - pad, self.max + pad)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    def __eq__(self, other):
        if not isinstance(other, Aabb):
            return NotImplemented
        return bool(np.array_equal(self.min, other.min) and np.array_equal(self.max, other.max))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Obb:
    """Oriented box; ``axes[k]`` is the k-th unit axis (a row)."""

    center: np.ndarray
    axes: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        c = as_vec3(self.center, "center")
        A = _finite_array(self.axes, (3, 3), "axes")
        h = as_vec3(self.half_extents, "half_extents")
        if np.any(h < 0):
            raise ValueError("half_extents must be nonnegative")
        if not _orthonormal(A):
            raise ValueError("Obb axes must be orthonormal")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "axes", A)
        object.__setattr__(self, "half_extents", h)

    @classmethod
    def from_aabb(cls, box: Aabb) -> "Obb":
        return cls(0.5 * (box.min + box.max), np.eye(3), 0.5 * (box.max - box.min))

    @classmethod
    def from_corners(cls, corners) -> "Obb":
        """Recover a box from its 8 corners in `corners()` order.

        Zero-length edges get a deterministic orthonormal completion.
        """
        K = np.asarray(corners, dtype=np.float64).reshape(8, 3).tolist()
        c0, c7 = K[0], K[7]
        center = [0.5 * (c0[0] + c7[0]), 0.5 * (c0[1] + c7[1]), 0.5 * (c0[2] + c7[2])]
        axes = [None, None, None]
        half = [0.0, 0.0, 0.0]
        for k in range(3):
            ck = K[1 << k]
            e = [ck[0] - c0[0], ck[1] - c0[1], ck[2] - c0[2]]
            n = math.sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2])
            half[k] = 0.5 * n
            if n > 0.0:
                axes[k] = [e[0] / n, e[1] / n, e[2] / n]
        return cls(center, _complete_frame(axes), half)

    def corners(self) -> np.ndarray:
        """8×3 corner array; corner i takes the + side of axis k when bit k is set."""
        c = self.center
        u = self.axes * self.half_extents[:, None]
        s = CORNER_SIGNS
        return (
            c[None, :]
            + s[:, 0, None] * u[0][None, :]
            + s[:, 1, None] * u[1][None, :]
            + s[:, 2, None] * u[2][None, :]
        )

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    def contains(self, points, slack: float = 0.0) -> bool:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        local = np.abs((p - self.center) @ self.axes.T)
        return bool(np.all(local <= self.half_extents + slack))

    def padded(self, pad: float) -> "Obb":
        return Obb(self.center, self.axes, self.half_extents + pad)

    def __eq__(self, other):
        if not isinstance(other, Obb):
            return NotImplemented
        return bool(
            np.array_equal(self.center, other.center)
            and np.array_equal(self.axes, other.axes)
            and np.array_equal(self.half_extents, other.half_extents)
        )

    __hash__ = None


def _complete_frame(axes: list) -> np.ndarray:
    missing = [k for k in range(3) if axes[k] is None]
    if not missing:
        return np.array(axes)
    frame = list(axes)
    for k in missing:
        others = [np.asarray(f) for f in frame if f is not None]
        for e in np.eye(3):
            w = e - sum((e @ o) * o for o in others) if others else e
            n = np.linalg.norm(w)
            if n > 1e-6:
                frame[k] = w / n
                break
    A = np.array(frame, dtype=np.float64)
    if np.linalg.det(A) < 0:
        A[missing[-1]] = -A[missing[-1]]
    return A


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center, "center"))
        r = float(self.radius)
        if not math.isfinite(r) or r < 0:
            raise ValueError("sphere radius must be finite and nonnegative")
        object.__setattr__(self, "radius", r)

    def aabb(self) -> Aabb:
        return Aabb(self.center - self.radius, self.center + self.radius)

    def __eq__(self, other):
        if not isinstance(other, Sphere):
            return NotImplemented
        return bool(np.array_equal(self.center, other.center) and self.radius == other.radius)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Segment:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", as_vec3(self.a, "a"))
        object.__setattr__(self, "b", as_vec3(self.b, "b"))


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    """Convex polytope given by vertices and polygonal faces.

    `normals[f]` is the outward unit normal of `faces[f]`.  A polytope whose
    vertices do not span three dimensions is kept but flagged `degenerate`.
    """

    vertices: np.ndarray
    faces: tuple
    normals: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(V)):
            raise ValueError("polytope vertices must be finite")
        N = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "normals", N)
        object.__setattr__(self, "faces", tuple(tuple(int(i) for i in f) for f in self.faces))
        spread = V - V[0]
        sv = np.linalg.svd(spread, compute_uv=False) if len(V) >= 4 else np.zeros(1)
        flat = len(V) < 4 or sv[-1] <= 1e-12 * max(1.0, sv[0])
        object.__setattr__(self, "degenerate", bool(self.degenerate or flat))
        if not self.degenerate:
            for f, n in zip(self.faces, N):
                off = float(n @ V[f[0]])
                if np.any(V @ n - off > 1e-9 * max(1.0, float(np.abs(V).max()))):
                    raise ValueError("vertex outside a face half-space")

    @classmethod
    def from_obb(cls, box: Obb) -> "ConvexPolytope":
        V = box.corners()
        faces, normals = [], []
        for k in range(3):
            bit = 1 << k
            for sign in (-1.0, 1.0):
                idx = [i for i in range(8) if bool(i & bit) == (sign > 0)]
                # order the quad around its boundary: 2-bit gray code over the other axes
                o1, o2 = [1 << j for j in range(3) if j != k]
                base = idx[0] & bit
                quad = [base, base | o1, base | o1 | o2, base | o2]
                faces.append(quad)
                normals.append(sign * box.axes[k])
        return cls(V, tuple(faces), np.array(normals))

    @classmethod
    def from_points(cls, points) -> "ConvexPolytope":
        P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        try:
            hull = ConvexHull(P)
        except (QhullError, ValueError):
            return cls(P, (), np.zeros((0, 3)), degenerate=True)
        V = P[hull.vertices]
        remap = {int(v): i for i, v in enumerate(hull.vertices)}
        faces = tuple(tuple(remap[int(i)] for i in s) for s in hull.simplices)
        return cls(V, faces, hull.equations[:, :3].copy())

    def edge_directions(self) -> np.ndarray:
        """Unit edge directions, parallel duplicates removed."""
        dirs: list[np.ndarray] = []
        for f in self.faces:
            for i, j in zip(f, f[1:] + f[:1]):
                d = self.vertices[j] - self.vertices[i]
                n = np.linalg.norm(d)
                if n == 0.0:
                    continue
                d = d / n
                if all(np.dot(np.cross(d, e), np.cross(d, e)) > 1e-18 for e in dirs):
                    dirs.append(d)
        return np.array(dirs).reshape(-1, 3)


# ---------------------------------------------------------------- predicates


def obb_intersects_obb(a: Obb, b: Obb) -> bool:
    """Separating-axis test over the 15 box axes; touching boxes intersect."""
    return not _sat_separated(
        a.center.tolist(), a.axes.tolist(), a.half_extents.tolist(),
        b.center.tolist(), b.axes.tolist(), b.half_extents.tolist(),
    )


def _sat_separated(ca, A, ha, cb, B, hb) -> bool:
    tx = cb[0] - ca[0]
    ty = cb[1] - ca[1]
    tz = cb[2] - ca[2]
    axes = [A[0], A[1], A[2], B[0], B[1], B[2]]
    for i in range(3):
        a = A[i]
        for j in range(3):
            b = B[j]
            axes.append((a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]))
    for L in axes:
        lx, ly, lz = L
        l2 = lx * lx + ly * ly + lz * lz
        if l2 < AXIS_EPS2:
            continue
        dist = abs(tx * lx + ty * ly + tz * lz)
        ra = (
            ha[0] * abs(A[0][0] * lx + A[0][1] * ly + A[0][2] * lz)
            + ha[1] * abs(A[1][0] * lx + A[1][1] * ly + A[1][2] * lz)
            + ha[2] * abs(A[2][0] * lx + A[2][1] * ly + A[2][2] * lz)
        )
        rb = (
            hb[0] * abs(B[0][0] * lx + B[0][1] * ly + B[0][2] * lz)
            + hb[1] * abs(B[1][0] * lx + B[1][1] * ly + B[1][2] * lz)
            + hb[2] * abs(B[2][0] * lx + B[2][1] * ly + B[2][2] * lz)
        )
        if dist > ra + rb:
            return True
    return False


def sat_margin(a: Obb, b: Obb) -> float:
    """Largest normalized gap over the 15 SAT axes.

    Positive means separated by that distance along the best axis; values
    near zero mark configurations where SAT decisions are numerically fragile.
    """
    t = b.center - a.center
    axes = list(a.axes) + list(b.axes)
    axes += [np.cross(u, v) for u in a.axes for v in b.axes]
    best = -math.inf
    for L in axes:
        l2 = float(L @ L)
        if l2 < AXIS_EPS2:
            continue
        ra = float(np.sum(a.half_extents * np.abs(a.axes @ L)))
        rb = float(np.sum(b.half_extents * np.abs(b.axes @ L)))
        best = max(best, (abs(float(t @ L)) - ra - rb) / math.sqrt(l2))
    return best


def aabb_of_obb(o: Obb) -> Aabb:
    ext = np.abs(o.axes).T @ o.half_extents
    return Aabb(o.center - ext, o.center + ext)


def segment_point_distance(s: Segment, p) -> float:
    """Distance from `p` to the closest point of `s`; a degenerate segment is a point."""
    return _segment_point_distance(s.a.tolist(), s.b.tolist(), as_vec3(p).tolist())


def _segment_point_distance(a, b, p) -> float:
    dx = b[0] - a[0]
    dy = b[1] - a[1]
    dz = b[2] - a[2]
    wx = p[0] - a[0]
    wy = p[1] - a[1]
    wz = p[2] - a[2]
    den = dx * dx + dy * dy + dz * dz
    t = (wx * dx + wy * dy + wz * dz) / den if den > 0.0 else 0.0
    t = min(max(t, 0.0), 1.0)
    ex = p[0] - (a[0] + t * dx)
    ey = p[1] - (a[1] + t * dy)
    ez = p[2] - (a[2] + t * dz)
    return math.sqrt(ex * ex + ey * ey + ez * ez)


def segment_point_distance_batch(a, b, p) -> np.ndarray:
    """Array form of `segment_point_distance` with the same operation order.

    `a`, `b` and `p` broadcast over leading dimensions (last axis is xyz).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    dx = b[..., 0] - ax
    dy = b[..., 1] - ay
    dz = b[..., 2] - az
    wx = p[..., 0] - ax
    wy = p[..., 1] - ay
    wz = p[..., 2] - az
    den = dx * dx + dy * dy + dz * dz
    num = wx * dx + wy * dy + wz * dz
    pos = den > 0.0
    t = np.where(pos, num / np.where(pos, den, 1.0), 0.0)
    t = np.minimum(np.maximum(t, 0.0), 1.0)
    ex = p[..., 0] - (ax + t * dx)
    ey = p[..., 1] - (ay + t * dy)
    ez = p[..., 2] - (az + t * dz)
    return np.sqrt(ex * ex + ey * ey + ez * ez)


def segment_sphere_intersects(s: Segment, sp: Sphere, inflate: float) -> bool:
    if inflate < 0:
        raise ValueError("inflate must be nonnegative")
    return segment_point_distance(s, sp.center) <= sp.radius + inflate


def polytopes_intersect(a: ConvexPolytope, b: ConvexPolytope) -> bool:
    """Exact convex–convex test by separating-plane search.

    Candidate planes are all face normals of both polytopes and all cross
    products of their edge directions, which is complete for convex polytopes.
    Touching counts as intersecting.
    """
    if a.degenerate or b.degenerate:
        raise ValueError("degenerate polytope")
    ea, eb = a.edge_directions(), b.edge_directions()
    cross = np.cross(ea[:, None, :], eb[None, :, :]).reshape(-1, 3)
    axes = np.concatenate([a.normals, b.normals, cross])
    return not bool(convex_separated(a.vertices[None], b.vertices[None], axes[None])[0])


def convex_separated(va: np.ndarray, vb: np.ndarray, axes: np.ndarray) -> np.ndarray:
    """Batched vertex-projection separation test.

    Parameters
    ----------
    va, vb : array, shape (n, Va, 3) and (n, Vb, 3)
        Vertex sets of the two convex bodies of each pair.
    axes : array, shape (n, Q, 3)
        Candidate separating directions; those with squared norm below
        ``AXIS_EPS2`` are ignored.

    Returns
    -------
    separated : bool array, shape (n,)
        True where some axis strictly separates the projections.
    """
    pa = np.einsum("nvk,nqk->nqv", va, axes)
    pb = np.einsum("nvk,nqk->nqv", vb, axes)
    gap = (pa.max(axis=2) < pb.min(axis=2)) | (pb.max(axis=2) < pa.min(axis=2))
    valid = np.einsum("nqk,nqk->nq", axes, axes) >= AXIS_EPS2
    return np.any(gap & valid, axis=1)


# ----------------------------------------------------------------- transforms


def apply_transform(t: Transform, x):
    """Apply a rigid motion to a point array, Obb, Sphere, Segment or ConvexPolytope.

    Box half-extents and sphere radii are unchanged; the identity returns
    its input untouched.
    """
    return _apply(x, t)


@functools.singledispatch
def _apply(x, t: Transform):
    raise TypeError(f"cannot transform {type(x).__name__}")


@_apply.register
def _(x: np.ndarray, t: Transform):
    if t.is_identity:
        return x
    return transform_points(t.rotation, t.translation, x)


@_apply.register
def _(x: Obb, t: Transform):
    if t.is_identity:
        return x
    R = t.rotation
    axes = transform_points(R, np.zeros(3), x.axes)
    return Obb(transform_points(R, t.translation, x.center), axes, x.half_extents)


@_apply.register
def _(x: Sphere, t: Transform):
    if t.is_identity:
        return x
    return Sphere(transform_points(t.rotation, t.translation, x.center), x.radius)


@_apply.register
def _(x: Segment, t: Transform):
    if t.is_identity:
        return x
    return Segment(
        transform_points(t.rotation, t.translation, x.a),
        transform_points(t.rotation, t.translation, x.b),
    )


@_apply.register
def _(x: ConvexPolytope, t: Transform):
    if t.is_identity:
        return x
    V = transform_points(t.rotation, t.translation, x.vertices)
    N = transform_points(t.rotation, np.zeros(3), x.normals)
    return ConvexPolytope(V, x.faces, N, x.degenerate)


# ---------------------------------------------------------------- OBB fitting

# coarse-to-fine rotation grids (degrees); each has 11 steps with zero in the middle
_STAGES = (
    np.arange(-15, 16, 3).astype(float),
    np.linspace(-2.5, 2.5, 11),
    np.linspace(-0.5, 0.5, 11),
)
_GRID_ZERO = 5


@functools.lru_cache(maxsize=None)
def _refinement_rotations(stage: int = 0) -> np.ndarray:
    """Rotation grid of one stage, indexed [i, j, k] by the x, y, z angle steps."""
    ang = np.radians(_STAGES[stage])
    grid = np.array(list(itertools.product(ang, ang, ang)))
    R = euler_xyz_matrices(grid).reshape(len(ang), len(ang), len(ang), 3, 3)
    R[_GRID_ZERO, _GRID_ZERO, _GRID_ZERO] = np.eye(3)
    return R


def pca_frame(points: np.ndarray) -> np.ndarray:
    """Right-handed covariance eigenbasis as rows, largest variance first."""
    P = np.asarray(points, dtype=np.float64)
    if len(P) < 2:
        return np.eye(3)
    d = P - P.mean(axis=0)
    cov = d.T @ d
    if not np.any(cov):
        return np.eye(3)
    w, v = np.linalg.eigh(cov)
    A = v[:, ::-1].T.copy()
    for k in range(2):
        i = int(np.argmax(np.abs(A[k])))
        if A[k, i] < 0:
            A[k] = -A[k]
    a, b = A[0], A[1]
    c = np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])
    A[2] = c / math.sqrt(c @ c)
    return A


def box_in_frame(points: np.ndarray, axes: np.ndarray) -> Obb:
    """Tightest box with the given axes around `points`."""
    proj = np.asarray(points, dtype=np.float64) @ axes.T
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    return Obb(0.5 * (lo + hi) @ axes, axes, 0.5 * (hi - lo))


def obb_from_points(points, max_sweeps: int = 8) -> Obb:
    """Fit a small-volume box around a point cloud.

    The covariance frame seeds a search over a grid of rotations of ±15°
    about each of its axes in 3° steps.  The grid is walked one axis at a
    time (all 11 steps of one angle with the other two held), keeping any
    strictly smaller box, until a full sweep brings no improvement.  Two
    finer grids (0.5° and 0.1° steps) then polish the result the same way.
    Each walk starts unrotated, so the result never exceeds the plain
    covariance box of the distinct points.
    """
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(P) == 0:
        raise ValueError("empty point cloud")
    if not np.all(np.isfinite(P)):
        raise ValueError("point cloud must be finite")
    # the fit depends only on the set of distinct points (repeated configurations change nothing)
    P = np.unique(P, axis=0)
    if len(P) == 1:
        return Obb(P[0], np.eye(3), np.zeros(3))
    frame = pca_frame(P)
    for stage in range(len(_STAGES)):
        grid = _refinement_rotations(stage)
        idx = descend_rotation_grid(P, frame, grid, _GRID_ZERO, max_sweeps)
        if not np.all(idx == _GRID_ZERO):
            frame = grid[tuple(idx)] @ frame
    return box_in_frame(P, frame)
