"""Compiled inner loops: box fitting, spline shortcutting and the batch predicates."""
import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def seg_point_dist(a, b, p):
    # same operation order as geometry._segment_point_distance
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


@njit(cache=True)
def shortcut_indices(P, radius):
    """Greedy forward shortcutting; returns the kept indices."""
    n = P.shape[0]
    keep = np.empty(n, dtype=np.int64)
    keep[0] = 0
    nk = 1
    j = 0
    while j < n - 1:
        p = j + 1
        while p + 1 < n:
            q = p + 1
            ok = True
            for m in range(j + 1, q):
                if not seg_point_dist(P[j], P[q], P[m]) < radius:
                    ok = False
                    break
            if not ok:
                break
            p = q
        keep[nk] = p
        nk += 1
        j = p
    return keep[:nk]


@njit(cache=True)
def _frame_volume(P, F):
    lo0 = lo1 = lo2 = np.inf
    hi0 = hi1 = hi2 = -np.inf
    for i in range(P.shape[0]):
        x = P[i, 0]
        y = P[i, 1]
        z = P[i, 2]
        u = F[0, 0] * x + F[0, 1] * y + F[0, 2] * z
        v = F[1, 0] * x + F[1, 1] * y + F[1, 2] * z
        w = F[2, 0] * x + F[2, 1] * y + F[2, 2] * z
        lo0 = min(lo0, u)
        hi0 = max(hi0, u)
        lo1 = min(lo1, v)
        hi1 = max(hi1, v)
        lo2 = min(lo2, w)
        hi2 = max(hi2, w)
    return (hi0 - lo0) * (hi1 - lo1) * (hi2 - lo2)


@njit(cache=True)
def _mat3(R, A, out):
    for r in range(3):
        for c in range(3):
            out[r, c] = R[r, 0] * A[0, c] + R[r, 1] * A[1, c] + R[r, 2] * A[2, c]


@njit(cache=True)
def descend_rotation_grid(P, base, grid, start, max_sweeps):
    """Coordinate descent over a rotation grid applied on top of `base`.

    `grid[i, j, k]` is a rotation; the walk starts at (start, start, start)
    and accepts only strict volume decreases.  Returns the final index.
    """
    idx = np.full(3, start, dtype=np.int64)
    best = _frame_volume(P, base)
    n_steps = grid.shape[0]
    F = np.empty((3, 3))
    for _ in range(max_sweeps):
        moved = False
        for axis in range(3):
            bj = -1
            bv = best
            for j in range(n_steps):
                if j == idx[axis]:
                    continue
                i0, i1, i2 = idx[0], idx[1], idx[2]
                if axis == 0:
                    i0 = j
                elif axis == 1:
                    i1 = j
                else:
                    i2 = j
                _mat3(grid[i0, i1, i2], base, F)
                v = _frame_volume(P, F)
                if v < bv:
                    bv = v
                    bj = j
            if bj >= 0:
                idx[axis] = bj
                best = bv
                moved = True
        if not moved:
            break
    return idx


# ----------------------------------------------------------------- online
#
# The kernels below must match geometry._sat_separated and
# geometry._segment_point_distance operation for operation: the batch
# engine's labels are compared bit for bit against the sequential engine.

AXIS_EPS2 = 1e-12


@njit(cache=True, inline="always")
def _proj_radius(h, M, lx, ly, lz):
    return (
        h[0] * abs(M[0, 0] * lx + M[0, 1] * ly + M[0, 2] * lz)
        + h[1] * abs(M[1, 0] * lx + M[1, 1] * ly + M[1, 2] * lz)
        + h[2] * abs(M[2, 0] * lx + M[2, 1] * ly + M[2, 2] * lz)
    )


@njit(cache=True, inline="always")
def _axis_separates(tx, ty, tz, lx, ly, lz, A, ha, B, hb):
    l2 = lx * lx + ly * ly + lz * lz
    if l2 < AXIS_EPS2:
        return False
    dist = abs(tx * lx + ty * ly + tz * lz)
    ra = _proj_radius(ha, A, lx, ly, lz)
    rb = _proj_radius(hb, B, lx, ly, lz)
    return dist > ra + rb


@njit(cache=True, inline="always")
def sat_separated(ca, A, ha, cb, B, hb):
    tx = cb[0] - ca[0]
    ty = cb[1] - ca[1]
    tz = cb[2] - ca[2]
    for i in range(3):
        if _axis_separates(tx, ty, tz, A[i, 0], A[i, 1], A[i, 2], A, ha, B, hb):
            return True
    for j in range(3):
        if _axis_separates(tx, ty, tz, B[j, 0], B[j, 1], B[j, 2], A, ha, B, hb):
            return True
    for i in range(3):
        for j in range(3):
            lx = A[i, 1] * B[j, 2] - A[i, 2] * B[j, 1]
            ly = A[i, 2] * B[j, 0] - A[i, 0] * B[j, 2]
            lz = A[i, 0] * B[j, 1] - A[i, 1] * B[j, 0]
            if _axis_separates(tx, ty, tz, lx, ly, lz, A, ha, B, hb):
                return True
    return False


@njit(cache=True)
def sat_pairs(ca, A, ha, cb, B, hb, out):
    """Pairwise intersection flags for stacked boxes (touching intersects)."""
    for i in range(ca.shape[0]):
        out[i] = not sat_separated(ca[i], A[i], ha[i], cb[i], B[i], hb[i])


@njit(cache=True, inline="always")
def _seg_dist(ax, ay, az, bx, by, bz, px, py, pz):
    # seg_point_dist on scalars, identical operation order
    dx = bx - ax
    dy = by - ay
    dz = bz - az
    wx = px - ax
    wy = py - ay
    wz = pz - az
    den = dx * dx + dy * dy + dz * dz
    t = (wx * dx + wy * dy + wz * dz) / den if den > 0.0 else 0.0
    t = min(max(t, 0.0), 1.0)
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    ez = pz - (az + t * dz)
    return math.sqrt(ex * ex + ey * ey + ez * ez)


@njit(cache=True)
def over_kernel(rows, center, axes, half, lo, hi, oc, oA, oh, qlo, qhi, out):
    """out[i]: any body box of component rows[i] meets the obstacle box.

    `lo`/`hi` are padded per-body bounds used only to skip pairs that are
    certainly apart; the obstacle is passed first, as in the scalar engine.
    """
    n_bodies = center.shape[1]
    for i in range(rows.shape[0]):
        r = rows[i]
        hit = False
        for b in range(n_bodies):
            # written out: a helper taking the arrays costs more than the test
            if (lo[r, b, 0] > qhi[0] or lo[r, b, 1] > qhi[1] or lo[r, b, 2] > qhi[2]
                    or hi[r, b, 0] < qlo[0] or hi[r, b, 1] < qlo[1] or hi[r, b, 2] < qlo[2]):
                continue
            if not sat_separated(oc, oA, oh, center[r, b], axes[r, b], half[r, b]):
                hit = True
                break
        out[i] = hit


@njit(cache=True)
def under_kernel(rows, seg, mask, slot_radius, lo, hi, centers, r_obs, qlo, qhi, out):
    """out[i]: any unmasked segment of rows[i] within reach of an obstacle sphere."""
    n_bodies = seg.shape[1]
    n_slots = seg.shape[2]
    K = seg.shape[3]
    n_c = centers.shape[0]
    cmin = np.empty(3)
    cmax = np.empty(3)
    scale = 1.0
    for d in range(3):
        cmin[d] = centers[:, d].min()
        cmax[d] = centers[:, d].max()
        scale = max(scale, abs(cmin[d]), abs(cmax[d]))
    # segments farther than this from the centers' box cannot reach any sphere;
    # the margin dwarfs rounding in the distance evaluation
    skip_pad = 1e-6 * (scale + r_obs)
    for i in range(rows.shape[0]):
        r = rows[i]
        hit = False
        for b in range(n_bodies):
            for s in range(n_slots):
                if not mask[r, b, s, 0]:
                    continue
                if (lo[r, b, s, 0] > qhi[0] or lo[r, b, s, 1] > qhi[1] or lo[r, b, s, 2] > qhi[2]
                        or hi[r, b, s, 0] < qlo[0] or hi[r, b, s, 1] < qlo[1] or hi[r, b, s, 2] < qlo[2]):
                    continue
                reach = r_obs + slot_radius[b, s]
                for k in range(K):
                    if not mask[r, b, s, k]:
                        continue
                    ax = seg[r, b, s, k, 0, 0]
                    ay = seg[r, b, s, k, 0, 1]
                    az = seg[r, b, s, k, 0, 2]
                    bx = seg[r, b, s, k, 1, 0]
                    by = seg[r, b, s, k, 1, 1]
                    bz = seg[r, b, s, k, 1, 2]
                    lim = reach + skip_pad
                    if (min(ax, bx) - cmax[0] > lim or cmin[0] - max(ax, bx) > lim
                            or min(ay, by) - cmax[1] > lim or cmin[1] - max(ay, by) > lim
                            or min(az, bz) - cmax[2] > lim or cmin[2] - max(az, bz) > lim):
                        continue
                    for c in range(n_c):
                        if _seg_dist(ax, ay, az, bx, by, bz, centers[c, 0], centers[c, 1], centers[c, 2]) <= reach:
                            hit = True
                            break
                    if hit:
                        break
                if hit:
                    break
            if hit:
                break
        out[i] = hit


# ------------------------------------------------------------ exact oracle


@njit(cache=True)
def _corner_axes(C, out):
    for i in range(3):
        k = 1 << i
        ex = C[k, 0] - C[0, 0]
        ey = C[k, 1] - C[0, 1]
        ez = C[k, 2] - C[0, 2]
        n = math.sqrt(ex * ex + ey * ey + ez * ez)
        if n == 0.0:
            n = 1.0
        out[i, 0] = ex / n
        out[i, 1] = ey / n
        out[i, 2] = ez / n


@njit(cache=True)
def _vertex_gap(Va, Vb, lx, ly, lz):
    amin = bmin = np.inf
    amax = bmax = -np.inf
    for v in range(Va.shape[0]):
        p = Va[v, 0] * lx + Va[v, 1] * ly + Va[v, 2] * lz
        amin = min(amin, p)
        amax = max(amax, p)
    for v in range(Vb.shape[0]):
        p = Vb[v, 0] * lx + Vb[v, 1] * ly + Vb[v, 2] * lz
        bmin = min(bmin, p)
        bmax = max(bmax, p)
    return amax < bmin or bmax < amin


@njit(cache=True)
def boxes_overlap_vertex(corners, obstacle, out):
    """out[i]: box corners[i] overlaps `obstacle` (touching overlaps).

    Separation is decided from projected vertices, not from center and
    half-extent arithmetic, so this stays independent of `sat_separated`.
    """
    ub = np.empty((3, 3))
    ua = np.empty((3, 3))
    _corner_axes(obstacle, ub)
    for i in range(corners.shape[0]):
        C = corners[i]
        _corner_axes(C, ua)
        sep = False
        for a in range(6):
            M = ua if a < 3 else ub
            r = a % 3
            if _vertex_gap(C, obstacle, M[r, 0], M[r, 1], M[r, 2]):
                sep = True
                break
        if not sep:
            for a in range(3):
                for b in range(3):
                    lx = ua[a, 1] * ub[b, 2] - ua[a, 2] * ub[b, 1]
                    ly = ua[a, 2] * ub[b, 0] - ua[a, 0] * ub[b, 2]
                    lz = ua[a, 0] * ub[b, 1] - ua[a, 1] * ub[b, 0]
                    if lx * lx + ly * ly + lz * lz < AXIS_EPS2:
                        continue
                    if _vertex_gap(C, obstacle, lx, ly, lz):
                        sep = True
                        break
                if sep:
                    break
        out[i] = not sep


# ------------------------------------------------------------------ grid


@njit(cache=True)
def gather_cells(cells, counts, ov_ptr, ov_ids, a, b, shape, n_items):
    """Sorted unique ids listed in cells a..b (inclusive index box), overflow included."""
    mark = np.zeros(n_items, dtype=np.bool_)
    cap = cells.shape[1]
    for i in range(a[0], b[0] + 1):
        for j in range(a[1], b[1] + 1):
            for k in range(a[2], b[2] + 1):
                c = (i * shape[1] + j) * shape[2] + k
                for m in range(min(counts[c], cap)):
                    mark[cells[c, m]] = True
                for m in range(ov_ptr[c], ov_ptr[c + 1]):
                    mark[ov_ids[m]] = True
    n = 0
    for x in range(n_items):
        n += mark[x]
    out = np.empty(n, dtype=np.int64)
    n = 0
    for x in range(n_items):
        if mark[x]:
            out[n] = x
            n += 1
    return out
