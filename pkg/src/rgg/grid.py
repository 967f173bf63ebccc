"""One-layer uniform grid with fixed-capacity cells for candidate filtering."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import gather_cells
from .geometry import Aabb

DEFAULT_CELL_CAPACITY = 1024


@dataclass(eq=False)
class SpatialGrid:
    """Uniform grid over the environment; cells on the border extend outward without bound.

    `cells[c, :]` holds up to `capacity` component ids (padded with -1);
    ids beyond that go to `overflow[c]`, mirrored in flat form by
    `ov_ptr` / `ov_ids` for the compiled lookup.
    """

    origin: np.ndarray
    cell_size: np.ndarray
    shape: tuple
    capacity: int
    cells: np.ndarray
    counts: np.ndarray
    overflow: dict
    n_items: int
    ov_ptr: np.ndarray = None
    ov_ids: np.ndarray = None

    def cell_range(self, lo, hi) -> tuple[np.ndarray, np.ndarray]:
        """Inclusive index ranges of cells meeting the box [lo, hi], clamped to the grid."""
        dims = np.array(self.shape)
        a = np.floor((np.asarray(lo) - self.origin) / self.cell_size).astype(np.int64)
        b = np.floor((np.asarray(hi) - self.origin) / self.cell_size).astype(np.int64)
        return np.clip(a, 0, dims - 1), np.clip(b, 0, dims - 1)

    def flat(self, i, j, k):
        return (np.asarray(i) * self.shape[1] + np.asarray(j)) * self.shape[2] + np.asarray(k)

    def cell_box(self, cell: int) -> Aabb:
        """Nominal box of a cell (border cells are treated as unbounded by queries)."""
        i, j, k = np.unravel_index(cell, self.shape)
        lo = self.origin + np.array([i, j, k]) * self.cell_size
        return Aabb(lo, lo + self.cell_size)

    def members(self, cell: int) -> np.ndarray:
        ids = self.cells[cell, : min(self.counts[cell], self.capacity)]
        extra = self.overflow.get(cell)
        return ids if extra is None else np.concatenate([ids, extra])

    @property
    def n_nonempty(self) -> int:
        return int(np.count_nonzero(self.counts))

    def mean_occupancy(self) -> float:
        n = self.n_nonempty
        return float(self.counts.sum() / n) if n else 0.0


def _memberships(lo_idx: np.ndarray, hi_idx: np.ndarray, shape) -> tuple[np.ndarray, np.ndarray]:
    """(cell, item) pairs for items spanning inclusive index boxes."""
    dims = hi_idx - lo_idx + 1
    cnt = np.prod(dims, axis=1)
    owner = np.repeat(np.arange(len(lo_idx)), cnt)
    start = np.concatenate([[0], np.cumsum(cnt)[:-1]])
    local = np.arange(int(cnt.sum())) - np.repeat(start, cnt)
    d = dims[owner]
    i = lo_idx[owner, 0] + local % d[:, 0]
    j = lo_idx[owner, 1] + (local // d[:, 0]) % d[:, 1]
    k = lo_idx[owner, 2] + local // (d[:, 0] * d[:, 1])
    return (i * shape[1] + j) * shape[2] + k, owner


def grid_build(lo, hi, bounds: Aabb, cell_capacity: int = DEFAULT_CELL_CAPACITY) -> SpatialGrid:
    """Grid over item boxes ``lo``/``hi`` (N, 3) inside environment `bounds`.

    Cells start at a quarter of the environment per axis.  The longest cell
    axis is halved while the mean occupancy of nonempty cells exceeds the
    capacity, unless that would make cells smaller than twice the largest
    item extent along that axis.
    """
    if cell_capacity < 1:
        raise ValueError("cell capacity must be at least 1")
    lo = np.asarray(lo, dtype=np.float64).reshape(-1, 3)
    hi = np.asarray(hi, dtype=np.float64).reshape(-1, 3)
    origin = bounds.min.copy()
    extent = bounds.extent
    shape = np.array([4, 4, 4])
    max_item = (hi - lo).max(axis=0) if len(lo) else np.zeros(3)

    def layout(shape):
        size = extent / shape
        g = SpatialGrid(origin, size, tuple(int(s) for s in shape), cell_capacity,
                        np.zeros((0, 0), dtype=np.int32), np.zeros(0, dtype=np.int64), {}, len(lo))
        a, b = g.cell_range(lo, hi)
        cell, owner = _memberships(a, b, g.shape)
        return g, cell, owner

    g, cell, owner = layout(shape)
    while True:
        counts = np.bincount(cell, minlength=int(np.prod(shape)))
        nonempty = np.count_nonzero(counts)
        if nonempty == 0 or counts.sum() / nonempty <= cell_capacity:
            break
        size = extent / shape
        axis = int(np.argmax(size))
        if size[axis] / 2 < 2 * max_item[axis]:
            break
        shape = shape.copy()
        shape[axis] *= 2
        g, cell, owner = layout(shape)

    ncells = int(np.prod(shape))
    order = np.lexsort((owner, cell))
    cell, owner = cell[order], owner[order]
    counts = np.bincount(cell, minlength=ncells)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank = np.arange(len(cell)) - starts[cell]
    cells = np.full((ncells, cell_capacity), -1, dtype=np.int32)
    dense = rank < cell_capacity
    cells[cell[dense], rank[dense]] = owner[dense]
    overflow = {}
    for c in np.unique(cell[~dense]):
        overflow[int(c)] = owner[(cell == c) & ~dense].astype(np.int32)
    g.cells, g.counts, g.overflow = cells, counts, overflow
    extra = np.zeros(ncells, dtype=np.int64)
    for c, ids in overflow.items():
        extra[c] = len(ids)
    g.ov_ptr = np.concatenate([[0], np.cumsum(extra)]).astype(np.int64)
    g.ov_ids = (np.concatenate([overflow[c] for c in sorted(overflow)]) if overflow
                else np.zeros(0, dtype=np.int32))
    return g


def grid_candidates(grid: SpatialGrid, box: Aabb) -> np.ndarray:
    """Sorted unique ids listed in any cell the query box meets (overflow included)."""
    a, b = grid.cell_range(box.min, box.max)
    return gather_cells(grid.cells, grid.counts, grid.ov_ptr, grid.ov_ids, a, b,
                        np.array(grid.shape, dtype=np.int64), grid.n_items)
