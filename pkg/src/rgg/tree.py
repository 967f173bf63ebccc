"""Static AABB tree: top-down median split on the longest centroid axis, one item per leaf."""
from __future__ import annotations

import numpy as np

from .geometry import Aabb


class AabbTree:
    """Bounding-volume hierarchy over axis-aligned boxes.

    Each item is a box ``(lo, hi)`` tagged with an integer id (several items
    may share an id, e.g. all bodies of one component).  Nodes are stored
    flat; node 0 is the root.
    """

    def __init__(self, lo, hi, ids):
        lo = np.asarray(lo, dtype=np.float64).reshape(-1, 3)
        hi = np.asarray(hi, dtype=np.float64).reshape(-1, 3)
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        n = len(lo)
        if n == 0:
            raise ValueError("cannot build a tree with no items")
        if hi.shape != lo.shape or len(ids) != n:
            raise ValueError("lo, hi and ids must have matching lengths")
        if np.any(lo > hi):
            raise ValueError("item box has min > max")
        self.item_lo, self.item_hi, self.item_ids = lo, hi, ids
        size = 2 * n - 1
        self.lo = np.empty((size, 3))
        self.hi = np.empty((size, 3))
        self.left = np.full(size, -1, dtype=np.int64)
        self.right = np.full(size, -1, dtype=np.int64)
        self.item = np.full(size, -1, dtype=np.int64)
        centroid = 0.5 * (lo + hi)
        next_free = 1
        stack = [(0, np.arange(n))]
        while stack:
            node, members = stack.pop()
            self.lo[node] = lo[members].min(axis=0)
            self.hi[node] = hi[members].max(axis=0)
            if len(members) == 1:
                self.item[node] = members[0]
                continue
            c = centroid[members]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            order = members[np.lexsort((members, c[:, axis]))]
            half = len(order) // 2
            l, r = next_free, next_free + 1
            next_free += 2
            self.left[node], self.right[node] = l, r
            stack.append((r, order[half:]))
            stack.append((l, order[:half]))
        self._lo = self.lo.tolist()
        self._hi = self.hi.tolist()
        self._left = self.left.tolist()
        self._right = self.right.tolist()
        self._item = self.item.tolist()

    @classmethod
    def from_boxes(cls, boxes: list[Aabb], ids) -> "AabbTree":
        return cls([b.min for b in boxes], [b.max for b in boxes], ids)

    def __len__(self) -> int:
        return len(self.item_ids)

    def query_items(self, box: Aabb) -> list[int]:
        """Indices of items whose boxes overlap `box` (closed), ascending."""
        qlo = box.min.tolist()
        qhi = box.max.tolist()
        lo, hi, left, right, item = self._lo, self._hi, self._left, self._right, self._item
        out = []
        stack = [0]
        while stack:
            n = stack.pop()
            a, b = lo[n], hi[n]
            if (a[0] > qhi[0] or a[1] > qhi[1] or a[2] > qhi[2]
                    or b[0] < qlo[0] or b[1] < qlo[1] or b[2] < qlo[2]):
                continue
            if item[n] >= 0:
                out.append(item[n])
            else:
                stack.append(right[n])
                stack.append(left[n])
        out.sort()
        return out

    def query(self, box: Aabb) -> set[int]:
        """Ids of items whose boxes overlap `box`."""
        ids = self.item_ids
        return {int(ids[i]) for i in self.query_items(box)}


def tree_build(lo, hi, ids) -> AabbTree:
    return AabbTree(lo, hi, ids)


def tree_query(t: AabbTree, b: Aabb) -> set[int]:
    return t.query(b)
