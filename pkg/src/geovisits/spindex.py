"""Bulk-loaded rectangle tree over feature bounding boxes.

Packing uses the Sort-Tile-Recursive scheme: entries are sorted by bbox
center x, cut into vertical slabs, each slab sorted by center y and chunked
into leaves. Upper levels are packed the same way from the child rectangles.
The tree is immutable after construction.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

_LEAF_CAP = 16


class _Node:
    __slots__ = ("xmin", "ymin", "xmax", "ymax", "children", "entries")

    def __init__(self, children=None, entries=None):
        self.children = children
        self.entries = entries
        boxes = entries if entries is not None else [
            (c.xmin, c.ymin, c.xmax, c.ymax, None) for c in children
        ]
        self.xmin = min(b[0] for b in boxes)
        self.ymin = min(b[1] for b in boxes)
        self.xmax = max(b[2] for b in boxes)
        self.ymax = max(b[3] for b in boxes)

    def min_distance(self, x: float, y: float, lon_scale: float = 1.0) -> float:
        dx = self.xmin - x if x < self.xmin else (x - self.xmax if x > self.xmax else 0.0)
        dy = self.ymin - y if y < self.ymin else (y - self.ymax if y > self.ymax else 0.0)
        return math.hypot(dx * lon_scale, dy)


def _str_pack(boxes: list, cap: int) -> list[list]:
    """Group boxes into chunks of <= cap using one STR tiling pass."""
    n = len(boxes)
    n_groups = math.ceil(n / cap)
    n_slabs = math.ceil(math.sqrt(n_groups))
    by_cx = sorted(boxes, key=lambda b: (b[0] + b[2], b[1] + b[3]))
    slab_size = math.ceil(n / n_slabs)
    groups = []
    for s in range(0, n, slab_size):
        slab = sorted(by_cx[s : s + slab_size], key=lambda b: (b[1] + b[3], b[0] + b[2]))
        for g in range(0, len(slab), cap):
            groups.append(slab[g : g + cap])
    return groups


class STRTree:
    """Static rectangle tree keyed by integer entry ids.

    Point queries return every id whose rectangle contains the point, a
    superset of the ids whose actual geometry contains it.
    """

    def __init__(self, entries: Sequence[tuple[float, float, float, float, int]]):
        if not entries:
            raise ValueError("cannot build an index with no entries")
        nodes = [_Node(entries=group) for group in _str_pack(list(entries), _LEAF_CAP)]
        while len(nodes) > 1:
            boxed = [(nd.xmin, nd.ymin, nd.xmax, nd.ymax, nd) for nd in nodes]
            nodes = [
                _Node(children=[b[4] for b in group])
                for group in _str_pack(boxed, _LEAF_CAP)
            ]
        self._root = nodes[0]

    def query_point(self, x: float, y: float) -> list[int]:
        """Ids of all rectangles containing (x, y), boundary inclusive, ascending."""
        hits: list[int] = []
        root = self._root
        if not (root.xmin <= x <= root.xmax and root.ymin <= y <= root.ymax):
            return hits
        stack = [root]
        while stack:
            node = stack.pop()
            if node.entries is not None:
                for bx0, by0, bx1, by1, eid in node.entries:
                    if bx0 <= x <= bx1 and by0 <= y <= by1:
                        hits.append(eid)
            else:
                for child in node.children:
                    if child.xmin <= x <= child.xmax and child.ymin <= y <= child.ymax:
                        stack.append(child)
        hits.sort()
        return hits

    def nearest(
        self,
        x: float,
        y: float,
        distance_fn: Callable[[int], float],
        skip_fn: Callable[[int], bool] | None = None,
        lon_scale: float = 1.0,
    ) -> tuple[int, float] | None:
        """Entry minimizing distance_fn, pruned by rectangle distance.

        distance_fn must be consistent with rectangle distance under the
        same lon_scale (never smaller than it). Ties on distance resolve to
        the smallest id; entries with skip_fn true are ignored, and None is
        returned if everything is skipped.
        """
        best_d = math.inf
        best_id = -1
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node.min_distance(x, y, lon_scale) > best_d:
                continue
            if node.entries is not None:
                for bx0, by0, bx1, by1, eid in node.entries:
                    if skip_fn is not None and skip_fn(eid):
                        continue
                    dx = bx0 - x if x < bx0 else (x - bx1 if x > bx1 else 0.0)
                    dy = by0 - y if y < by0 else (y - by1 if y > by1 else 0.0)
                    if math.hypot(dx * lon_scale, dy) > best_d:
                        continue
                    d = distance_fn(eid)
                    if d < best_d or (d == best_d and eid < best_id):
                        best_d = d
                        best_id = eid
            else:
                # visit nearer children last so they are popped first
                stack.extend(
                    sorted(
                        node.children,
                        key=lambda c: c.min_distance(x, y, lon_scale),
                        reverse=True,
                    )
                )
        if best_id < 0:
            return None
        return best_id, best_d
