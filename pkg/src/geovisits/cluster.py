"""Per-user density clustering and ranking of visited locations.

Classic DBSCAN semantics with two determinism choices that matter for
reproducible outputs: the eps-neighborhood of a point includes the point
itself when counting against min_pts, and cluster growth scans neighbor
lists in ascending point index, so a border point reachable from several
clusters always joins the one discovered first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np

from . import geometry
from .errors import InputError
from .landuse import SemanticPoint

NOISE = -1


@dataclass(frozen=True)
class ClusterParams:
    """Search radius in degrees plus the minimum cluster population.

    Exactly one of min_pts (absolute) and min_pts_frac (fraction of the
    user's tweet count) must be set.
    """

    eps: float = 0.0025
    min_pts: int | None = None
    min_pts_frac: float | None = None
    distance: str = "planar"

    def __post_init__(self):
        if self.eps <= 0:
            raise InputError("eps must be positive")
        if self.min_pts is None and self.min_pts_frac is None:
            object.__setattr__(self, "min_pts", 4)
        if self.min_pts is not None and self.min_pts_frac is not None:
            raise InputError("set at most one of min_pts and min_pts_frac")
        if self.min_pts is not None and self.min_pts < 2:
            raise InputError("absolute min_pts must be >= 2")
        if self.min_pts_frac is not None and not 0.0 < self.min_pts_frac <= 1.0:
            raise InputError("min_pts_frac must be in (0, 1]")
        if self.distance not in ("planar", "haversine"):
            raise InputError(f"unknown distance mode {self.distance!r}")


def effective_min_pts(params: ClusterParams, n_user: int) -> int:
    """Resolve the cluster population threshold for a user with n_user tweets."""
    if n_user < 1:
        raise InputError("n_user must be >= 1")
    if params.min_pts is not None:
        return params.min_pts
    return max(2, math.ceil(params.min_pts_frac * n_user))


def _neighbor_lists_grid(coords, eps: float, distance: str) -> list[list[int]]:
    """Neighbor indices (self included) via eps-sized grid buckets, ascending.

    All points sharing a grid cell see the same nine candidate buckets, so
    distances are evaluated one cell at a time as vectorized blocks.
    """
    n = len(coords)
    xs = np.fromiter((c[0] for c in coords), dtype=float, count=n)
    ys = np.fromiter((c[1] for c in coords), dtype=float, count=n)
    if distance == "haversine":
        cell_x = eps / geometry.equirect_scale(float(np.abs(ys).max()))
    else:
        cell_x = eps
    kx = np.floor(xs / cell_x).astype(np.int64)
    ky = np.floor(ys / eps).astype(np.int64)
    grid: dict[tuple[int, int], list[int]] = {}
    for i in range(n):
        grid.setdefault((int(kx[i]), int(ky[i])), []).append(i)

    out: list[list[int]] = [[] for _ in range(n)]
    eps2 = eps * eps
    for (cx, cy), members in grid.items():
        cand: list[int] = []
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                bucket = grid.get((gx, gy))
                if bucket:
                    cand.extend(bucket)
        cand_arr = np.sort(np.asarray(cand))
        mi = np.asarray(members)
        if distance == "haversine":
            within = _haversine_block(
                xs[mi], ys[mi], xs[cand_arr], ys[cand_arr]
            ) <= eps
        else:
            dx = xs[mi, None] - xs[cand_arr][None, :]
            dy = ys[mi, None] - ys[cand_arr][None, :]
            within = dx * dx + dy * dy <= eps2
        for row, i in enumerate(members):
            out[i] = cand_arr[within[row]].tolist()
    return out


def _haversine_block(px, py, qx, qy) -> np.ndarray:
    """Pairwise central angles in degrees between point and candidate sets."""
    p1 = np.radians(py)[:, None]
    p2 = np.radians(qy)[None, :]
    dphi = p2 - p1
    dlmb = np.radians(qx)[None, :] - np.radians(px)[:, None]
    a = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2.0) ** 2
    return np.degrees(2.0 * np.arcsin(np.minimum(1.0, np.sqrt(a))))


def _neighbor_lists_exhaustive(coords, eps: float, distance: str) -> list[list[int]]:
    """O(n^2) neighbor search; retained as the simple reference path."""
    if distance == "haversine":
        dist = geometry.haversine_degrees
        pairwise = [
            [dist(x, y, qx, qy) <= eps for qx, qy in coords] for x, y in coords
        ]
        return [[j for j, ok in enumerate(row) if ok] for row in pairwise]
    eps2 = eps * eps
    out = []
    for x, y in coords:
        found = []
        for j, (qx, qy) in enumerate(coords):
            dx = qx - x
            dy = qy - y
            if dx * dx + dy * dy <= eps2:
                found.append(j)
        out.append(found)
    return out


def dbscan(
    coords: Sequence[tuple[float, float]],
    params: ClusterParams,
    neighbor_search: str = "grid",
) -> list[int]:
    """Label each (x, y) with a 0-based cluster id or NOISE (-1).

    A point is core iff its eps-neighborhood, itself included, holds at
    least the effective min_pts. Clusters are grown from unlabeled core
    points in ascending index order; expansion is breadth-first with
    neighbor lists in ascending index, which pins border-point assignment.
    """
    n = len(coords)
    if n == 0:
        raise InputError("dbscan needs at least one point")
    min_pts = effective_min_pts(params, n)
    if neighbor_search == "grid":
        neighbors = _neighbor_lists_grid(coords, params.eps, params.distance)
    elif neighbor_search == "exhaustive":
        neighbors = _neighbor_lists_exhaustive(coords, params.eps, params.distance)
    else:
        raise InputError(f"unknown neighbor_search {neighbor_search!r}")

    UNSEEN = -2
    labels = [UNSEEN] * n
    cluster = -1
    for i in range(n):
        if labels[i] != UNSEEN:
            continue
        if len(neighbors[i]) < min_pts:
            labels[i] = NOISE
            continue
        cluster += 1
        labels[i] = cluster
        # points are labeled when enqueued; tentative noise is claimed as
        # border but never expanded (noise is non-core by construction)
        queue = []
        for j in neighbors[i]:
            if labels[j] == UNSEEN:
                labels[j] = cluster
                queue.append(j)
            elif labels[j] == NOISE:
                labels[j] = cluster
        qi = 0
        while qi < len(queue):
            j = queue[qi]
            qi += 1
            if len(neighbors[j]) < min_pts:
                continue
            for q in neighbors[j]:
                if labels[q] == UNSEEN:
                    labels[q] = cluster
                    queue.append(q)
                elif labels[q] == NOISE:
                    labels[q] = cluster
    return labels


@dataclass(frozen=True)
class VisitCluster:
    """One ranked frequently-visited location of a user."""

    user_id: str
    rank: int
    member_indices: tuple[int, ...]
    size: int
    centroid_lon: float
    centroid_lat: float
    dominant_landuse: str
    purity: float
    first_time: datetime
    hour_hist: tuple[int, ...]  # 24 bins of member counts by local hour


def cluster_stats(members: Sequence[SemanticPoint]) -> tuple[tuple[float, float], str, float]:
    """(centroid, dominant landuse, purity) of a member set.

    Dominant-class ties break to the lexicographically smallest name.
    """
    if not members:
        raise InputError("cluster_stats needs a non-empty member set")
    lon = sum(p.lon for p in members) / len(members)
    lat = sum(p.lat for p in members) / len(members)
    counts: dict[str, int] = {}
    for p in members:
        counts[p.landuse] = counts.get(p.landuse, 0) + 1
    dominant = min(counts, key=lambda c: (-counts[c], c))
    return (lon, lat), dominant, counts[dominant] / len(members)


def rank_clusters(labels: Sequence[int], points: Sequence[SemanticPoint]) -> list[VisitCluster]:
    """Turn dbscan labels into VisitClusters ranked 1..k by descending size.

    Noise is excluded. Size ties order by earliest member local time, then
    by smallest member index.
    """
    groups: dict[int, list[int]] = {}
    for i, lbl in enumerate(labels):
        if lbl != NOISE:
            groups.setdefault(lbl, []).append(i)
    ordered = sorted(
        groups.values(),
        key=lambda idx: (-len(idx), min(points[i].local_time for i in idx), idx[0]),
    )
    clusters = []
    for rank, idx in enumerate(ordered, start=1):
        members = [points[i] for i in idx]
        (clon, clat), dominant, purity = cluster_stats(members)
        hist = [0] * 24
        for p in members:
            hist[p.local_time.hour] += 1
        clusters.append(
            VisitCluster(
                user_id=members[0].user_id,
                rank=rank,
                member_indices=tuple(idx),
                size=len(idx),
                centroid_lon=clon,
                centroid_lat=clat,
                dominant_landuse=dominant,
                purity=purity,
                first_time=min(p.local_time for p in members),
                hour_hist=tuple(hist),
            )
        )
    return clusters


def cluster_user(
    points: Sequence[SemanticPoint],
    params: ClusterParams,
    neighbor_search: str = "grid",
) -> tuple[list[VisitCluster], int]:
    """Cluster one user's semantic points; returns (clusters, noise count)."""
    coords = [(p.lon, p.lat) for p in points]
    labels = dbscan(coords, params, neighbor_search)
    noise = sum(1 for lbl in labels if lbl == NOISE)
    return rank_clusters(labels, points), noise
