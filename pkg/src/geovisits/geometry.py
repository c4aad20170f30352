"""Planar geometry primitives for lon/lat degree space.

Polygons are sequences of closed rings (first vertex == last). Containment
uses the even-odd (ray crossing) rule over all rings, so interior rings act
as holes and multi-part features work unchanged. Boundary points count as
inside.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

Ring = Sequence[tuple[float, float]]


def on_segment(x: float, y: float, x1: float, y1: float, x2: float, y2: float) -> bool:
    """True if (x, y) lies exactly on the segment (x1,y1)-(x2,y2)."""
    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    if cross != 0.0:
        return False
    return min(x1, x2) <= x <= max(x1, x2) and min(y1, y2) <= y <= max(y1, y2)


def point_in_ring(x: float, y: float, ring: Ring) -> bool:
    """Even-odd crossing test against one closed ring (boundary excluded here)."""
    inside = False
    x1, y1 = ring[0]
    for i in range(1, len(ring)):
        x2, y2 = ring[i]
        # half-open edge rule: counts each vertex crossing exactly once
        if (y1 > y) != (y2 > y):
            xin = (x2 - x1) * (y - y1) / (y2 - y1) + x1
            if x < xin:
                inside = not inside
        x1, y1 = x2, y2
    return inside


def point_in_polygon(x: float, y: float, rings: Iterable[Ring]) -> bool:
    """Boundary-inclusive even-odd containment over all rings of a feature."""
    crossings_odd = False
    for ring in rings:
        x1, y1 = ring[0]
        for i in range(1, len(ring)):
            x2, y2 = ring[i]
            if on_segment(x, y, x1, y1, x2, y2):
                return True
            if (y1 > y) != (y2 > y):
                xin = (x2 - x1) * (y - y1) / (y2 - y1) + x1
                if x < xin:
                    crossings_odd = not crossings_odd
            x1, y1 = x2, y2
    return crossings_odd


def segment_distance(
    x: float, y: float, x1: float, y1: float, x2: float, y2: float
) -> float:
    """Euclidean distance from (x, y) to the segment (x1,y1)-(x2,y2)."""
    dx = x2 - x1
    dy = y2 - y1
    len2 = dx * dx + dy * dy
    if len2 == 0.0:
        return math.hypot(x - x1, y - y1)
    t = ((x - x1) * dx + (y - y1) * dy) / len2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return math.hypot(x - (x1 + t * dx), y - (y1 + t * dy))


def boundary_distance(
    x: float, y: float, rings: Iterable[Ring], lon_scale: float = 1.0
) -> float:
    """Minimum distance from (x, y) to any ring edge of the feature.

    ``lon_scale`` rescales the x axis before measuring, for local
    equirectangular corrections; 1.0 means plain degree space.
    """
    best = math.inf
    xs = x * lon_scale
    for ring in rings:
        x1, y1 = ring[0]
        for i in range(1, len(ring)):
            x2, y2 = ring[i]
            d = segment_distance(xs, y, x1 * lon_scale, y1, x2 * lon_scale, y2)
            if d < best:
                best = d
            x1, y1 = x2, y2
    return best


def polygon_distance(
    x: float, y: float, rings: Sequence[Ring], lon_scale: float = 1.0
) -> float:
    """Distance to the filled polygon: 0 if contained, else boundary distance."""
    if point_in_polygon(x, y, rings):
        return 0.0
    return boundary_distance(x, y, rings, lon_scale)


def rings_bbox(rings: Iterable[Ring]) -> tuple[float, float, float, float]:
    """(xmin, ymin, xmax, ymax) over all ring vertices."""
    xmin = ymin = math.inf
    xmax = ymax = -math.inf
    for ring in rings:
        for vx, vy in ring:
            if vx < xmin:
                xmin = vx
            if vx > xmax:
                xmax = vx
            if vy < ymin:
                ymin = vy
            if vy > ymax:
                ymax = vy
    return xmin, ymin, xmax, ymax


def planar_distance(ax: float, ay: float, bx: float, by: float) -> float:
    """Straight-line distance in degree space."""
    return math.hypot(ax - bx, ay - by)


def haversine_degrees(
    lon1: float, lat1: float, lon2: float, lat2: float
) -> float:
    """Great-circle central angle between two lon/lat points, in degrees.

    Returned in degrees of arc so thresholds expressed in degrees (such as
    the clustering search radius) keep their unit under either metric.
    """
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dphi = p2 - p1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2.0) ** 2
    return math.degrees(2.0 * math.asin(min(1.0, math.sqrt(a))))


def equirect_scale(lat: float) -> float:
    """Longitude shrink factor at a latitude, for local spherical corrections."""
    return max(math.cos(math.radians(lat)), 1e-9)
