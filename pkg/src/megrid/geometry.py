"""Planar geometry helpers used by the cell-area and grid-synthesis layers.

Coordinates are ``(x, y)`` tuples in metres in a local planar frame.  Polygons
are vertex sequences without a repeated closing vertex; orientation does not
matter unless stated otherwise.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

Point = tuple[float, float]

EARTH_RADIUS_M = 6_371_000.0


def distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def signed_area(polygon: Sequence[Point]) -> float:
    """Shoelace area, positive for counter-clockwise vertex order."""
    total = 0.0
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return 0.5 * total


def polygon_area(polygon: Sequence[Point]) -> float:
    return abs(signed_area(polygon))


def polygon_centroid(polygon: Sequence[Point]) -> Point:
    """Area-weighted centroid of a simple polygon.

    Falls back to the vertex mean when the enclosed area vanishes (collinear
    rings), so callers that must reject degenerate footprints have to check the
    area themselves.
    """
    area = signed_area(polygon)
    if abs(area) < 1e-12:
        xs = [p[0] for p in polygon]
        ys = [p[1] for p in polygon]
        return (sum(xs) / len(xs), sum(ys) / len(ys))
    cx = 0.0
    cy = 0.0
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        cross = x1 * y2 - x2 * y1
        cx += (x1 + x2) * cross
        cy += (y1 + y2) * cross
    return (cx / (6.0 * area), cy / (6.0 * area))


def point_in_polygon(point: Point, polygon: Sequence[Point]) -> bool:
    """Ray-cast containment test.

    Points exactly on an edge follow the crossing parity of the cast ray, which
    keeps assignment of features to adjacent, non-overlapping cells free of
    double counting.
    """
    x, y = point
    inside = False
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def project_to_segment(point: Point, a: Point, b: Point) -> tuple[Point, float, float]:
    """Nearest point on the closed segment ``a``-``b``.

    Returns ``(foot, t, dist)`` where ``foot`` is the clamped perpendicular
    foot, ``t`` in [0, 1] its parameter along the segment and ``dist`` the
    distance from ``point``.
    """
    ax, ay = a
    bx, by = b
    px, py = point
    dx = bx - ax
    dy = by - ay
    length_sq = dx * dx + dy * dy
    if length_sq == 0.0:
        t = 0.0
    else:
        t = ((px - ax) * dx + (py - ay) * dy) / length_sq
        t = min(1.0, max(0.0, t))
    foot = (ax + t * dx, ay + t * dy)
    return foot, t, math.hypot(px - foot[0], py - foot[1])


def segment_intersections(
    a1: Point, a2: Point, b1: Point, b2: Point, eps: float = 1e-9
) -> list[tuple[float, Point]]:
    """Intersection points of two closed segments.

    Returns a list of ``(t, point)`` pairs with ``t`` the parameter along
    ``a1``-``a2``.  A crossing or touching pair yields one entry; collinear
    overlap yields the endpoints of ``b`` that lie on ``a`` (up to two), which
    is what a segment-splitting caller needs.
    """
    ax, ay = a1
    rx = a2[0] - ax
    ry = a2[1] - ay
    cx, cy = b1
    sx = b2[0] - cx
    sy = b2[1] - cy
    len_a = math.hypot(rx, ry)
    len_b = math.hypot(sx, sy)
    if len_a == 0.0:
        return []
    denom = rx * sy - ry * sx
    qpx = cx - ax
    qpy = cy - ay
    if abs(denom) <= eps * max(len_a * len_b, 1.0):
        # Parallel: collinear only if b1 sits on the carrier line of a.
        if abs(qpx * ry - qpy * rx) > eps * max(len_a, 1.0) * max(math.hypot(qpx, qpy), 1.0):
            return []
        out = []
        for p in (b1, b2):
            t = ((p[0] - ax) * rx + (p[1] - ay) * ry) / (len_a * len_a)
            if -eps <= t <= 1.0 + eps:
                t = min(1.0, max(0.0, t))
                out.append((t, p))
        return out
    t = (qpx * sy - qpy * sx) / denom
    u = (qpx * ry - qpy * rx) / denom
    if -eps <= t <= 1.0 + eps and -eps <= u <= 1.0 + eps:
        t = min(1.0, max(0.0, t))
        return [(t, (ax + t * rx, ay + t * ry))]
    return []


def polygon_is_simple(polygon: Sequence[Point]) -> bool:
    """True when no two non-adjacent edges cross each other properly."""
    n = len(polygon)
    if n < 3:
        return False
    edges = [(polygon[i], polygon[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share a vertex by construction
            hits = segment_intersections(*edges[i], *edges[j])
            for _, point in hits:
                if (
                    distance(point, edges[i][0]) > 1e-9
                    and distance(point, edges[i][1]) > 1e-9
                ):
                    return False
    return True


def bounding_box(points: Iterable[Point]) -> tuple[float, float, float, float]:
    xs, ys = zip(*points)
    return (min(xs), min(ys), max(xs), max(ys))


def lonlat_to_local(lon: float, lat: float, lon0: float, lat0: float) -> Point:
    """Equirectangular projection of geographic coordinates to local metres.

    Adequate for the few-kilometre extents handled here; ``(lon0, lat0)`` is
    the projection origin.
    """
    x = math.radians(lon - lon0) * EARTH_RADIUS_M * math.cos(math.radians(lat0))
    y = math.radians(lat - lat0) * EARTH_RADIUS_M
    return (x, y)
