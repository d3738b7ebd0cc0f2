"""Planar geometry for link classification.

Buildings are simple polygons in a local metric frame.  Vehicles are
obstruction discs.  A link is NLOS_building when the tx-rx segment touches
any building, otherwise NLOS_vehicle when it passes within the disc radius of
a third vehicle, otherwise LOS.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np


class GeometryError(ValueError):
    pass


class LinkClass(enum.IntEnum):
    LOS = 0
    NLOS_building = 1
    NLOS_vehicle = 2


@dataclass(frozen=True)
class ObstructionResult:
    link_class: LinkClass
    blocker_count: int

    def __post_init__(self):
        if (self.link_class == LinkClass.LOS) != (self.blocker_count == 0):
            raise GeometryError("LOS exactly when there are no blockers")


# ---------------------------------------------------------------------------
# scalar predicates


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py):
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed segment intersection, including touching and collinear overlap."""
    d1 = _orient(q1[0], q1[1], q2[0], q2[1], p1[0], p1[1])
    d2 = _orient(q1[0], q1[1], q2[0], q2[1], p2[0], p2[1])
    d3 = _orient(p1[0], p1[1], p2[0], p2[1], q1[0], q1[1])
    d4 = _orient(p1[0], p1[1], p2[0], p2[1], q2[0], q2[1])
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    if d1 == 0 and _on_segment(q1[0], q1[1], q2[0], q2[1], p1[0], p1[1]):
        return True
    if d2 == 0 and _on_segment(q1[0], q1[1], q2[0], q2[1], p2[0], p2[1]):
        return True
    if d3 == 0 and _on_segment(p1[0], p1[1], p2[0], p2[1], q1[0], q1[1]):
        return True
    if d4 == 0 and _on_segment(p1[0], p1[1], p2[0], p2[1], q2[0], q2[1]):
        return True
    return False


def point_in_polygon(p, poly: np.ndarray) -> bool:
    """Even-odd ray casting.  Points on the boundary are unspecified."""
    x, y = p
    inside = False
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def as_ring(poly) -> np.ndarray:
    """Vertex array without the repeated closing vertex."""
    arr = np.asarray(poly, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError("polygon must be a sequence of [x, y] pairs")
    if len(arr) > 1 and np.array_equal(arr[0], arr[-1]):
        arr = arr[:-1]
    if len(arr) < 3:
        raise GeometryError(f"degenerate polygon with {len(arr)} vertices")
    return arr


def is_simple(ring: np.ndarray) -> bool:
    n = len(ring)
    for a in range(n):
        a2 = (a + 1) % n
        for b in range(a + 1, n):
            b2 = (b + 1) % n
            if b == a2 or a == b2:
                continue
            if segments_intersect(ring[a], ring[a2], ring[b], ring[b2]):
                return False
    return True


def segment_intersects_polygon(a, b, poly) -> bool:
    """True if segment ab crosses the polygon boundary or lies inside it."""
    ring = as_ring(poly)
    a = (float(a[0]), float(a[1]))
    b = (float(b[0]), float(b[1]))
    if a == b:
        raise GeometryError("segment endpoints coincide")
    lo = ring.min(axis=0)
    hi = ring.max(axis=0)
    if (max(a[0], b[0]) < lo[0] or min(a[0], b[0]) > hi[0]
            or max(a[1], b[1]) < lo[1] or min(a[1], b[1]) > hi[1]):
        return False
    n = len(ring)
    for k in range(n):
        if segments_intersect(a, b, ring[k], ring[(k + 1) % n]):
            return True
    # no boundary crossing: either fully inside or fully outside
    return point_in_polygon(a, ring)


def point_segment_distance(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


# ---------------------------------------------------------------------------
# building set with a uniform grid index over bounding boxes


@dataclass
class BuildingSet:
    polygons: list[np.ndarray] = field(default_factory=list)
    cell_size: float = 100.0

    def __post_init__(self):
        self.polygons = [as_ring(p) for p in self.polygons]
        if self.polygons:
            self.bboxes = np.array(
                [[*p.min(axis=0), *p.max(axis=0)] for p in self.polygons])
        else:
            self.bboxes = np.zeros((0, 4))
        self._grid: dict[tuple[int, int], list[int]] = defaultdict(list)
        for pid, (x0, y0, x1, y1) in enumerate(self.bboxes):
            for cx in range(self._cell(x0), self._cell(x1) + 1):
                for cy in range(self._cell(y0), self._cell(y1) + 1):
                    self._grid[(cx, cy)].append(pid)
        # flat arrays for the compiled kernel
        if self.polygons:
            self._verts = np.ascontiguousarray(np.vstack(self.polygons))
            self._offsets = np.cumsum([0] + [len(p) for p in self.polygons]).astype(np.int64)
        else:
            self._verts = np.zeros((0, 2))
            self._offsets = np.zeros(1, dtype=np.int64)

    def __len__(self):
        return len(self.polygons)

    def _cell(self, v: float) -> int:
        return int(math.floor(v / self.cell_size))

    def candidates(self, a, b) -> list[int]:
        """Polygon ids whose bounding box overlaps the bounding box of ab."""
        x0, x1 = sorted((a[0], b[0]))
        y0, y1 = sorted((a[1], b[1]))
        found: set[int] = set()
        for cx in range(self._cell(x0), self._cell(x1) + 1):
            for cy in range(self._cell(y0), self._cell(y1) + 1):
                found.update(self._grid.get((cx, cy), ()))
        out = []
        for pid in sorted(found):
            bx0, by0, bx1, by1 = self.bboxes[pid]
            if bx1 >= x0 and bx0 <= x1 and by1 >= y0 and by0 <= y1:
                out.append(pid)
        return out

    def blocking(self, a, b, exhaustive: bool = False) -> list[int]:
        ids = range(len(self.polygons)) if exhaustive else self.candidates(a, b)
        return [pid for pid in ids if segment_intersects_polygon(a, b, self.polygons[pid])]

    def contains(self, p) -> list[int]:
        return [pid for pid in self.candidates(p, p) if point_in_polygon(p, self.polygons[pid])]


def classify_link(tx, rx, buildings: BuildingSet | None, vehicles: Iterable, radius: float = 2.5,
                  exhaustive: bool = False) -> ObstructionResult:
    """Link class for the tx-rx segment.

    ``tx``, ``rx`` and ``vehicles`` are anything with ``id`` and ``position``.
    The endpoints are ordered by id so the result is symmetric bit for bit.
    """
    if tx.id == rx.id:
        raise GeometryError("tx and rx must differ")
    a, b = (tx, rx) if tx.id < rx.id else (rx, tx)
    pa, pb = tuple(map(float, a.position)), tuple(map(float, b.position))
    if buildings is not None and len(buildings):
        hits = buildings.blocking(pa, pb, exhaustive=exhaustive)
        if hits:
            return ObstructionResult(LinkClass.NLOS_building, len(hits))
    x0, x1 = min(pa[0], pb[0]) - radius, max(pa[0], pb[0]) + radius
    y0, y1 = min(pa[1], pb[1]) - radius, max(pa[1], pb[1]) + radius
    count = 0
    for v in vehicles:
        if v.id in (a.id, b.id):
            continue
        p = v.position
        if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
            continue
        if point_segment_distance(p, pa, pb) <= radius:
            count += 1
    if count:
        return ObstructionResult(LinkClass.NLOS_vehicle, count)
    return ObstructionResult(LinkClass.LOS, 0)


# ---------------------------------------------------------------------------
# compiled all-pairs classification


@numba.njit(cache=True, nogil=True)
def _seg_hits_ring(ax, ay, bx, by, verts, lo, hi):
    n = hi - lo
    for k in range(n):
        qx1 = verts[lo + k, 0]
        qy1 = verts[lo + k, 1]
        qx2 = verts[lo + (k + 1) % n, 0]
        qy2 = verts[lo + (k + 1) % n, 1]
        d1 = (qx2 - qx1) * (ay - qy1) - (qy2 - qy1) * (ax - qx1)
        d2 = (qx2 - qx1) * (by - qy1) - (qy2 - qy1) * (bx - qx1)
        d3 = (bx - ax) * (qy1 - ay) - (by - ay) * (qx1 - ax)
        d4 = (bx - ax) * (qy2 - ay) - (by - ay) * (qx2 - ax)
        if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
            return True
        if d1 == 0 and min(qx1, qx2) <= ax <= max(qx1, qx2) and min(qy1, qy2) <= ay <= max(qy1, qy2):
            return True
        if d2 == 0 and min(qx1, qx2) <= bx <= max(qx1, qx2) and min(qy1, qy2) <= by <= max(qy1, qy2):
            return True
        if d3 == 0 and min(ax, bx) <= qx1 <= max(ax, bx) and min(ay, by) <= qy1 <= max(ay, by):
            return True
        if d4 == 0 and min(ax, bx) <= qx2 <= max(ax, bx) and min(ay, by) <= qy2 <= max(ay, by):
            return True
    # point in ring for a
    inside = False
    for k in range(n):
        x1 = verts[lo + k, 0]
        y1 = verts[lo + k, 1]
        x2 = verts[lo + (k + 1) % n, 0]
        y2 = verts[lo + (k + 1) % n, 1]
        if (y1 > ay) != (y2 > ay):
            xc = x1 + (ay - y1) * (x2 - x1) / (y2 - y1)
            if ax < xc:
                inside = not inside
    return inside


@numba.njit(cache=True, nogil=True)
def _classify_rows(xs, ys, active, row_lo, row_hi, verts, offsets, bboxes, radius, horizon, out):
    n = xs.shape[0]
    npoly = offsets.shape[0] - 1
    r2 = radius * radius
    for i in range(row_lo, row_hi):
        if not active[i]:
            continue
        ax = xs[i]
        ay = ys[i]
        for j in range(i + 1, n):
            if not active[j]:
                continue
            bx = xs[j]
            by = ys[j]
            dx = bx - ax
            dy = by - ay
            if dx * dx + dy * dy > horizon * horizon:
                out[i, j] = -1
                out[j, i] = -1
                continue
            sx0 = min(ax, bx)
            sx1 = max(ax, bx)
            sy0 = min(ay, by)
            sy1 = max(ay, by)
            c = 0
            for p in range(npoly):
                if bboxes[p, 2] < sx0 or bboxes[p, 0] > sx1 or bboxes[p, 3] < sy0 or bboxes[p, 1] > sy1:
                    continue
                if _seg_hits_ring(ax, ay, bx, by, verts, offsets[p], offsets[p + 1]):
                    c = 1
                    break
            if c == 0 and radius > 0:
                L2 = dx * dx + dy * dy
                for k in range(n):
                    if k == i or k == j or not active[k]:
                        continue
                    px = xs[k]
                    py = ys[k]
                    if px < sx0 - radius or px > sx1 + radius or py < sy0 - radius or py > sy1 + radius:
                        continue
                    t = 0.0
                    if L2 > 0:
                        t = ((px - ax) * dx + (py - ay) * dy) / L2
                        t = min(1.0, max(0.0, t))
                    ex = px - (ax + t * dx)
                    ey = py - (ay + t * dy)
                    if ex * ex + ey * ey <= r2:
                        c = 2
                        break
            out[i, j] = c
            out[j, i] = c


def classify_all(xy: np.ndarray, active: np.ndarray, buildings: BuildingSet | None,
                 radius: float, horizon: float = math.inf, workers: int = 1) -> np.ndarray:
    """Symmetric int8 matrix of LinkClass values for every active pair.

    Pairs farther apart than ``horizon`` get -1; the diagonal and inactive
    rows/columns also hold -1.
    """
    n = len(xy)
    out = np.full((n, n), -1, dtype=np.int8)
    if buildings is None:
        buildings = BuildingSet([])
    xs = np.ascontiguousarray(xy[:, 0], dtype=np.float64)
    ys = np.ascontiguousarray(xy[:, 1], dtype=np.float64)
    act = np.ascontiguousarray(active, dtype=np.bool_)
    args = (xs, ys, act)
    tail = (buildings._verts, buildings._offsets, np.ascontiguousarray(buildings.bboxes),
            float(radius), float(horizon) if math.isfinite(horizon) else 1e300, out)
    if workers <= 1 or n < 64:
        _classify_rows(*args, 0, n, *tail)
        return out
    from concurrent.futures import ThreadPoolExecutor

    # rows near the top carry more pairs; interleave blocks to balance load
    bounds = np.linspace(0, n, 4 * workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_classify_rows, *args, int(lo), int(hi), *tail)
                for lo, hi in zip(bounds[:-1], bounds[1:])]
        for f in futs:
            f.result()
    return out


# ---------------------------------------------------------------------------
# map conversion

EARTH_RADIUS_M = 6_371_008.8


def lonlat_to_local(points: Sequence[Sequence[float]], origin: tuple[float, float]) -> np.ndarray:
    """Equirectangular projection of (lon, lat) degrees around ``origin``."""
    pts = np.asarray(points, dtype=float)
    lon0, lat0 = origin
    x = np.radians(pts[:, 0] - lon0) * EARTH_RADIUS_M * math.cos(math.radians(lat0))
    y = np.radians(pts[:, 1] - lat0) * EARTH_RADIUS_M
    return np.column_stack([x, y])
