"""Planar polygon utilities: measures, kernels of star-shaped polygons,
inscribed disks.

All polygons are (n, 2) float arrays of vertices in counterclockwise
order, without a repeated closing vertex.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog


def signed_area(verts: np.ndarray) -> float:
    """Shoelace signed area (positive for CCW loops)."""
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def polygon_area_centroid(verts: np.ndarray) -> tuple[float, np.ndarray]:
    """Area and centroid of a simple CCW polygon via shoelace moments."""
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(np.sum(cross))
    cx = float(np.sum((x + xn) * cross)) / (6.0 * area)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * area)
    return area, np.array([cx, cy])


def polygon_diameter(verts: np.ndarray) -> float:
    """Maximum pairwise vertex distance."""
    d = verts[:, None, :] - verts[None, :, :]
    return float(np.sqrt((d**2).sum(axis=2)).max())


def is_simple_polygon(verts: np.ndarray, tol: float = 1e-14) -> bool:
    """Check that no two non-adjacent edges intersect (O(n^2), n is small)."""
    n = len(verts)
    if n < 3:
        return False
    segs = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(*segs[i], *segs[j], tol):
                return False
    return True


def _segments_intersect(p0, p1, q0, q1, tol):
    d1 = _orient(q0, q1, p0)
    d2 = _orient(q0, q1, p1)
    d3 = _orient(p0, p1, q0)
    d4 = _orient(p0, p1, q1)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and (
        (d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)
    ):
        return True
    for d, a, b, c in ((d1, q0, q1, p0), (d2, q0, q1, p1), (d3, p0, p1, q0), (d4, p0, p1, q1)):
        if abs(d) <= tol and _on_segment(a, b, c, tol):
            return True
    return False


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, c, tol):
    return (
        min(a[0], b[0]) - tol <= c[0] <= max(a[0], b[0]) + tol
        and min(a[1], b[1]) - tol <= c[1] <= max(a[1], b[1]) + tol
    )


def polygon_kernel(verts: np.ndarray) -> np.ndarray:
    """Kernel of a polygon: the set of points that see every boundary point.

    Computed exactly as the intersection of the inward half-planes of all
    edges (Sutherland-Hodgman clipping of a generous bounding box).
    Returns the kernel polygon, possibly empty (shape (0, 2)).
    """
    lo = verts.min(axis=0) - 1.0
    hi = verts.max(axis=0) + 1.0
    poly = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        poly = _clip_halfplane(poly, a, b)
        if len(poly) == 0:
            break
    return poly


def _clip_halfplane(poly: np.ndarray, a, b) -> np.ndarray:
    """Keep the part of `poly` to the left of the directed line a->b."""
    if len(poly) == 0:
        return poly
    out = []
    n = len(poly)
    side = np.array([_orient(a, b, p) for p in poly])
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        sp, sq = side[i], side[(i + 1) % n]
        if sp >= 0:
            out.append(p)
        if (sp > 0 and sq < 0) or (sp < 0 and sq > 0):
            t = sp / (sp - sq)
            out.append(p + t * (q - p))
    if not out:
        return np.zeros((0, 2))
    arr = np.array(out)
    # drop near-duplicate consecutive points produced by clipping
    keep = [0]
    for i in range(1, len(arr)):
        if np.linalg.norm(arr[i] - arr[keep[-1]]) > 1e-13:
            keep.append(i)
    if len(keep) > 1 and np.linalg.norm(arr[keep[-1]] - arr[keep[0]]) <= 1e-13:
        keep.pop()
    arr = arr[keep]
    return arr if len(arr) >= 3 else np.zeros((0, 2))


def inscribed_disk(poly: np.ndarray) -> tuple[np.ndarray, float]:
    """Chebyshev center and radius of a convex polygon (small LP).

    Returns (center, radius); radius 0 for an empty polygon.
    """
    if len(poly) < 3:
        return np.zeros(2), 0.0
    n = len(poly)
    # inward constraint n_i . x >= b_i + r with |n_i| = 1
    a_ub = np.zeros((n, 3))
    b_ub = np.zeros(n)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        t = q - p
        nn = np.array([-t[1], t[0]])  # inward normal of a CCW polygon
        nn = nn / np.linalg.norm(nn)
        # nn.x - r >= nn.p  ->  -nn.x + r <= -nn.p
        a_ub[i, :2] = -nn
        a_ub[i, 2] = 1.0
        b_ub[i] = -float(nn @ p)
    res = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=[(None, None), (None, None), (0, None)],
        method="highs",
    )
    if not res.success:
        return np.zeros(2), 0.0
    return res.x[:2].copy(), float(res.x[2])


def is_convex(verts: np.ndarray, tol: float = 1e-13) -> bool:
    n = len(verts)
    for i in range(n):
        if _orient(verts[i], verts[(i + 1) % n], verts[(i + 2) % n]) < -tol:
            return False
    return True


def star_center(verts: np.ndarray) -> np.ndarray:
    """A point that sees the whole polygon: Chebyshev center of the kernel.

    Raises ValueError if the polygon is not star-shaped.
    """
    kernel = polygon_kernel(verts)
    center, radius = inscribed_disk(kernel)
    if radius <= 0.0:
        raise ValueError("polygon is not star-shaped (empty kernel)")
    return center


def star_point(verts: np.ndarray) -> np.ndarray:
    """Like :func:`star_center` but with a cheap fast path: the centroid of a
    convex polygon is already an interior kernel point."""
    if is_convex(verts):
        return polygon_area_centroid(verts)[1]
    return star_center(verts)
