"""Generalized barycentric shape functions on polygonal elements.

Strictly convex polygons use Wachspress coordinates; cells with collinear
(hanging-node) vertices fall back to mean value coordinates, which stay
well-defined there and keep the Kronecker property at the hanging vertex.
Reflex polygons are rejected.

Only point values are ever needed: gradients enter the discretization
through boundary integrals of N, never through grad(N).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    NotStrictlyConvexError,
    OutsidePolygonError,
    PointOnBoundaryError,
    SegmentOutsideError,
)
from .geometry import point_in_polygon

EPS_CONVEX = 1e-8      # normalized corner cross product below this = collinear
EPS_REFLEX = 1e-6      # ...and below minus this = genuinely reflex
NUDGE_FACTOR = 1e-12   # boundary points are pushed inward by this x diameter


@dataclass(frozen=True)
class EdgeQuadRule:
    """1D Gauss rule on the unit interval; weights sum to one."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.points)


def gauss_rule_unit(n: int) -> EdgeQuadRule:
    t, w = np.polynomial.legendre.leggauss(n)
    return EdgeQuadRule(points=0.5 * (t + 1.0), weights=0.5 * w)


# 6-point symmetric triangle rule, exact to polynomial degree 4.
# Rows are barycentric coordinates; weights sum to one.
_TRI6_A = 0.445948490915965
_TRI6_B = 0.091576213509771
_TRI6_WA = 0.223381589678011
_TRI6_WB = 0.109951743655322
TRI6_BARY = np.array(
    [
        [1.0 - 2.0 * _TRI6_A, _TRI6_A, _TRI6_A],
        [_TRI6_A, 1.0 - 2.0 * _TRI6_A, _TRI6_A],
        [_TRI6_A, _TRI6_A, 1.0 - 2.0 * _TRI6_A],
        [1.0 - 2.0 * _TRI6_B, _TRI6_B, _TRI6_B],
        [_TRI6_B, 1.0 - 2.0 * _TRI6_B, _TRI6_B],
        [_TRI6_B, _TRI6_B, 1.0 - 2.0 * _TRI6_B],
    ]
)
TRI6_WEIGHTS = np.array([_TRI6_WA] * 3 + [_TRI6_WB] * 3)


def polygon_diameter(points: np.ndarray) -> float:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    return float(np.hypot(*(hi - lo)))


def corner_turns(points: np.ndarray) -> np.ndarray:
    """Normalized cross products of consecutive edge directions (one per
    vertex); > 0 convex corner, ~0 collinear, < 0 reflex."""
    e = np.roll(points, -1, axis=0) - points
    lengths = np.linalg.norm(e, axis=1)
    eh = e / lengths[:, None]
    prev = np.roll(eh, 1, axis=0)
    return prev[:, 0] * eh[:, 1] - prev[:, 1] * eh[:, 0]


def classify_polygon(points: np.ndarray, eps: float = EPS_CONVEX) -> str:
    """'convex', 'weakly_convex' (collinear vertices) or 'reflex'.

    Corners between -EPS_REFLEX and eps count as collinear rather than
    reflex: clipped Voronoi cells carry corner jitter of that size, and
    the mean-value weights used for weakly convex cells stay positive
    and partition unity under it.
    """
    turns = corner_turns(points)
    if np.any(turns < -EPS_REFLEX):
        return "reflex"
    if np.any(turns < eps):
        return "weakly_convex"
    return "convex"


def is_strictly_convex(polygon, eps: float = EPS_CONVEX) -> bool:
    return classify_polygon(np.asarray(polygon, dtype=float), eps) == "convex"


def edge_normals(points: np.ndarray) -> np.ndarray:
    """Outward unit normals of a CCW loop, one per edge (v_k, v_k+1)."""
    e = np.roll(points, -1, axis=0) - points
    n = np.column_stack([e[:, 1], -e[:, 0]])
    return n / np.linalg.norm(n, axis=1)[:, None]


def wachspress_weights(polygon, point) -> np.ndarray:
    """Raw (unnormalized) Wachspress weights at one strictly interior point.

    w_k = det(n_prev, n_next) / (h_prev(x) h_next(x)) with h the signed
    distances from x to the two edges meeting at vertex k.
    """
    pts = np.asarray(polygon, dtype=float)
    if classify_polygon(pts) != "convex":
        raise NotStrictlyConvexError("Wachspress weights need a strictly convex polygon")
    p = np.asarray(point, dtype=float)
    normals = edge_normals(pts)
    # h[f] = distance from p to edge f (positive inside)
    h = np.einsum("ij,ij->i", pts - p[None, :], normals)
    if np.any(h <= 0.0):
        raise PointOnBoundaryError("point is on or outside an edge")
    n_prev = np.roll(normals, 1, axis=0)
    det = n_prev[:, 0] * normals[:, 1] - n_prev[:, 1] * normals[:, 0]
    h_prev = np.roll(h, 1)
    return det / (h_prev * h)


def _wachspress_many(pts: np.ndarray, normals: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Normalized Wachspress values at strictly interior points p (m, 2)."""
    h = np.einsum("kj,kj->k", pts, normals)[None, :] - p @ normals.T  # (m, n)
    n_prev = np.roll(normals, 1, axis=0)
    det = n_prev[:, 0] * normals[:, 1] - n_prev[:, 1] * normals[:, 0]
    w = det[None, :] / (np.roll(h, 1, axis=1) * h)
    return w / w.sum(axis=1)[:, None]


def _mean_value_many(pts: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Normalized mean value coordinates at strictly interior points."""
    s = pts[None, :, :] - p[:, None, :]          # (m, n, 2)
    r = np.linalg.norm(s, axis=2)                # (m, n)
    s_next = np.roll(s, -1, axis=1)
    r_next = np.roll(r, -1, axis=1)
    cross = s[:, :, 0] * s_next[:, :, 1] - s[:, :, 1] * s_next[:, :, 0]
    dot = np.einsum("mij,mij->mi", s, s_next)
    # tan(alpha_i / 2); alpha_i = angle subtended by edge i at p
    t = (r * r_next - dot) / cross
    w = (np.roll(t, 1, axis=1) + t) / r
    return w / w.sum(axis=1)[:, None]


def mean_value_weights(polygon, point) -> np.ndarray:
    """Raw (unnormalized) mean value weights at one strictly interior point."""
    pts = np.asarray(polygon, dtype=float)
    p = np.atleast_2d(np.asarray(point, dtype=float))
    s = pts[None, :, :] - p[:, None, :]
    r = np.linalg.norm(s, axis=2)
    if np.any(r <= 0.0):
        raise PointOnBoundaryError("point coincides with a vertex")
    s_next = np.roll(s, -1, axis=1)
    r_next = np.roll(r, -1, axis=1)
    cross = s[:, :, 0] * s_next[:, :, 1] - s[:, :, 1] * s_next[:, :, 0]
    if np.any(cross == 0.0):
        raise PointOnBoundaryError("point is on an edge line")
    dot = np.einsum("mij,mij->mi", s, s_next)
    t = (r * r_next - dot) / cross
    return ((np.roll(t, 1, axis=1) + t) / r)[0]


class ShapeBasis:
    """Shape function evaluator bound to one polygon.

    mode 'auto' picks Wachspress on strictly convex cells and mean value
    coordinates as soon as any vertex is collinear with its neighbors.
    """

    def __init__(self, polygon, mode: str = "auto"):
        self.points = np.asarray(polygon, dtype=float)
        self.n = len(self.points)
        self.diameter = polygon_diameter(self.points)
        kind = classify_polygon(self.points)
        if kind == "reflex":
            raise NotStrictlyConvexError(
                "reflex polygon: only convex and weakly convex cells are supported"
            )
        if mode == "auto":
            self.mode = "wachspress" if kind == "convex" else "meanvalue"
        elif mode == "wachspress":
            if kind != "convex":
                raise NotStrictlyConvexError("polygon has collinear vertices")
            self.mode = "wachspress"
        elif mode == "meanvalue":
            self.mode = "meanvalue"
        else:
            raise ValueError(f"unknown mode {mode!r}")
        self._normals = edge_normals(self.points)
        self._nudge = NUDGE_FACTOR * self.diameter

    def _pull_inside(self, p: np.ndarray) -> np.ndarray:
        """Move points lying within the nudge distance of (or slightly
        outside) an edge inward along that edge's normal."""
        h = (
            np.einsum("kj,kj->k", self.points, self._normals)[None, :]
            - p @ self._normals.T
        )
        hmin = h.min(axis=1)
        near = hmin < self._nudge
        if not np.any(near):
            return p
        p = p.copy()
        worst = np.argmin(h[near], axis=1)
        shift = (self._nudge - hmin[near])[:, None] * self._normals[worst]
        p[near] = p[near] - shift
        return p

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        """Values at points inside the closure of the polygon, (m, n)."""
        p = self._pull_inside(np.atleast_2d(np.asarray(points, dtype=float)))
        if self.mode == "wachspress":
            return _wachspress_many(self.points, self._normals, p)
        return _mean_value_many(self.points, p)

    def eval(self, point) -> np.ndarray:
        """Values at one point; exact Kronecker delta at vertices."""
        p = np.asarray(point, dtype=float)
        d2 = np.einsum("ij,ij->i", self.points - p[None, :], self.points - p[None, :])
        k = int(np.argmin(d2))
        if d2[k] <= (self._nudge) ** 2:
            out = np.zeros(self.n)
            out[k] = 1.0
            return out
        if not point_in_polygon(self.points, p, tol=self._nudge):
            raise OutsidePolygonError(f"point {p.tolist()} outside polygon")
        return self.eval_many(p[None, :])[0]


def shape_eval(polygon, point, mode: str = "auto") -> np.ndarray:
    """Normalized shape function values of every polygon vertex at ``point``."""
    return ShapeBasis(polygon, mode=mode).eval(point)


def edge_shape_integral(polygon, segment, rule: EdgeQuadRule, basis: ShapeBasis | None = None) -> np.ndarray:
    """Per-vertex integrals of N along a straight segment inside the polygon.

    Gauss points are strictly interior to the segment, so weights stay
    finite even when the segment lies on the polygon boundary.
    """
    if basis is None:
        basis = ShapeBasis(polygon)
    a = np.asarray(segment[0], dtype=float)
    b = np.asarray(segment[1], dtype=float)
    length = float(np.hypot(*(b - a)))
    if length == 0.0:
        return np.zeros(basis.n)
    tol = 1e-9 * basis.diameter
    for q in (a, b, 0.5 * (a + b)):
        if not point_in_polygon(basis.points, q, tol=tol):
            raise SegmentOutsideError(f"segment point {q.tolist()} outside polygon")
    x_g = a[None, :] + rule.points[:, None] * (b - a)[None, :]
    vals = basis.eval_many(x_g)
    return length * (rule.weights[:, None] * vals).sum(axis=0)
