"""Quadtree generation and conversion to conforming polygonal meshes.

Leaves are addressed by (depth, i, j): cell (d, i, j) covers the square of
side root_size / 2**d whose lower-left corner sits at
origin + side * (i, j).  Coordinates are dyadic, so vertex matches between
neighboring leaves are exact.

Hanging nodes never get constraint equations: a fine-leaf corner lying on a
coarse leaf's edge is inserted into the coarse cell's loop as an ordinary
collinear vertex, so a balanced tree turns into 4/5/6/7-gons that tile the
domain conformingly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import cKDTree
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.geometry.polygon import orient as shapely_orient

from .errors import ClipFailureError, DepthExceededWarning, EmptyDomainError, MeshError
from .geometry import PolyMesh, build_poly_mesh

DEDUP_FACTOR = 1e-9     # vertex dedup tolerance = this x root side
SLIVER_FRACTION = 1e-3  # clipped cells below this fraction of their square get merged

LeafKey = tuple[int, int, int]


def _as_shapely(domain) -> ShapelyPolygon:
    if isinstance(domain, ShapelyPolygon):
        poly = domain
    elif isinstance(domain, tuple) and len(domain) == 2:
        shell, holes = domain
        poly = ShapelyPolygon(np.asarray(shell, dtype=float), [np.asarray(h, dtype=float) for h in holes])
    else:
        poly = ShapelyPolygon(np.asarray(domain, dtype=float))
    if (not poly.is_valid) or poly.area <= 0.0:
        raise EmptyDomainError("domain polygon is empty or invalid")
    return poly


@dataclass
class Quadtree:
    """Linear quadtree: only the leaves are stored."""

    origin: np.ndarray
    root_size: float
    max_depth: int
    leaves: set[LeafKey] = field(default_factory=set)

    def leaf_side(self, key: LeafKey) -> float:
        return self.root_size / (1 << key[0])

    def leaf_box(self, key: LeafKey) -> tuple[float, float, float]:
        """(x0, y0, side) of a leaf square."""
        d, i, j = key
        s = self.root_size / (1 << d)
        return (self.origin[0] + s * i, self.origin[1] + s * j, s)

    def leaf_center(self, key: LeafKey) -> np.ndarray:
        x0, y0, s = self.leaf_box(key)
        return np.array([x0 + 0.5 * s, y0 + 0.5 * s])

    def leaf_corners(self, key: LeafKey) -> np.ndarray:
        x0, y0, s = self.leaf_box(key)
        return np.array([[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]])

    def split(self, key: LeafKey) -> list[LeafKey]:
        d, i, j = key
        self.leaves.remove(key)
        children = [(d + 1, 2 * i + di, 2 * j + dj) for di in (0, 1) for dj in (0, 1)]
        self.leaves.update(children)
        return children

    def covering_leaf(self, d: int, i: int, j: int) -> LeafKey | None:
        """The leaf whose square contains same-or-coarser cell (d, i, j)."""
        for up in range(d + 1):
            cand = (d - up, i >> up, j >> up)
            if cand in self.leaves:
                return cand
        return None


def generate_quadtree(domain, size_field, max_depth: int, root_size: float | None = None) -> Quadtree:
    """Refine a root square over the domain bbox until every leaf that
    overlaps the domain has side <= size_field at its center.

    size_field may be a callable (point -> target size) or a constant.
    An explicit root_size keeps leaf sides at chosen dyadic values.
    """
    poly = _as_shapely(domain)
    if max_depth < 0 or max_depth > 20:
        raise MeshError(f"max_depth {max_depth} outside [0, 20]")
    if not callable(size_field):
        target = float(size_field)
        size_field = lambda p: target  # noqa: E731
    x0, y0, x1, y1 = poly.bounds
    side = max(x1 - x0, y1 - y0)
    if root_size is None:
        root_size = side
    elif root_size < side - 1e-12 * side:
        raise MeshError("root_size does not cover the domain bounding box")
    qt = Quadtree(origin=np.array([x0, y0]), root_size=float(root_size), max_depth=max_depth)
    shapely.prepare(poly)

    depth_hit = False
    frontier = [(0, 0, 0)]
    while frontier:
        geom = np.array([qt.leaf_box(k) for k in frontier])
        boxes = shapely.box(
            geom[:, 0], geom[:, 1], geom[:, 0] + geom[:, 2], geom[:, 1] + geom[:, 2]
        )
        overlap = shapely.intersects(poly, boxes)
        areas = np.zeros(len(frontier))
        if np.any(overlap):
            areas[overlap] = shapely.area(shapely.intersection(poly, boxes[overlap]))
        nxt = []
        for key, a in zip(frontier, areas):
            d, i, j = key
            if a <= 0.0:
                qt.leaves.add(key)
                continue
            s = qt.leaf_side(key)
            want = float(size_field(qt.leaf_center(key)))
            if s <= want:
                qt.leaves.add(key)
            elif d >= max_depth:
                qt.leaves.add(key)
                depth_hit = True
            else:
                nxt.extend((d + 1, 2 * i + di, 2 * j + dj) for di in (0, 1) for dj in (0, 1))
        frontier = nxt
    if depth_hit:
        warnings.warn(
            "size field not reached on some leaves; max_depth hit", DepthExceededWarning
        )
    return qt


_NEIGHBOR_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def balance_quadtree(qt: Quadtree) -> Quadtree:
    """Enforce 2:1 balance: edge-adjacent leaves differ by at most one depth
    level.  Refinement only; the tree is mutated in place and returned."""
    work = sorted(qt.leaves)
    while work:
        key = work.pop()
        if key not in qt.leaves:
            continue
        d, i, j = key
        span = 1 << d
        for di, dj in _NEIGHBOR_STEPS:
            ni, nj = i + di, j + dj
            if ni < 0 or nj < 0 or ni >= span or nj >= span:
                continue
            nb = qt.covering_leaf(d, ni, nj)
            if nb is None or d - nb[0] < 2:
                continue
            children = qt.split(nb)
            work.extend(children)
            work.append(key)
            break
    return qt


def refine_cells(qt: Quadtree, marked) -> Quadtree:
    """Split every marked leaf into 4 and re-balance.  Marked leaves already
    at max_depth are left alone with a warning."""
    blocked = 0
    for key in sorted(marked):
        if key not in qt.leaves:
            raise MeshError(f"{key} is not a leaf of this quadtree")
        if key[0] >= qt.max_depth:
            blocked += 1
            continue
        qt.split(key)
    if blocked:
        warnings.warn(
            f"{blocked} marked leaves already at max_depth; left unsplit",
            DepthExceededWarning,
        )
    return balance_quadtree(qt)


def _dedup_points(points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Collapse points closer than tol.  Returns (unique points, index map)."""
    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(points))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(len(points))])
    uniq, inverse = np.unique(roots, return_inverse=True)
    return points[uniq], inverse


def quadtree_to_mesh(qt: Quadtree, domain, tag_rule=None) -> PolyMesh:
    """Convert leaves overlapping the domain into a conforming PolyMesh.

    Interior leaves become squares (pentagons/hexagons/... once hanging
    vertices are inserted); boundary leaves are clipped against the domain
    polygon, and clipped remnants smaller than SLIVER_FRACTION of their
    square are merged into the neighbor sharing the longest edge.
    """
    poly = _as_shapely(domain)
    shapely.prepare(poly)
    eps = DEDUP_FACTOR * qt.root_size

    cell_polys: list[np.ndarray] = []
    cell_keys: list[LeafKey] = []
    slivers: list[int] = []
    for key in sorted(qt.leaves):
        corners = qt.leaf_corners(key)
        box = shapely.box(corners[0, 0], corners[0, 1], corners[2, 0], corners[2, 1])
        if not shapely.intersects(poly, box):
            continue
        if shapely.contains_properly(poly, box):
            cell_polys.append(corners)
            cell_keys.append(key)
            continue
        clip = poly.intersection(box)
        parts = list(clip.geoms) if clip.geom_type.startswith("Multi") else [clip]
        full = box.area
        for part in parts:
            if part.geom_type != "Polygon" or part.area <= 0.0:
                continue
            part = shapely_orient(part, sign=1.0)
            coords = np.asarray(part.exterior.coords)[:-1]
            if part.area < SLIVER_FRACTION * full:
                slivers.append(len(cell_polys))
            cell_polys.append(coords)
            cell_keys.append(key)

    if not cell_polys:
        raise EmptyDomainError("no quadtree leaf overlaps the domain")

    for idx in sorted(slivers, key=lambda s: ShapelyPolygon(cell_polys[s]).area):
        sliver_poly = ShapelyPolygon(cell_polys[idx])
        best, best_len = -1, 0.0
        for other in range(len(cell_polys)):
            if other == idx or other in slivers or cell_polys[other] is None:
                continue
            shared = sliver_poly.boundary.intersection(ShapelyPolygon(cell_polys[other]).boundary).length
            if shared > best_len:
                best, best_len = other, shared
        if best < 0:
            cell_polys[idx] = None  # isolated sliver: drop it
            continue
        merged = ShapelyPolygon(cell_polys[best]).union(sliver_poly)
        if merged.geom_type != "Polygon":
            raise ClipFailureError("sliver merge produced a non-polygonal cell")
        merged = shapely_orient(merged, sign=1.0)
        cell_polys[best] = np.asarray(merged.exterior.coords)[:-1]
        cell_polys[idx] = None

    keep = [i for i, p in enumerate(cell_polys) if p is not None]
    cell_polys = [cell_polys[i] for i in keep]
    cell_keys = [cell_keys[i] for i in keep]

    all_pts = np.vstack(cell_polys)
    verts, index_map = _dedup_points(all_pts, eps)
    tree = cKDTree(verts)

    loops: list[list[int]] = []
    offset = 0
    for coords in cell_polys:
        ids = index_map[offset : offset + len(coords)]
        offset += len(coords)
        loop: list[int] = []
        for a in range(len(ids)):
            b = (a + 1) % len(ids)
            va, vb = int(ids[a]), int(ids[b])
            if va == vb:
                continue
            loop.append(va)
            pa, pb = verts[va], verts[vb]
            edge = pb - pa
            length = float(np.hypot(*edge))
            mid = 0.5 * (pa + pb)
            near = tree.query_ball_point(mid, 0.5 * length + eps)
            interior: list[tuple[float, int]] = []
            for v in near:
                if v == va or v == vb:
                    continue
                rel = verts[v] - pa
                t = float(rel @ edge) / (length * length)
                if t <= 0.0 or t >= 1.0:
                    continue
                off = abs(rel[0] * edge[1] - rel[1] * edge[0]) / length
                if off < eps:
                    interior.append((t, v))
            loop.extend(v for _, v in sorted(interior))
        # drop accidental wrap-around duplicate
        dedup = [v for k, v in enumerate(loop) if v != loop[(k - 1) % len(loop)]]
        loops.append(dedup)

    mesh = build_poly_mesh(verts, loops, boundary_tags=None)
    if tag_rule is not None:
        from .geometry import tag_boundary_edges

        mesh = tag_boundary_edges(mesh, tag_rule)
    mesh.source_keys = list(cell_keys)
    return mesh
