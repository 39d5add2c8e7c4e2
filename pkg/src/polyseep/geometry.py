"""Polygonal mesh construction, validation and serialization.

A mesh is a flat list of vertices plus polygonal cells given as
counter-clockwise vertex loops.  Hanging nodes produced by local refinement
are ordinary (collinear) vertices of the coarse cell's loop, so no
constraint bookkeeping is needed anywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DanglingVertexError,
    DegenerateCellError,
    MeshError,
    NonConformingError,
    SelfIntersectingError,
)

# Relative area tolerance below which a cell is considered degenerate.
AREA_REL_TOL = 1e-12


def polygon_area(points: np.ndarray) -> float:
    """Signed shoelace area of a closed loop given as an (n, 2) array."""
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(points: np.ndarray) -> np.ndarray:
    """Area centroid of a simple polygon (falls back to the vertex mean
    for near-zero areas)."""
    x = points[:, 0]
    y = points[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    a = 0.5 * np.sum(cross)
    if abs(a) < 1e-300:
        return points.mean(axis=0)
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * a)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * a)
    return np.array([cx, cy])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """True if the open segments (p1,p2) and (q1,q2) properly intersect."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def is_simple_polygon(points: np.ndarray) -> bool:
    """Check a vertex loop for proper self-intersections (shared endpoints
    of adjacent edges are fine, collinear hanging vertices are fine)."""
    n = len(points)
    for i in range(n):
        a1, a2 = points[i], points[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = points[j], points[(j + 1) % n]
            if _segments_intersect(a1, a2, b1, b2):
                return False
    return True


def point_in_polygon(points: np.ndarray, p, tol: float = 0.0) -> bool:
    """True if ``p`` is inside the polygon or within ``tol`` of its boundary."""
    x, y = float(p[0]), float(p[1])
    n = len(points)
    if tol > 0.0 and point_edge_distance(points, p) <= tol:
        return True
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = points[i]
        xj, yj = points[j]
        if (yi > y) != (yj > y):
            x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def point_edge_distance(points: np.ndarray, p) -> float:
    """Distance from ``p`` to the nearest polygon edge."""
    p = np.asarray(p, dtype=float)
    a = points
    b = np.roll(points, -1, axis=0)
    ab = b - a
    ap = p[None, :] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", ap, ab) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = np.linalg.norm(p[None, :] - proj, axis=1)
    return float(d.min())


@dataclass
class PolyCell:
    """One polygonal element: an ordered CCW loop of vertex indices."""

    vertex_ids: np.ndarray
    region_id: int = 0


@dataclass
class PolyMesh:
    """Immutable-by-convention polygonal mesh.

    boundary_edges holds (va, vb, tag) triples; untagged boundary edges
    carry the empty tag and behave as natural (no-flux) boundaries.
    """

    vertices: np.ndarray
    cells: list[PolyCell]
    boundary_edges: list[tuple[int, int, str]] = field(default_factory=list)
    # generator-specific provenance (e.g. quadtree leaf key per cell)
    source_keys: list | None = field(default=None, repr=False, compare=False)

    _areas: np.ndarray | None = field(default=None, repr=False, compare=False)
    _centroids: np.ndarray | None = field(default=None, repr=False, compare=False)
    _bboxes: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def cell_points(self, i: int) -> np.ndarray:
        return self.vertices[self.cells[i].vertex_ids]

    def areas(self) -> np.ndarray:
        if self._areas is None:
            self._areas = np.array(
                [polygon_area(self.cell_points(i)) for i in range(self.num_cells)]
            )
        return self._areas

    def centroids(self) -> np.ndarray:
        if self._centroids is None:
            self._centroids = np.array(
                [polygon_centroid(self.cell_points(i)) for i in range(self.num_cells)]
            )
        return self._centroids

    def bboxes(self) -> np.ndarray:
        """(nc, 4) array of per-cell [xmin, ymin, xmax, ymax]."""
        if self._bboxes is None:
            out = np.empty((self.num_cells, 4))
            for i in range(self.num_cells):
                pts = self.cell_points(i)
                out[i] = [pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max()]
            self._bboxes = out
        return self._bboxes

    def total_area(self) -> float:
        return float(self.areas().sum())

    def boundary_nodes(self, tag: str | None = None) -> np.ndarray:
        """Sorted vertex indices on boundary edges (optionally one tag only)."""
        nodes: set[int] = set()
        for va, vb, t in self.boundary_edges:
            if tag is None or t == tag:
                nodes.add(va)
                nodes.add(vb)
        return np.array(sorted(nodes), dtype=int)

    def boundary_tags(self) -> set[str]:
        return {t for _, _, t in self.boundary_edges}

    def locate_point(self, p, tol: float | None = None) -> int:
        """Index of the cell containing ``p`` (lowest id wins on shared
        edges); -1 if no cell contains the point."""
        p = np.asarray(p, dtype=float)
        boxes = self.bboxes()
        if tol is None:
            tol = 1e-12 * max(
                float(np.ptp(self.vertices[:, 0])), float(np.ptp(self.vertices[:, 1])), 1.0
            )
        hit = np.where(
            (boxes[:, 0] - tol <= p[0])
            & (p[0] <= boxes[:, 2] + tol)
            & (boxes[:, 1] - tol <= p[1])
            & (p[1] <= boxes[:, 3] + tol)
        )[0]
        for i in hit:
            if point_in_polygon(self.cell_points(int(i)), p, tol=tol):
                return int(i)
        return -1


def edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def edge_incidence(cells: list[PolyCell]) -> dict[tuple[int, int], list[int]]:
    """Map undirected edge -> list of incident cell indices."""
    inc: dict[tuple[int, int], list[int]] = {}
    for ci, cell in enumerate(cells):
        ids = cell.vertex_ids
        for k in range(len(ids)):
            key = edge_key(int(ids[k]), int(ids[(k + 1) % len(ids)]))
            inc.setdefault(key, []).append(ci)
    return inc


def build_poly_mesh(
    vertices,
    cells,
    boundary_tags: dict[tuple[int, int], str] | None = None,
    region_ids=None,
) -> PolyMesh:
    """Validate raw vertex/loop data into a PolyMesh.

    Clockwise loops are silently reversed.  Raises on self-intersecting
    loops, near-zero-area cells and vertices referenced by no cell.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise MeshError("vertices must be an (n, 2) array")
    if not np.all(np.isfinite(verts)):
        raise MeshError("non-finite vertex coordinates")

    nv = len(verts)
    poly_cells: list[PolyCell] = []
    for ci, loop in enumerate(cells):
        ids = np.asarray(loop, dtype=int)
        rid = int(region_ids[ci]) if region_ids is not None else 0
        if len(ids) < 3:
            raise DegenerateCellError(f"cell {ci}: fewer than 3 vertices")
        if len(set(ids.tolist())) != len(ids):
            raise DegenerateCellError(f"cell {ci}: repeated vertex index")
        if ids.min() < 0 or ids.max() >= nv:
            raise MeshError(f"cell {ci}: vertex index out of range")
        pts = verts[ids]
        if polygon_area(pts) < 0.0:
            ids = ids[::-1].copy()
            pts = verts[ids]
        if not is_simple_polygon(pts):
            raise SelfIntersectingError(f"cell {ci}: self-intersecting loop")
        poly_cells.append(PolyCell(vertex_ids=ids, region_id=rid))

    areas = np.array([polygon_area(verts[c.vertex_ids]) for c in poly_cells])
    total = float(areas.sum())
    eps_a = AREA_REL_TOL * total
    bad = np.where(areas <= eps_a)[0]
    if len(bad):
        raise DegenerateCellError(f"cells {bad.tolist()}: area below tolerance {eps_a:g}")

    used = np.zeros(nv, dtype=bool)
    for c in poly_cells:
        used[c.vertex_ids] = True
    if not used.all():
        raise DanglingVertexError(f"unreferenced vertices: {np.where(~used)[0].tolist()}")

    inc = edge_incidence(poly_cells)
    over = [k for k, v in inc.items() if len(v) > 2]
    if over:
        raise NonConformingError(f"edges shared by more than two cells: {over[:5]}")

    tags = dict(boundary_tags) if boundary_tags else {}
    tags = {edge_key(*k): v for k, v in tags.items()}
    for key in tags:
        if key not in inc:
            raise MeshError(f"tagged edge {key} does not exist in the mesh")
        if len(inc[key]) != 1:
            raise MeshError(f"tagged edge {key} is not a boundary edge")

    boundary = []
    for key in sorted(k for k, v in inc.items() if len(v) == 1):
        boundary.append((key[0], key[1], tags.get(key, "")))

    return PolyMesh(vertices=verts, cells=poly_cells, boundary_edges=boundary)


def polygon_area_centroid(cell: PolyCell, mesh: PolyMesh) -> tuple[float, np.ndarray]:
    """Shoelace area and area centroid of one cell."""
    pts = mesh.vertices[cell.vertex_ids]
    return polygon_area(pts), polygon_centroid(pts)


def tag_boundary_edges(mesh: PolyMesh, rule) -> PolyMesh:
    """Re-tag boundary edges in place: ``rule(midpoint, (va, vb)) -> str``."""
    new_edges = []
    for va, vb, _ in mesh.boundary_edges:
        mid = 0.5 * (mesh.vertices[va] + mesh.vertices[vb])
        new_edges.append((va, vb, rule(mid, (va, vb))))
    mesh.boundary_edges = new_edges
    return mesh


# -- text serialization ------------------------------------------------------
#
# Format:
#   polymesh 1
#   nv nc nb
#   x y                      (nv lines)
#   k region v0 ... v(k-1)   (nc lines)
#   va vb tag                (nb lines)
#
# Floats are written with repr() so a read/write cycle is bit-exact.


def write_mesh_text(mesh: PolyMesh, path) -> None:
    lines = ["polymesh 1"]
    lines.append(f"{mesh.num_vertices} {mesh.num_cells} {len(mesh.boundary_edges)}")
    for x, y in mesh.vertices:
        lines.append(f"{float(x)!r} {float(y)!r}")
    for cell in mesh.cells:
        ids = " ".join(str(int(v)) for v in cell.vertex_ids)
        lines.append(f"{len(cell.vertex_ids)} {cell.region_id} {ids}")
    for va, vb, tag in mesh.boundary_edges:
        lines.append(f"{va} {vb} {tag}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh_text(path) -> PolyMesh:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0].strip() != "polymesh 1":
        raise MeshError(f"{path}: missing 'polymesh 1' header")
    nv, nc, nb = (int(t) for t in lines[1].split())
    row = 2
    verts = np.empty((nv, 2))
    for i in range(nv):
        xs, ys = lines[row + i].split()
        verts[i] = (float(xs), float(ys))
    row += nv
    loops = []
    regions = []
    for i in range(nc):
        parts = lines[row + i].split()
        k = int(parts[0])
        regions.append(int(parts[1]))
        loops.append([int(t) for t in parts[2 : 2 + k]])
    row += nc
    tags: dict[tuple[int, int], str] = {}
    for i in range(nb):
        parts = lines[row + i].split(maxsplit=2)
        va, vb = int(parts[0]), int(parts[1])
        tags[(va, vb)] = parts[2] if len(parts) > 2 else ""
    return build_poly_mesh(verts, loops, boundary_tags=tags, region_ids=regions)
