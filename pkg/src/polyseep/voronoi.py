"""Bounded Voronoi meshes on convex domains via the mirrored-seed trick.

Reflecting every seed across each domain edge makes the edge lines exact
Voronoi bisectors, so the cells of the original seeds tile the domain with
no clipping step.  All cells are convex, which keeps the whole mesh on the
Wachspress code path.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .errors import MeshError
from .geometry import PolyMesh, build_poly_mesh, polygon_area, tag_boundary_edges


def _reflect(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mirror points across the line through a and b."""
    d = b - a
    d = d / np.hypot(*d)
    rel = points - a
    along = rel @ d
    proj = a + along[:, None] * d
    return 2.0 * proj - points


def voronoi_mesh(domain: np.ndarray, seeds: np.ndarray, tag_rule=None) -> PolyMesh:
    """Voronoi tessellation of a convex CCW polygon restricted to it."""
    domain = np.asarray(domain, dtype=float)
    seeds = np.asarray(seeds, dtype=float)
    if len(seeds) < 3:
        raise MeshError("need at least 3 seeds")
    pts = [seeds]
    for i in range(len(domain)):
        pts.append(_reflect(seeds, domain[i], domain[(i + 1) % len(domain)]))
    vor = Voronoi(np.vstack(pts))

    scale = max(np.ptp(domain[:, 0]), np.ptp(domain[:, 1]))
    eps = 1e-9 * scale
    raw_loops = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshError(f"seed {i} produced an unbounded cell; seeds must lie inside")
        poly = vor.vertices[region]
        if polygon_area(poly) < 0:
            region = region[::-1]
            poly = poly[::-1]
        raw_loops.append(np.asarray(region))

    used = sorted({v for loop in raw_loops for v in loop})
    remap = {v: k for k, v in enumerate(used)}
    verts = vor.vertices[used]
    # merge near-duplicate Voronoi vertices (degenerate near-cocircular seeds)
    tree = cKDTree(verts)
    groups = tree.query_pairs(eps, output_type="ndarray")
    canon = np.arange(len(verts))
    for a, b in groups:
        ra, rb = canon[a], canon[b]
        canon[canon == max(ra, rb)] = min(ra, rb)
    uniq, inverse = np.unique(canon, return_inverse=True)
    verts = verts[uniq]
    loops = []
    for loop in raw_loops:
        ids = [int(inverse[remap[v]]) for v in loop]
        ids = [v for k, v in enumerate(ids) if v != ids[k - 1]]
        loops.append(ids)

    mesh = build_poly_mesh(verts, loops)
    if tag_rule is not None:
        mesh = tag_boundary_edges(mesh, tag_rule)
    return mesh


def hex_seeds(
    bbox: tuple[float, float, float, float], pitch: float, vertical: bool = False
) -> np.ndarray:
    """Hexagonal lattice covering a bounding box at the given spacing.

    vertical=True staggers columns instead of rows (pointy-top cells).
    Useful when the default row alignment is degenerate for the problem:
    level sets that run nearly parallel to the lattice rows graze a whole
    row of cell centroids at once, and vertical domain boundaries clip
    staggered rows into unevenly spaced boundary segments.
    """
    if vertical:
        x0, y0, x1, y1 = bbox
        s = hex_seeds((y0, x0, y1, x1), pitch)
        return s[:, ::-1].copy()
    x0, y0, x1, y1 = bbox
    dy = pitch * np.sqrt(3.0) / 2.0
    rows = int(np.ceil((y1 - y0) / dy)) + 1
    cols = int(np.ceil((x1 - x0) / pitch)) + 1
    out = []
    for r in range(rows):
        y = y0 + (r + 0.5) * dy
        shift = 0.25 * pitch if r % 2 else -0.25 * pitch
        for c in range(cols):
            x = x0 + (c + 0.5) * pitch + shift
            if x0 < x < x1 and y0 < y < y1:
                out.append((x, y))
    return np.array(out)


def graded_seeds(
    bbox: tuple[float, float, float, float],
    fine_pitch: float,
    coarse_pitch: float,
    fine_region,
    jitter: float = 0.0,
    seed: int = 0,
    vertical: bool = False,
) -> np.ndarray:
    """Two hexagonal lattices: fine inside fine_region(point), coarse outside.

    Coarse points falling inside the fine region (plus one coarse pitch of
    guard band) are discarded so the lattices do not overlap.
    """
    fine = hex_seeds(bbox, fine_pitch, vertical=vertical)
    coarse = hex_seeds(bbox, coarse_pitch, vertical=vertical)
    fine = fine[[bool(fine_region(p)) for p in fine]]
    keep = []
    if len(fine):
        tree = cKDTree(fine)
        d, _ = tree.query(coarse)
        keep = d > 0.6 * coarse_pitch
        coarse = coarse[keep]
    pts = np.vstack([fine, coarse]) if len(fine) else coarse
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        pts = pts + rng.uniform(-jitter, jitter, size=pts.shape)
    return pts
