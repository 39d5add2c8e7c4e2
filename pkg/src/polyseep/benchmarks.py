"""Benchmark geometries, meshes, and problem definitions.

Four families: a unit-square patch test (polygonal, minimal quadtree, and
Voronoi variants), steady confined flow under a dam foundation, the
rectangular dam with a free surface and seepage face, and a trapezoidal
earth dam with a sloped downstream face.
"""

from __future__ import annotations

import numpy as np

from .freesurface import FreeSurfaceConfig
from .geometry import PolyMesh, build_poly_mesh, tag_boundary_edges
from .quadtree import Quadtree, balance_quadtree, generate_quadtree, quadtree_to_mesh
from .seepage import SeepageProblem
from .voronoi import graded_seeds, hex_seeds, voronoi_mesh

# analytic exit-point elevation for the 1.0 m / 0.5 m rectangular dam
RECT_DAM_EXIT_ANALYTIC = 0.662382
# infinite-depth analytic heads under the foundation at the two monitoring points
FOUNDATION_REFERENCE = (60.0, 40.0)
FOUNDATION_POINTS = ((100.0, 80.0), (140.0, 80.0))


def _near(a: float, b: float, tol: float = 1e-9) -> bool:
    return abs(a - b) <= tol


# ---------------------------------------------------------------- patch test

def patch_polygonal_mesh() -> PolyMesh:
    """15-element, 30-node brick-pattern mesh of the unit square.

    The middle row is cut at offset abscissae, so row-interface nodes turn
    into collinear (hanging-style) vertices of the neighboring bricks.
    """
    xs_outer = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    xs_mid = [0.0, 0.2, 0.45, 0.65, 0.85, 1.0]
    ys = [0.0, 0.35, 0.65, 1.0]
    level_x = [
        xs_outer,
        sorted(set(xs_outer) | set(xs_mid)),
        sorted(set(xs_outer) | set(xs_mid)),
        xs_outer,
    ]
    verts = []
    index = {}
    for li, (y, xs) in enumerate(zip(ys, level_x)):
        for x in xs:
            index[(li, x)] = len(verts)
            verts.append((x, y))

    def chain(level: int, x_lo: float, x_hi: float, reverse: bool = False) -> list[int]:
        xs = [x for x in level_x[level] if x_lo - 1e-12 <= x <= x_hi + 1e-12]
        if reverse:
            xs = xs[::-1]
        return [index[(level, x)] for x in xs]

    cells = []
    rows = [(0, 1, xs_outer), (1, 2, xs_mid), (2, 3, xs_outer)]
    for lo, hi, xs in rows:
        for a, b in zip(xs[:-1], xs[1:]):
            loop = chain(lo, a, b) + chain(hi, a, b, reverse=True)
            cells.append(loop)

    def tags(mid, edge):
        if _near(mid[1], 1.0):
            return "top"
        if _near(mid[1], 0.0):
            return "bottom"
        return ""

    mesh = build_poly_mesh(np.array(verts, dtype=float), cells)
    return tag_boundary_edges(mesh, tags)


def patch_quadtree_mesh() -> PolyMesh:
    """3-element, 8-node hybrid mesh: one hanging-vertex pentagon and two
    squares on the unit square."""
    verts = np.array(
        [
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 0.5],
            [0.5, 0.5],
            [0.0, 0.5],
            [0.0, 1.0],
            [0.5, 1.0],
            [1.0, 1.0],
        ]
    )
    cells = [[0, 1, 2, 3, 4], [4, 3, 6, 5], [3, 2, 7, 6]]

    def tags(mid, edge):
        if _near(mid[1], 1.0):
            return "top"
        if _near(mid[1], 0.0):
            return "bottom"
        return ""

    return tag_boundary_edges(build_poly_mesh(verts, cells), tags)


def patch_voronoi_mesh(n: int = 24, seed: int = 7) -> PolyMesh:
    """Random-seed Voronoi mesh of the unit square; all cells strictly convex."""
    rng = np.random.default_rng(seed)
    seeds = rng.uniform(0.08, 0.92, size=(n, 2))

    def tags(mid, edge):
        if _near(mid[1], 1.0):
            return "top"
        if _near(mid[1], 0.0):
            return "bottom"
        return ""

    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return voronoi_mesh(square, seeds, tag_rule=tags)


def patch_problem(mesh: PolyMesh, k: float = 1e-5, top: float = 3.0, bottom: float = 1.0) -> SeepageProblem:
    return SeepageProblem(
        mesh=mesh,
        conductivity={0: k},
        dirichlet={"top": top, "bottom": bottom},
    )


def patch_exact(mesh: PolyMesh, top: float = 3.0, bottom: float = 1.0) -> np.ndarray:
    return bottom + (top - bottom) * mesh.vertices[:, 1]


# ------------------------------------------------------- dam foundation flow

FOUNDATION_DOMAIN = np.array([[0.0, 0.0], [240.0, 0.0], [240.0, 80.0], [0.0, 80.0]])


def foundation_tags(mid, edge):
    if _near(mid[1], 80.0):
        if mid[0] < 80.0:
            return "ab"
        if mid[0] > 160.0:
            return "cd"
    return ""


FOUNDATION_CORNERS = np.array([[80.0, 80.0], [160.0, 80.0]])


def dam_foundation_mesh(size: float, corner_levels: int = 2, radius_factor: float = 3.0) -> PolyMesh:
    """Quadtree mesh of the 240 m x 80 m foundation block.

    The 320 m root keeps 20/10/5/2.5 m cells exactly dyadic, so the grid
    lines hit the dam-base corners (80, 160) and the domain edges exactly.
    The head boundary condition switches type at those corners, which makes
    the gradient singular there; pointwise accuracy at interior monitoring
    points needs the corners resolved, so the background size is halved
    ``corner_levels`` times in shrinking disks around them.
    """

    def field(p):
        d = float(np.min(np.hypot(FOUNDATION_CORNERS[:, 0] - p[0], FOUNDATION_CORNERS[:, 1] - p[1])))
        s = float(size)
        for level in range(1, corner_levels + 1):
            if d < radius_factor * size / 2 ** (level - 1):
                s = size / 2**level
        return s

    qt = generate_quadtree(FOUNDATION_DOMAIN, field, max_depth=10, root_size=320.0)
    balance_quadtree(qt)
    return quadtree_to_mesh(qt, FOUNDATION_DOMAIN, tag_rule=foundation_tags)


def dam_foundation_problem(mesh: PolyMesh, k: float = 1e-4) -> SeepageProblem:
    return SeepageProblem(
        mesh=mesh,
        conductivity={0: k},
        dirichlet={"ab": 80.0, "cd": 20.0},
    )


# -------------------------------------------------------- rectangular dam

RECT_DAM_DOMAIN = np.array([[0.0, 0.0], [0.5, 0.0], [0.5, 1.0], [0.0, 1.0]])
RECT_DAM_H1 = 1.0
RECT_DAM_H2 = 0.5


def rect_dam_tags(mid, edge):
    if _near(mid[0], 0.0):
        return "gamma1"
    if _near(mid[0], 0.5):
        return "gamma5" if mid[1] < RECT_DAM_H2 else "gamma4"
    return ""


def rect_dam_quadtree(fine: float = 0.0125, coarse: float = 0.05) -> tuple[PolyMesh, Quadtree]:
    """Pre-refined quadtree mesh: fine band over the upper half where the
    phreatic surface lives, coarse below."""

    def size_field(p):
        return fine if p[1] > 0.45 else coarse

    qt = generate_quadtree(RECT_DAM_DOMAIN, size_field, max_depth=9, root_size=1.6)
    balance_quadtree(qt)
    return quadtree_to_mesh(qt, RECT_DAM_DOMAIN, tag_rule=rect_dam_tags), qt


def rect_dam_coarse(size: float = 0.05) -> tuple[PolyMesh, Quadtree]:
    """Uniform coarse quadtree start mesh for the adaptive loop."""
    qt = generate_quadtree(RECT_DAM_DOMAIN, float(size), max_depth=7, root_size=1.6)
    balance_quadtree(qt)
    return quadtree_to_mesh(qt, RECT_DAM_DOMAIN, tag_rule=rect_dam_tags), qt


def rect_dam_voronoi(fine: float = 0.0125, coarse: float = 0.05) -> PolyMesh:
    """Graded polygonal (Voronoi) mesh with the same fine band.

    Column-staggered lattice: the downstream face then cuts the cells into
    uniformly spaced boundary segments, and the nearly horizontal phreatic
    line never grazes a whole row of cell centroids at once (either of
    which leaves the seepage-face iteration hunting between equivalent
    discrete states).
    """
    seeds = graded_seeds(
        (0.0, 0.0, 0.5, 1.0),
        fine_pitch=fine,
        coarse_pitch=coarse,
        fine_region=lambda p: p[1] > 0.45,
        vertical=True,
    )
    return voronoi_mesh(RECT_DAM_DOMAIN, seeds, tag_rule=rect_dam_tags)


def rect_dam_problem(mesh: PolyMesh, k: float = 1.0) -> SeepageProblem:
    return SeepageProblem(
        mesh=mesh,
        conductivity={0: k},
        dirichlet={"gamma1": RECT_DAM_H1, "gamma5": RECT_DAM_H2},
    )


def rect_dam_config(**overrides) -> FreeSurfaceConfig:
    defaults = dict(gamma4="gamma4")
    defaults.update(overrides)
    return FreeSurfaceConfig(**defaults)


# Adaptive runs restart refinement from this 0.05 m background mesh; two
# outer cycles land the surface band at the pre-refined mesh's 0.0125 m.
RECT_DAM_ADAPTIVE_OUTER = 2


# -------------------------------------------------------- trapezoidal dam

TRAPEZOID_DOMAIN = np.array(
    [[0.0, 0.0], [14.0, 0.0], [8.0, 6.0], [6.0, 6.0]]
)
TRAPEZOID_H1 = 5.0
TRAPEZOID_H2 = 1.0


def _on_segment(p, a, b, tol=1e-9) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    rel = np.asarray(p, dtype=float) - a
    cross = d[0] * rel[1] - d[1] * rel[0]
    if abs(cross) > tol * np.hypot(*d):
        return False
    t = float(rel @ d) / float(d @ d)
    return -tol <= t <= 1.0 + tol


def trapezoid_tags(mid, edge):
    if _on_segment(mid, (0.0, 0.0), (6.0, 6.0)):
        return "gamma1" if mid[1] < TRAPEZOID_H1 else ""
    if _on_segment(mid, (8.0, 6.0), (14.0, 0.0)):
        return "gamma5" if mid[1] < TRAPEZOID_H2 else "gamma4"
    return ""


def trapezoid_quadtree(fine: float = 0.0625, coarse: float = 0.25) -> tuple[PolyMesh, Quadtree]:
    """Pre-refined quadtree mesh with a fine band across the expected
    phreatic-surface corridor."""

    def size_field(p):
        return fine if 2.5 < p[1] < 5.4 else coarse

    qt = generate_quadtree(TRAPEZOID_DOMAIN, size_field, max_depth=9, root_size=16.0)
    balance_quadtree(qt)
    return quadtree_to_mesh(qt, TRAPEZOID_DOMAIN, tag_rule=trapezoid_tags), qt


def trapezoid_coarse(size: float = 0.25) -> tuple[PolyMesh, Quadtree]:
    qt = generate_quadtree(TRAPEZOID_DOMAIN, float(size), max_depth=8, root_size=16.0)
    balance_quadtree(qt)
    return quadtree_to_mesh(qt, TRAPEZOID_DOMAIN, tag_rule=trapezoid_tags), qt


def trapezoid_problem(mesh: PolyMesh, k: float = 1.0) -> SeepageProblem:
    return SeepageProblem(
        mesh=mesh,
        conductivity={0: k},
        dirichlet={"gamma1": TRAPEZOID_H1, "gamma5": TRAPEZOID_H2},
    )


def trapezoid_config(**overrides) -> FreeSurfaceConfig:
    """Free-surface settings for the trapezoidal dam.

    The adaptive run starts from the 1 m background mesh and refines the
    surface band three times, reaching the same 0.0625 m band resolution
    as the pre-refined mesh at a fraction of its node count.
    """
    defaults = dict(gamma4="gamma4", max_outer=3)
    defaults.update(overrides)
    return FreeSurfaceConfig(**defaults)


TRAPEZOID_ADAPTIVE_BASE = 1.0
