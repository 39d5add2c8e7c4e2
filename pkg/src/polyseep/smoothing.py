"""Smoothing cells, smoothed gradient operators, and system assembly.

Each polygonal element is fanned into one triangular smoothing cell per
edge (edge endpoints + element centroid).  The smoothed gradient on a
subcell is a pure boundary integral of the shape functions,

    B_I = (1/A_C) sum_edges (integral of N_I along the edge) * n_edge,

so no shape-function derivatives are ever formed.  Stiffness follows as
Ke = sum_C A_C B^T k B; the capacity matrix integrates N^T S_s N with a
degree-4 triangle rule per subcell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    ConflictingDirichletError,
    DegenerateCellError,
    MissingMaterialError,
    NonSPDConductivityError,
    UntaggedNeumannEdgeError,
)
from .geometry import PolyMesh, polygon_area, polygon_centroid
from .shapefn import (
    TRI6_BARY,
    TRI6_WEIGHTS,
    EdgeQuadRule,
    ShapeBasis,
    edge_shape_integral,
    gauss_rule_unit,
)

DEFAULT_EDGE_RULE = gauss_rule_unit(4)
SUBCELL_DROP_REL = 1e-12  # |A_C| below this x element area: dropped (collinear vertex)


@dataclass(frozen=True)
class SmoothingCell:
    """Triangular smoothing subcell: two element vertices plus the centroid."""

    verts: np.ndarray          # (3, 2), CCW
    area: float
    edge_lengths: np.ndarray   # (3,)
    normals: np.ndarray        # (3, 2) outward unit normals
    edge_id: int               # element edge this subcell is fanned from

    @property
    def centroid(self) -> np.ndarray:
        return self.verts.mean(axis=0)


@dataclass(frozen=True)
class SmoothedGradOp:
    """B[2, n]: column I maps nodal value I to the smoothed gradient."""

    b: np.ndarray


def _triangle_subcell(tri: np.ndarray, edge_id: int) -> SmoothingCell:
    e = np.roll(tri, -1, axis=0) - tri
    lengths = np.hypot(e[:, 0], e[:, 1])
    normals = np.column_stack([e[:, 1], -e[:, 0]]) / lengths[:, None]
    return SmoothingCell(
        verts=tri,
        area=polygon_area(tri),
        edge_lengths=lengths,
        normals=normals,
        edge_id=edge_id,
    )


def build_smoothing_cells(cell, mesh: PolyMesh) -> list[SmoothingCell]:
    """Centroid-fan subdivision; zero-area triangles (from collinear hanging
    vertices) are dropped so they never divide by A_C."""
    pts = mesh.vertices[cell.vertex_ids]
    area = polygon_area(pts)
    c = polygon_centroid(pts)
    drop = SUBCELL_DROP_REL * area
    out = []
    for i in range(len(pts)):
        tri = np.array([pts[i], pts[(i + 1) % len(pts)], c])
        a = polygon_area(tri)
        if a <= drop:
            if a < -drop:
                raise DegenerateCellError("inverted smoothing subcell")
            continue
        out.append(_triangle_subcell(tri, i))
    total = sum(s.area for s in out)
    if abs(total - area) > 1e-10 * area:
        raise DegenerateCellError("smoothing-cell areas do not tile the element")
    return out


def smoothed_grad_op(
    cell,
    mesh: PolyMesh,
    sc: SmoothingCell,
    shapes: ShapeBasis | None = None,
    rule: EdgeQuadRule = DEFAULT_EDGE_RULE,
) -> SmoothedGradOp:
    if shapes is None:
        shapes = ShapeBasis(mesh.vertices[cell.vertex_ids])
    b = np.zeros((2, shapes.n))
    for e in range(3):
        seg = (sc.verts[e], sc.verts[(e + 1) % 3])
        integ = edge_shape_integral(shapes.points, seg, rule, basis=shapes)
        b += np.outer(sc.normals[e], integ)
    return SmoothedGradOp(b=b / sc.area)


def _conductivity_tensor(k) -> np.ndarray:
    kt = np.asarray(k, dtype=float)
    if kt.ndim == 0:
        kt = float(kt) * np.eye(2)
    if kt.shape != (2, 2) or abs(kt[0, 1] - kt[1, 0]) > 1e-12 * max(1.0, abs(kt).max()):
        raise NonSPDConductivityError("conductivity must be a symmetric 2x2 tensor")
    ev = np.linalg.eigvalsh(kt)
    if ev[0] <= 0.0:
        raise NonSPDConductivityError(f"conductivity eigenvalues {ev.tolist()} not positive")
    return kt


def element_stiffness(
    cell,
    mesh: PolyMesh,
    k_tensor,
    shapes: ShapeBasis | None = None,
    rule: EdgeQuadRule = DEFAULT_EDGE_RULE,
) -> np.ndarray:
    kt = _conductivity_tensor(k_tensor)
    if shapes is None:
        shapes = ShapeBasis(mesh.vertices[cell.vertex_ids])
    ke = np.zeros((shapes.n, shapes.n))
    for sc in build_smoothing_cells(cell, mesh):
        b = smoothed_grad_op(cell, mesh, sc, shapes, rule).b
        ke += sc.area * (b.T @ kt @ b)
    return ke


def element_capacity(cell, mesh: PolyMesh, s_s: float, shapes: ShapeBasis | None = None) -> np.ndarray:
    if shapes is None:
        shapes = ShapeBasis(mesh.vertices[cell.vertex_ids])
    me = np.zeros((shapes.n, shapes.n))
    if s_s == 0.0:
        return me
    for sc in build_smoothing_cells(cell, mesh):
        pts = TRI6_BARY @ sc.verts
        vals = shapes.eval_many(pts)               # (6, n)
        me += sc.area * (vals.T * TRI6_WEIGHTS) @ vals
    return s_s * me


def element_loads(
    cell,
    mesh: PolyMesh,
    p=0.0,
    neumann: dict[str, float] | None = None,
    shapes: ShapeBasis | None = None,
    rule: EdgeQuadRule = DEFAULT_EDGE_RULE,
) -> np.ndarray:
    """Source (volumetric, 1/s) plus prescribed boundary-flux loads.

    neumann maps boundary tag -> inward flux q (m/s); q > 0 injects water.
    """
    if shapes is None:
        shapes = ShapeBasis(mesh.vertices[cell.vertex_ids])
    fe = np.zeros(shapes.n)
    if p:
        p_fun = p if callable(p) else (lambda x, _v=float(p): _v)
        for sc in build_smoothing_cells(cell, mesh):
            pts = TRI6_BARY @ sc.verts
            vals = shapes.eval_many(pts)
            pv = np.array([p_fun(pt) for pt in pts])
            fe += sc.area * ((TRI6_WEIGHTS * pv) @ vals)
    if neumann:
        ids = cell.vertex_ids
        tag_of = {}
        for va, vb, tag in mesh.boundary_edges:
            tag_of[(va, vb)] = tag
            tag_of[(vb, va)] = tag
        n = len(ids)
        for a in range(n):
            va, vb = int(ids[a]), int(ids[(a + 1) % n])
            tag = tag_of.get((va, vb))
            if tag is None or tag not in neumann:
                continue
            seg = (mesh.vertices[va], mesh.vertices[vb])
            fe += float(neumann[tag]) * edge_shape_integral(shapes.points, seg, rule, basis=shapes)
    return fe


@dataclass
class ElementData:
    """Cached per-element quantities reused across repeated assemblies."""

    ids: np.ndarray
    shapes: ShapeBasis
    subcells: list[SmoothingCell]
    bmats: list[np.ndarray]    # smoothed gradient per subcell, (2, n)
    ke: np.ndarray             # stiffness with the region's conductivity
    me: np.ndarray             # capacity with the region's storage
    fe: np.ndarray


@dataclass
class GlobalSystem:
    """Assembled sparse operators of the semi-discrete equations."""

    k: sp.csr_matrix
    m: sp.csr_matrix
    f: np.ndarray
    dirichlet: dict[int, float]
    elements: list[ElementData] = field(default_factory=list, repr=False)
    _rows: np.ndarray | None = field(default=None, repr=False)
    _cols: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.k.shape[0]

    def stiffness_with_multipliers(self, mult: np.ndarray) -> sp.csr_matrix:
        """Reassemble K with a per-element scale factor on conductivity."""
        vals = np.concatenate(
            [m * e.ke.ravel() for m, e in zip(mult, self.elements)]
        )
        return sp.coo_matrix((vals, (self._rows, self._cols)), shape=self.k.shape).tocsr()


def _dirichlet_value(spec, t: float) -> float:
    if callable(spec):
        return float(spec(t))
    if isinstance(spec, (list, tuple)) and len(spec) and isinstance(spec[0], (list, tuple)):
        knots = np.asarray(spec, dtype=float)
        return float(np.interp(t, knots[:, 0], knots[:, 1]))
    return float(spec)


def dirichlet_node_values(mesh: PolyMesh, dirichlet_spec: dict, t: float = 0.0) -> dict[int, float]:
    """Expand tag->value specs to node->value, rejecting contradictions.

    Values may be constants, piecewise-linear time series [(t, v), ...],
    or callables of time.
    """
    tags = mesh.boundary_tags()
    out: dict[int, float] = {}
    for tag in sorted(dirichlet_spec):
        if tag not in tags:
            raise MissingMaterialError(f"Dirichlet tag {tag!r} not present in mesh")
        val = _dirichlet_value(dirichlet_spec[tag], t)
        for node in sorted(mesh.boundary_nodes(tag)):
            if node in out and abs(out[node] - val) > 1e-12 * max(1.0, abs(val)):
                raise ConflictingDirichletError(
                    f"node {node} prescribed {out[node]} and {val}"
                )
            out[node] = val
    return out


def precompute_elements(mesh: PolyMesh, problem, rule: EdgeQuadRule = DEFAULT_EDGE_RULE) -> list[ElementData]:
    conductivity = problem.conductivity
    storage = getattr(problem, "storage", {})
    source = getattr(problem, "source", 0.0)
    neumann = getattr(problem, "neumann", None) or {}
    if neumann:
        mesh_tags = mesh.boundary_tags()
        for tag in neumann:
            if tag not in mesh_tags:
                raise UntaggedNeumannEdgeError(f"Neumann tag {tag!r} not present in mesh")
    elements = []
    for ci, cell in enumerate(mesh.cells):
        rid = cell.region_id
        if rid not in conductivity:
            raise MissingMaterialError(f"no conductivity for region {rid}")
        kt = _conductivity_tensor(conductivity[rid])
        s_s = float(storage.get(rid, 0.0)) if isinstance(storage, dict) else float(storage)
        shapes = ShapeBasis(mesh.cell_points(ci))
        subcells = build_smoothing_cells(cell, mesh)
        bmats = [smoothed_grad_op(cell, mesh, sc, shapes, rule).b for sc in subcells]
        ke = np.zeros((shapes.n, shapes.n))
        for sc, b in zip(subcells, bmats):
            ke += sc.area * (b.T @ kt @ b)
        me = element_capacity(cell, mesh, s_s, shapes)
        fe = element_loads(cell, mesh, source, neumann, shapes, rule)
        elements.append(
            ElementData(
                ids=np.asarray(cell.vertex_ids, dtype=np.int64),
                shapes=shapes,
                subcells=subcells,
                bmats=bmats,
                ke=ke,
                me=me,
                fe=fe,
            )
        )
    return elements


def assemble(
    mesh: PolyMesh,
    problem,
    rule: EdgeQuadRule = DEFAULT_EDGE_RULE,
    elements: list[ElementData] | None = None,
    t: float = 0.0,
) -> GlobalSystem:
    """Assemble K, M, F and the Dirichlet node map for a seepage problem."""
    if elements is None:
        elements = precompute_elements(mesh, problem, rule)
    n = mesh.num_vertices
    rows = np.concatenate([np.repeat(e.ids, len(e.ids)) for e in elements])
    cols = np.concatenate([np.tile(e.ids, len(e.ids)) for e in elements])
    k_vals = np.concatenate([e.ke.ravel() for e in elements])
    m_vals = np.concatenate([e.me.ravel() for e in elements])
    k = sp.coo_matrix((k_vals, (rows, cols)), shape=(n, n)).tocsr()
    m = sp.coo_matrix((m_vals, (rows, cols)), shape=(n, n)).tocsr()
    f = np.zeros(n)
    for e in elements:
        np.add.at(f, e.ids, e.fe)
    dirichlet = dirichlet_node_values(mesh, getattr(problem, "dirichlet", {}) or {}, t)
    return GlobalSystem(
        k=k, m=m, f=f, dirichlet=dirichlet, elements=elements, _rows=rows, _cols=cols
    )


def apply_dirichlet(
    sys: GlobalSystem,
    lhs: sp.spmatrix | None = None,
    rhs: np.ndarray | None = None,
    extra: dict[int, float] | None = None,
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Symmetric elimination of prescribed heads.

    Rows and columns of constrained nodes are zeroed with a unit diagonal;
    their contributions move to the right-hand side, so the reduced system
    stays symmetric positive definite.
    """
    a = (sys.k if lhs is None else lhs).tocsr()
    b = (sys.f if rhs is None else rhs).copy()
    values = dict(sys.dirichlet)
    if extra:
        for node, val in extra.items():
            if node in values and abs(values[node] - val) > 1e-12 * max(1.0, abs(val)):
                raise ConflictingDirichletError(
                    f"node {node} prescribed {values[node]} and {val}"
                )
            values[node] = val
    if not values:
        return a, b
    n = a.shape[0]
    fixed = np.zeros(n, dtype=bool)
    vfull = np.zeros(n)
    for node, val in values.items():
        fixed[node] = True
        vfull[node] = val
    free = sp.diags((~fixed).astype(float))
    pin = sp.diags(fixed.astype(float))
    a_mod = (free @ a @ free + pin).tocsr()
    b_mod = np.where(fixed, vfull, b - a @ vfull)
    return a_mod, b_mod
