"""Steady and transient saturated seepage drivers with flux postprocessing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NotConvergedError,
    ProbeOutsideDomainError,
    SingularSystemError,
    ZeroReferenceError,
)
from .geometry import PolyMesh
from .shapefn import EdgeQuadRule
from .smoothing import (
    DEFAULT_EDGE_RULE,
    ElementData,
    GlobalSystem,
    apply_dirichlet,
    assemble,
    precompute_elements,
)
from .solver import DEFAULT_TOL, solve_spd


@dataclass
class TimeGrid:
    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass
class SeepageProblem:
    """Physical description of one saturated-flow analysis.

    conductivity/storage are keyed by cell region_id; Dirichlet values may
    be constants, piecewise-linear time series [(t, h), ...], or callables
    of time.  Neumann values are inward fluxes (m/s), constant per tag.
    """

    mesh: PolyMesh
    conductivity: dict[int, object]
    storage: dict[int, float] = field(default_factory=dict)
    source: object = 0.0
    dirichlet: dict[str, object] = field(default_factory=dict)
    neumann: dict[str, float] = field(default_factory=dict)
    time: TimeGrid | None = None


@dataclass
class HeadField:
    """Nodal hydraulic heads at one time instant."""

    h: np.ndarray
    t: float = 0.0

    def copy(self) -> "HeadField":
        return HeadField(h=self.h.copy(), t=self.t)


def _solve_constrained(
    sys: GlobalSystem,
    lhs,
    rhs,
    extra_dirichlet: dict[int, float] | None,
    tol: float,
    x0: np.ndarray | None,
) -> np.ndarray:
    a, b = apply_dirichlet(sys, lhs, rhs, extra=extra_dirichlet)
    res = solve_spd(a, b, tol=tol, x0=x0)
    if not res.converged:
        raise NotConvergedError(
            f"linear solve stalled at relative residual {res.residual:.3e}"
        )
    return res.x


def solve_steady(
    problem: SeepageProblem,
    rule: EdgeQuadRule = DEFAULT_EDGE_RULE,
    extra_dirichlet: dict[int, float] | None = None,
    elements: list[ElementData] | None = None,
    system: GlobalSystem | None = None,
    tol: float = DEFAULT_TOL,
    x0: np.ndarray | None = None,
) -> HeadField:
    """Solve K H = F with Dirichlet data eliminated symmetrically."""
    sys = system if system is not None else assemble(problem.mesh, problem, rule, elements)
    if not sys.dirichlet and not extra_dirichlet:
        raise SingularSystemError("steady seepage needs at least one prescribed head")
    h = _solve_constrained(sys, None, None, extra_dirichlet, tol, x0)
    t0 = problem.time.t0 if problem.time is not None else 0.0
    return HeadField(h=h, t=t0)


def step_transient(
    problem: SeepageProblem,
    h_prev: HeadField,
    t_next: float,
    rule: EdgeQuadRule = DEFAULT_EDGE_RULE,
    extra_dirichlet: dict[int, float] | None = None,
    system: GlobalSystem | None = None,
    tol: float = DEFAULT_TOL,
) -> HeadField:
    """One backward-Euler step: (K + M/dt) H = F + (M/dt) H_prev.

    Boundary data is evaluated at t_next; with zero storage the step
    collapses to the steady solve.
    """
    dt = t_next - h_prev.t
    if dt <= 0.0:
        raise ValueError(f"non-positive time step {dt}")
    sys = system if system is not None else assemble(problem.mesh, problem, rule, t=t_next)
    lhs = sys.k + sys.m / dt
    rhs = sys.f + (sys.m / dt) @ h_prev.h
    if not sys.dirichlet and not extra_dirichlet:
        raise SingularSystemError("transient step needs at least one prescribed head")
    h = _solve_constrained(sys, lhs, rhs, extra_dirichlet, tol, x0=h_prev.h)
    return HeadField(h=h, t=t_next)


def probe_cells(mesh: PolyMesh, probes) -> list[int]:
    cells = []
    for p in probes:
        c = mesh.locate_point(np.asarray(p, dtype=float))
        if c < 0:
            raise ProbeOutsideDomainError(f"probe {list(p)} lies outside the mesh")
        cells.append(c)
    return cells


def interpolate_at(mesh: PolyMesh, h: np.ndarray, point, cell: int | None = None) -> float:
    """Head at an arbitrary point via shape-function interpolation."""
    from .shapefn import ShapeBasis

    if cell is None:
        cell = probe_cells(mesh, [point])[0]
    basis = ShapeBasis(mesh.cell_points(cell))
    vals = basis.eval(np.asarray(point, dtype=float))
    return float(vals @ h[mesh.cells[cell].vertex_ids])


def run_transient(
    problem: SeepageProblem,
    h0: HeadField | None = None,
    probes=(),
    rule: EdgeQuadRule = DEFAULT_EDGE_RULE,
    keep_history: bool = True,
) -> tuple[list[HeadField], np.ndarray]:
    """March the backward-Euler scheme over the problem's time grid.

    Returns (snapshots, probe_table); probe_table[i] = (t, h(p_0), ...).
    The initial condition defaults to the steady solve at t0's boundary
    values.
    """
    if problem.time is None:
        raise ValueError("problem has no time grid")
    grid = problem.time
    elements = precompute_elements(problem.mesh, problem, rule)
    if h0 is None:
        sys0 = assemble(problem.mesh, problem, rule, elements, t=grid.t0)
        h0 = solve_steady(problem, rule, system=sys0)
        h0.t = grid.t0
    cells = probe_cells(problem.mesh, probes) if len(probes) else []
    bases = [None] * len(cells)

    def sample(fld: HeadField) -> list[float]:
        out = [fld.t]
        for k, (p, c) in enumerate(zip(probes, cells)):
            if bases[k] is None:
                from .shapefn import ShapeBasis

                bases[k] = (
                    ShapeBasis(problem.mesh.cell_points(c)),
                    problem.mesh.cells[c].vertex_ids,
                )
            basis, ids = bases[k]
            out.append(float(basis.eval(np.asarray(p, dtype=float)) @ fld.h[ids]))
        return out

    history = [h0]
    rows = [sample(h0)]
    current = h0
    for t in grid.times()[1:]:
        sys = assemble(problem.mesh, problem, rule, elements, t=t)
        current = step_transient(problem, current, t, rule, system=sys)
        if keep_history:
            history.append(current)
        rows.append(sample(current))
    if not keep_history:
        history.append(current)
    return history, np.array(rows)


def relative_error_l2(h_num, h_ref) -> float:
    """Discrete 2-norm of the error over the 2-norm of the reference."""
    a = h_num.h if isinstance(h_num, HeadField) else np.asarray(h_num, dtype=float)
    b = h_ref.h if isinstance(h_ref, HeadField) else np.asarray(h_ref, dtype=float)
    if a.shape != b.shape:
        raise ValueError("fields have different node counts")
    denom = float(np.linalg.norm(b))
    if denom == 0.0:
        raise ZeroReferenceError("reference field has zero norm")
    return float(np.linalg.norm(a - b)) / denom


@dataclass
class FluxField:
    """Piecewise-constant Darcy velocity per smoothing subcell."""

    cell_ids: np.ndarray       # element index per subcell
    centroids: np.ndarray      # (m, 2) subcell centroids
    velocities: np.ndarray     # (m, 2) Darcy velocity
    boundary_net: dict[str, float]  # tag -> net inflow (m^2/s, + = entering)


def darcy_flux(
    problem: SeepageProblem,
    head: HeadField,
    rule: EdgeQuadRule = DEFAULT_EDGE_RULE,
    elements: list[ElementData] | None = None,
    system: GlobalSystem | None = None,
    k_scale: np.ndarray | None = None,
) -> FluxField:
    """Darcy velocities v = -k B h per subcell plus net boundary discharge.

    The per-tag discharge (positive = inflow) comes from the assembled
    residual K H - F, the discretely conservative boundary flux: its total
    over all tags vanishes to solver precision, unlike direct edge
    integration of the smoothed velocity.  Reactions at nodes shared by
    several tagged edges are split by incident tagged half-edge length;
    prescribed-flux tags additionally carry their imposed discharge.
    """
    mesh = problem.mesh
    if system is None:
        system = assemble(mesh, problem, rule, elements, t=head.t)
    elements = system.elements
    cell_ids, cents, vels = [], [], []
    from .smoothing import _conductivity_tensor

    for ci, e in enumerate(elements):
        kt = _conductivity_tensor(problem.conductivity[mesh.cells[ci].region_id])
        if k_scale is not None:
            kt = k_scale[ci] * kt
        he = head.h[e.ids]
        for sc, b in zip(e.subcells, e.bmats):
            cell_ids.append(ci)
            cents.append(sc.centroid)
            vels.append(-kt @ (b @ he))

    k_op = system.k if k_scale is None else system.stiffness_with_multipliers(k_scale)
    residual = k_op @ head.h - system.f
    weight: dict[int, dict[str, float]] = {}
    for va, vb, tag in mesh.boundary_edges:
        length = float(np.hypot(*(mesh.vertices[vb] - mesh.vertices[va])))
        for v in (va, vb):
            weight.setdefault(v, {}).setdefault(tag, 0.0)
            weight[v][tag] += 0.5 * length
    # a reaction at a node belongs to its constrained (head-prescribed) faces;
    # free faces only pick up their own ~0 residue
    constrained = set((problem.dirichlet or {}).keys())
    net: dict[str, float] = {tag: 0.0 for tag in mesh.boundary_tags()}
    for v, tags in weight.items():
        active = {t: w for t, w in tags.items() if t in constrained} or tags
        total = sum(active.values())
        for tag, w in active.items():
            net[tag] += residual[v] * (w / total)
    for tag, q in (problem.neumann or {}).items():
        length = sum(
            float(np.hypot(*(mesh.vertices[vb] - mesh.vertices[va])))
            for va, vb, t in mesh.boundary_edges
            if t == tag
        )
        net[tag] += float(q) * length
    return FluxField(
        cell_ids=np.array(cell_ids),
        centroids=np.array(cents),
        velocities=np.array(vels),
        boundary_net=net,
    )
