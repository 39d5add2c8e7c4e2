"""Fixed-mesh free-surface iteration with wet/dry switching and an
optional adaptive refinement outer loop.

The saturated zone, the seepage face, and the phreatic line are found by a
fixed-point loop on a fixed mesh: solve the confined problem, evaluate the
pressure head psi = h - y, switch dry elements to a reduced conductivity
alpha*k, and adjust the downstream atmospheric (seepage) face.  The face's
active nodes are pinned at h = y; because pinned nodes always read psi = 0,
the face can only shrink through the flux criterion: an active node whose
reaction flux points INTO the domain is nonphysical and is released.  Face
growth comes from the psi >= 0 prefix rule.  Both updates keep the active
set a contiguous chain from the face bottom, mirroring "the portion below
the intersection point".
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    MeshError,
    MissingGamma4Error,
    NodeOutsideOldMeshError,
    NotConvergedError,
)
from .geometry import PolyMesh
from .seepage import HeadField, SeepageProblem
from .shapefn import ShapeBasis
from .smoothing import (
    DEFAULT_EDGE_RULE,
    apply_dirichlet,
    assemble,
    precompute_elements,
)
from .solver import solve_spd


@dataclass
class FreeSurfaceConfig:
    """Knobs of the fixed-mesh iteration and the adaptive outer loop."""

    alpha: float = 1e-3            # dry-element conductivity multiplier
    eps_x: float | None = None     # overflow stop tolerance; None = 1e-3 x domain height
    max_inner: int = 100
    max_outer: int = 5
    band_width: float | None = None  # refinement band; None = 2 x local element size
    grad_threshold: float = 3.0      # x median |grad h| marks high-gradient cells
    gamma4: str = "gamma4"           # downstream seepage-face tag
    solver_tol: float = 1e-12

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")


@dataclass
class FreeSurfaceState:
    wet: np.ndarray                  # per-element flags
    k_mult: np.ndarray               # per-element {1, alpha}
    seepage_active: set[int]         # active (atmospheric) face nodes
    x_o: float                       # overflow coordinate
    iter: int
    converged: bool = False
    oscillating: bool = False
    last_increment: float = float("nan")
    log: list[tuple[int, float, int, int]] = field(default_factory=list)


@dataclass(frozen=True)
class OverflowResult:
    value: float        # elevation (vertical face) or x (sloped face)
    crossed: bool
    point: np.ndarray   # crossing location in the plane


def gamma_chain(mesh: PolyMesh, tag: str) -> list[int]:
    """Nodes of a tagged boundary path, ordered from its lowest end."""
    edges = [(va, vb) for va, vb, t in mesh.boundary_edges if t == tag]
    if not edges:
        raise MissingGamma4Error(f"no boundary edges tagged {tag!r}")
    adj: dict[int, list[int]] = {}
    for va, vb in edges:
        adj.setdefault(va, []).append(vb)
        adj.setdefault(vb, []).append(va)
    ends = sorted(v for v, nb in adj.items() if len(nb) == 1)
    if len(ends) != 2:
        raise MeshError(f"boundary tag {tag!r} does not form a simple open chain")
    start = min(ends, key=lambda v: (mesh.vertices[v][1], mesh.vertices[v][0]))
    chain = [start]
    prev = -1
    while True:
        nxt = [v for v in adj[chain[-1]] if v != prev]
        if not nxt:
            break
        prev = chain[-1]
        chain.append(nxt[0])
        if len(chain) > len(adj) + 1:
            raise MeshError(f"boundary tag {tag!r} chain does not terminate")
    return chain


def classify_wet_dry(head: HeadField, mesh: PolyMesh, elements=None) -> tuple[np.ndarray, np.ndarray]:
    """Element wet flags (psi at the centroid >= 0) and nodal psi = h - y."""
    psi = head.h - mesh.vertices[:, 1]
    wet = np.zeros(mesh.num_cells, dtype=bool)
    cents = mesh.centroids()
    for ci in range(mesh.num_cells):
        ids = mesh.cells[ci].vertex_ids
        if elements is not None:
            basis = elements[ci].shapes
        else:
            basis = ShapeBasis(mesh.cell_points(ci))
        n = basis.eval(cents[ci])
        wet[ci] = float(n @ psi[ids]) >= 0.0
    return wet, psi


def permeability_field(wet: np.ndarray, alpha: float) -> np.ndarray:
    """Per-element conductivity multipliers: 1 when wet, alpha when dry."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    return np.where(wet, 1.0, alpha)


def _chain_tol(mesh: PolyMesh) -> float:
    y = mesh.vertices[:, 1]
    return 1e-12 * max(float(np.ptp(y)), 1.0)


def update_seepage_face(
    psi: np.ndarray,
    mesh: PolyMesh,
    tag: str = "gamma4",
    tol: float | None = None,
    skip: set[int] | None = None,
) -> tuple[list[int], dict[int, float]]:
    """Active atmospheric nodes: the chain prefix below the psi = 0 crossing.

    Nodes in ``skip`` (typically face ends already carrying a static
    prescribed head) are passed over: they are never face candidates and do
    not terminate the prefix.  Returns (active nodes bottom-up, Dirichlet
    patch node -> its elevation).
    """
    if tol is None:
        tol = _chain_tol(mesh)
    skip = skip or set()
    chain = gamma_chain(mesh, tag)
    active: list[int] = []
    for node in chain:
        if node in skip:
            continue
        if psi[node] >= -tol:
            active.append(node)
        else:
            break
    patch = {node: float(mesh.vertices[node][1]) for node in active}
    return active, patch


def overflow_point(
    psi: np.ndarray, mesh: PolyMesh, tag: str = "gamma4", tol: float | None = None
) -> OverflowResult:
    """psi = 0 crossing along the tagged face by linear interpolation.

    Reports the elevation for vertical faces and the x coordinate for
    sloped ones.  Without a sign change the wet (or dry) face endpoint is
    returned with crossed=False.
    """
    if tol is None:
        tol = _chain_tol(mesh)
    chain = gamma_chain(mesh, tag)
    pts = mesh.vertices[chain]
    vertical = float(np.ptp(pts[:, 0])) <= 1e-9 * max(float(np.ptp(pts[:, 1])), 1.0)

    def coord(p: np.ndarray) -> float:
        return float(p[1]) if vertical else float(p[0])

    k = 0
    while k < len(chain) and psi[chain[k]] >= -tol:
        k += 1
    if k == 0:
        return OverflowResult(value=coord(pts[0]), crossed=False, point=pts[0].copy())
    if k == len(chain):
        return OverflowResult(value=coord(pts[-1]), crossed=False, point=pts[-1].copy())
    pa, pb = pts[k - 1], pts[k]
    qa, qb = float(psi[chain[k - 1]]), float(psi[chain[k]])
    t = qa / (qa - qb) if qa != qb else 0.0
    point = pa + t * (pb - pa)
    return OverflowResult(value=coord(point), crossed=True, point=point)


def extract_free_surface(mesh: PolyMesh, psi: np.ndarray) -> np.ndarray:
    """The principal psi = 0 isoline as an ordered polyline.

    Per element, strict sign changes along edges are linearly interpolated
    and paired into contour segments; the segments form a graph keyed by the
    mesh edge they cross.  Only the connected component containing the
    leftmost crossing is returned, walked end to end, so small closed loops
    of trapped positive pressure above the seepage face (an artifact of the
    two-value permeability switch) do not pollute the profile.  Edges pinned
    at psi = 0 by the atmospheric face carry exact zeros and never cross.
    """
    segments: list[tuple[tuple[int, int], tuple[int, int]]] = []
    points: dict[tuple[int, int], tuple[float, float]] = {}
    for ci in range(mesh.num_cells):
        ids = mesh.cells[ci].vertex_ids
        crossings: list[tuple[int, int]] = []
        for a in range(len(ids)):
            va, vb = int(ids[a]), int(ids[(a + 1) % len(ids)])
            qa, qb = float(psi[va]), float(psi[vb])
            if not ((qa > 0.0 and qb < 0.0) or (qa < 0.0 and qb > 0.0)):
                continue
            lo, hi = (va, vb) if va < vb else (vb, va)
            key = (lo, hi)
            if key not in points:
                t = float(psi[lo]) / (float(psi[lo]) - float(psi[hi]))
                p = mesh.vertices[lo] + t * (mesh.vertices[hi] - mesh.vertices[lo])
                points[key] = (float(p[0]), float(p[1]))
            crossings.append(key)
        for k in range(0, len(crossings) - 1, 2):
            segments.append((crossings[k], crossings[k + 1]))
    if not segments:
        return np.zeros((0, 2))

    adj: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for ka, kb in segments:
        adj.setdefault(ka, []).append(kb)
        adj.setdefault(kb, []).append(ka)

    seed = min(adj, key=lambda k: (points[k][0], -points[k][1]))
    component = {seed}
    queue = [seed]
    while queue:
        for nb in adj[queue.pop()]:
            if nb not in component:
                component.add(nb)
                queue.append(nb)
    ends = [k for k in component if len(adj[k]) == 1]
    start = min(ends, key=lambda k: points[k][0]) if ends else seed

    path = [start]
    visited = {start}
    while True:
        options = [k for k in adj[path[-1]] if k not in visited]
        if not options:
            break
        options.sort(key=lambda k: points[k][0])
        path.append(options[0])
        visited.add(options[0])
    arr = np.array([points[k] for k in path])
    if arr[0, 0] > arr[-1, 0]:
        arr = arr[::-1]
    return arr


def _surface_exit(polyline: np.ndarray, face_pts: np.ndarray) -> np.ndarray | None:
    """Exit point: the free-surface polyline's last segment extended onto
    the downstream face line (clamped to the face extent).

    Sub-node accurate, unlike the node-quantized active-face top that the
    iteration itself monitors.  None when the polyline is degenerate.
    """
    if len(polyline) < 2:
        return None
    a, b = face_pts[0], face_pts[-1]
    d = b - a
    p1, p2 = polyline[-2], polyline[-1]
    s = p2 - p1
    det = s[0] * (-d[1]) - (-d[0]) * s[1]
    if abs(det) < 1e-14 * max(float(np.hypot(*s)), 1e-300) * float(np.hypot(*d)):
        return None
    rhs = a - p1
    u = (s[0] * rhs[1] - s[1] * rhs[0]) / det
    u = min(max(u, 0.0), 1.0)
    return a + u * d


def _clip_to_exit(polyline: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Truncate the raw isoline where it stops advancing in x and close it
    with the exit point.

    Inside the drained exit zone the two-value permeability switch leaves
    the isoline zigzagging sub-element amounts around an essentially
    vertical plunge; the physical phreatic line ends where it meets the
    face, so everything from the first stall onward is replaced by that
    single endpoint.
    """
    keep = [0]
    for j in range(1, len(polyline)):
        if polyline[j, 0] >= q[0] - 1e-12:
            break
        if polyline[j, 0] > polyline[keep[-1], 0] + 1e-12:
            keep.append(j)
    return np.vstack([polyline[keep], q[None, :]])


def run_fixed_mesh(
    problem: SeepageProblem,
    cfg: FreeSurfaceConfig | None = None,
    h0: HeadField | None = None,
    wet0: np.ndarray | None = None,
    active0: list[int] | None = None,
    elements=None,
) -> tuple[HeadField, FreeSurfaceState, np.ndarray]:
    """Fixed-point iteration for the phreatic surface on one mesh.

    Starts fully saturated with the whole downstream face atmospheric and
    alternates {solve, reclassify wet/dry, adjust seepage face} until the
    overflow point moves less than eps_x.  The per-iteration log and the
    stopping test track the top of the active face (quantized to mesh
    nodes); the returned state's x_o is refined to the intersection of the
    extracted free surface with the downstream face when available.
    """
    cfg = cfg or FreeSurfaceConfig()
    mesh = problem.mesh
    y = mesh.vertices[:, 1]
    height = float(np.ptp(y))
    eps_x = cfg.eps_x if cfg.eps_x is not None else 1e-3 * height
    chain = gamma_chain(mesh, cfg.gamma4)
    face_pts = mesh.vertices[chain]
    vertical = float(np.ptp(face_pts[:, 0])) <= 1e-9 * max(height, 1.0)

    if elements is None:
        elements = precompute_elements(mesh, problem, DEFAULT_EDGE_RULE)
    system = assemble(mesh, problem, DEFAULT_EDGE_RULE, elements)

    k_vals = [np.linalg.eigvalsh(np.asarray(k, dtype=float) * np.eye(2) if np.ndim(k) == 0 else np.asarray(k, dtype=float)).max() for k in problem.conductivity.values()]
    head_vals = [abs(v) for v in system.dirichlet.values()] or [1.0]
    reaction_tol = 1e-10 * max(k_vals) * max(max(head_vals), 1.0)

    static = set(system.dirichlet)  # face ends owned by a fixed-head boundary
    candidates = [v for v in chain if v not in static]
    wet = np.ones(mesh.num_cells, dtype=bool) if wet0 is None else wet0.copy()
    active = list(candidates) if active0 is None else [v for v in candidates if v in set(active0)]
    h_prev = h0.h if h0 is not None else None

    state = FreeSurfaceState(
        wet=wet,
        k_mult=permeability_field(wet, cfg.alpha),
        seepage_active=set(active),
        x_o=float("nan"),
        iter=0,
    )
    psi = np.zeros(mesh.num_vertices)
    head = HeadField(h=np.zeros(mesh.num_vertices))
    x_hist: list[float] = []
    sig_hist: list[tuple[bytes, frozenset[int]]] = []
    toggle_hist: list[np.ndarray] = []
    freeze = np.zeros(mesh.num_cells, dtype=bool)

    for it in range(1, cfg.max_inner + 1):
        mult = permeability_field(wet | freeze, cfg.alpha)
        k_op = system.stiffness_with_multipliers(mult)
        patch = {v: float(y[v]) for v in active}
        a, b = apply_dirichlet(system, k_op, system.f, extra=patch)
        res = solve_spd(a, b, tol=cfg.solver_tol, x0=h_prev)
        if not res.converged:
            raise NotConvergedError(
                f"inner solve stalled at relative residual {res.residual:.3e}"
            )
        h_prev = res.x
        head = HeadField(h=res.x)
        psi = res.x - y
        reactions = k_op @ res.x - system.f

        # face shrink: active nodes drawing water inward are nonphysical
        released = {v for v in active if reactions[v] > reaction_tol}
        # face growth is unilateral per node: any candidate back at
        # atmospheric pressure is re-pinned (pinned nodes read exactly 0 and
        # stay unless released).  Trapped positive pressure above a released
        # node must drain through the face rather than mound up, so no
        # contiguity is imposed here.
        tol = _chain_tol(mesh)
        new_active = [v for v in candidates if float(psi[v]) >= -tol and v not in released]

        wet_new, _ = classify_wet_dry(head, mesh, elements)
        # overflow monitor: top of the contiguous active run from the face
        # bottom; isolated pinned islands higher up do not define the exit.
        # Sub-node interpolation only against a genuinely free node with
        # negative psi above the run top.
        new_set = set(new_active)
        run_top = -1
        for pos, v in enumerate(chain):
            if v in static:
                continue
            if v in new_set:
                run_top = pos
            else:
                break
        if run_top < 0:
            pt = face_pts[0]
        elif run_top + 1 < len(chain):
            top = chain[run_top]
            pt = mesh.vertices[top]
            nxt = chain[run_top + 1]
            qa, qb = float(psi[top]), float(psi[nxt])
            if qb < -tol and qa > tol and nxt not in released and nxt not in set(active) and nxt not in static:
                t = qa / (qa - qb)
                pt = pt + t * (mesh.vertices[nxt] - pt)
        else:
            pt = face_pts[-1]
        x_o = float(pt[1]) if vertical else float(pt[0])
        x_hist.append(x_o)

        toggled = wet_new != wet
        state.log.append((it, x_o, int(wet_new.sum()), len(new_active)))
        state.iter = it
        state.x_o = x_o

        stop = len(x_hist) >= 2 and abs(x_hist[-1] - x_hist[-2]) < eps_x
        face_stable = set(new_active) == set(active)
        if stop and face_stable and it >= 2:
            state.converged = True
            state.last_increment = abs(x_hist[-1] - x_hist[-2])
            state.wet = wet_new
            state.k_mult = permeability_field(wet_new, cfg.alpha)
            state.seepage_active = set(new_active)
            break

        # Limit-cycle escape: the two-value permeability switch can trap the
        # iteration in an exact cycle where a handful of surface-grazing
        # elements flip wet/dry with period p (p = 4 shows up on uniform
        # quadtree meshes whose cell rows run parallel to the surface).  The
        # cycle repeats the (wet, active) state exactly, so compare state
        # signatures at every lag; on a hit, pin the cycling elements wet for
        # one solve and let the rest of the system settle around them.
        freeze[:] = False
        sig_hist.append((wet_new.tobytes(), frozenset(new_active)))
        toggle_hist.append(toggled)
        for period in range(2, 9):
            if len(sig_hist) < 2 * period:
                break
            if all(sig_hist[-1 - k] == sig_hist[-1 - k - period] for k in range(period)):
                state.oscillating = True
                freeze = np.any(toggle_hist[-period:], axis=0)
                sig_hist.clear()
                toggle_hist.clear()
                break
        wet = wet_new
        active = new_active
        state.seepage_active = set(active)
        state.k_mult = permeability_field(wet, cfg.alpha)
        state.wet = wet
        if len(x_hist) >= 2:
            state.last_increment = abs(x_hist[-1] - x_hist[-2])

    polyline = extract_free_surface(mesh, psi)
    q = _surface_exit(polyline, face_pts)
    if q is not None:
        state.x_o = float(q[1]) if vertical else float(q[0])
        polyline = _clip_to_exit(polyline, q)
    return head, state, polyline


def element_gradients(mesh: PolyMesh, h: np.ndarray, elements) -> np.ndarray:
    """Area-weighted smoothed gradient of h per element, (n_cells, 2)."""
    out = np.zeros((mesh.num_cells, 2))
    for ci, e in enumerate(elements):
        he = h[e.ids]
        acc = np.zeros(2)
        area = 0.0
        for sc, bm in zip(e.subcells, e.bmats):
            acc += sc.area * (bm @ he)
            area += sc.area
        out[ci] = acc / area
    return out


def mark_band(
    psi: np.ndarray,
    mesh: PolyMesh,
    band_width: float | None = None,
    grad_threshold: float = 3.0,
    elements=None,
) -> set[int]:
    """Elements near the phreatic surface or with outsized head gradients.

    Marks cells whose nodal psi changes sign, whose centroid |psi| is below
    the band width (default: twice the local element size), or whose
    smoothed |grad h| exceeds grad_threshold x the domain median.
    """
    if elements is None:
        elements = precompute_elements(
            mesh,
            SeepageProblem(mesh=mesh, conductivity={r: 1.0 for r in {c.region_id for c in mesh.cells}}),
            DEFAULT_EDGE_RULE,
        )
    h = psi + mesh.vertices[:, 1]
    grads = element_gradients(mesh, h, elements)
    gnorm = np.hypot(grads[:, 0], grads[:, 1])
    median = float(np.median(gnorm))
    areas = mesh.areas()
    cents = mesh.centroids()
    marked: set[int] = set()
    for ci in range(mesh.num_cells):
        ids = mesh.cells[ci].vertex_ids
        vals = psi[ids]
        if vals.min() < 0.0 < vals.max():
            marked.add(ci)
            continue
        width = band_width if band_width is not None else 2.0 * float(np.sqrt(areas[ci]))
        n = elements[ci].shapes.eval(cents[ci])
        if abs(float(n @ vals)) < width:
            marked.add(ci)
            continue
        if gnorm[ci] >= grad_threshold * median:
            marked.add(ci)
    return marked


def transfer_solution(h_old: HeadField, mesh_old: PolyMesh, mesh_new: PolyMesh) -> HeadField:
    """Interpolate a head field onto a refined mesh.

    Nodes shared between meshes keep their values exactly; genuinely new
    nodes are interpolated with the containing old cell's shape functions.
    """
    tol = 1e-9 * max(
        float(np.ptp(mesh_old.vertices[:, 0])), float(np.ptp(mesh_old.vertices[:, 1])), 1.0
    )
    tree = cKDTree(mesh_old.vertices)
    dist, idx = tree.query(mesh_new.vertices)
    h_new = np.zeros(mesh_new.num_vertices)
    exact = dist <= tol
    h_new[exact] = h_old.h[idx[exact]]
    bases: dict[int, ShapeBasis] = {}
    for v in np.nonzero(~exact)[0]:
        p = mesh_new.vertices[v]
        ci = mesh_old.locate_point(p, tol=tol)
        if ci < 0:
            raise NodeOutsideOldMeshError(f"new node {p.tolist()} outside the old mesh")
        basis = bases.get(ci)
        if basis is None:
            basis = bases.setdefault(ci, ShapeBasis(mesh_old.cell_points(ci)))
        h_new[v] = float(basis.eval(p) @ h_old.h[mesh_old.cells[ci].vertex_ids])
    return HeadField(h=h_new, t=h_old.t)


def run_adaptive(
    problem: SeepageProblem,
    cfg: FreeSurfaceConfig | None = None,
    quadtree=None,
    domain=None,
    tag_rule=None,
) -> tuple[PolyMesh, HeadField, FreeSurfaceState, list[dict]]:
    """Adaptive outer loop: converge on the current mesh, refine a band
    around the phreatic surface, transfer, repeat.

    Needs the generating quadtree (and clip domain + boundary tag rule) so
    marked cells can be split with 2:1 rebalancing.
    """
    from .quadtree import quadtree_to_mesh, refine_cells

    cfg = cfg or FreeSurfaceConfig()
    if quadtree is None or domain is None:
        raise MeshError("adaptive refinement requires the generating quadtree and domain")
    mesh = problem.mesh
    if mesh.source_keys is None:
        raise MeshError("mesh does not carry quadtree leaf keys")
    height = float(np.ptp(mesh.vertices[:, 1]))
    eps_x = cfg.eps_x if cfg.eps_x is not None else 1e-3 * height

    stats: list[dict] = []
    h_carry: HeadField | None = None
    wet_carry = None
    active_carry = None
    head, state, polyline = None, None, None
    x_prev = None

    cycle = 0
    while True:
        elements = precompute_elements(mesh, problem, DEFAULT_EDGE_RULE)
        t0 = time.perf_counter()
        head, state, polyline = run_fixed_mesh(
            problem, cfg, h0=h_carry, wet0=wet_carry, active0=active_carry, elements=elements
        )
        cpu = time.perf_counter() - t0
        psi = head.h - mesh.vertices[:, 1]
        marked = mark_band(psi, mesh, cfg.band_width, cfg.grad_threshold, elements)
        splittable = {
            mesh.source_keys[ci]
            for ci in marked
            if mesh.source_keys[ci][0] < quadtree.max_depth
        }
        stats.append(
            {
                "cycle": cycle,
                "elements": mesh.num_cells,
                "dofs": mesh.num_vertices,
                "cpu_s": cpu,
                "x_o": state.x_o,
                "marked": len(marked),
                "inner_iters": state.iter,
            }
        )
        cycle += 1
        x_stable = x_prev is not None and abs(state.x_o - x_prev) < eps_x
        x_prev = state.x_o
        if cycle > cfg.max_outer or not splittable or x_stable:
            break

        refine_cells(quadtree, splittable)
        new_mesh = quadtree_to_mesh(quadtree, domain, tag_rule=tag_rule)
        h_new = transfer_solution(head, mesh, new_mesh)
        problem = replace(problem, mesh=new_mesh)
        mesh = new_mesh
        h_carry = h_new
        wet_carry, _ = classify_wet_dry(h_new, new_mesh)
        active_carry, _ = update_seepage_face(
            h_new.h - new_mesh.vertices[:, 1], new_mesh, cfg.gamma4
        )
    return mesh, head, state, stats
