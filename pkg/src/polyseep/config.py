"""Run configuration: TOML parsing, validation, and defaults.

A run file names a problem kind, a geometry (one of the built-in
benchmark families or a domain polygon file), a mesh recipe, and the
physics inputs.  ``parse_config`` fails fast with a ParseError carrying
the offending line/field, or a ValidationError that lists every
violation at once rather than the first one found.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ParseError, ValidationError

KINDS = ("steady", "transient", "free_surface")
BENCHMARKS = ("patch", "foundation", "rect_dam", "trapezoid")
MESH_TYPES = ("polygonal", "quadtree", "coarse", "file")

# mesh types each benchmark family can build (D-22: generated, not shipped)
BENCHMARK_MESHES = {
    "patch": ("polygonal", "quadtree"),
    "foundation": ("quadtree",),
    "rect_dam": ("polygonal", "quadtree", "coarse"),
    "trapezoid": ("quadtree", "coarse"),
}


@dataclass
class TimeGrid:
    t_end: float
    steps: int
    storage: float = 1e-4  # specific storage S_s


@dataclass
class RunConfig:
    kind: str
    benchmark: str | None = None
    domain_path: str | None = None
    mesh_type: str = "quadtree"
    mesh_path: str | None = None
    mesh_size: float | None = None       # quadtree background size (custom geometry)
    adaptive: bool = False
    conductivity: dict[int, float] | None = None   # None = benchmark default
    bcs: dict[str, float] = field(default_factory=dict)
    time: TimeGrid | None = None
    probes: list[tuple[float, float]] = field(default_factory=list)
    out_dir: str = "out"
    # free-surface knobs; None = driver default (eps_x: 1e-3 x domain height)
    alpha: float = 1e-3
    eps_x: float | None = None
    max_inner: int = 100
    max_outer: int = 5
    band_width: float | None = None
    grad_threshold: float = 3.0
    seepage_tag: str = "gamma4"
    # numerics
    solver_tol: float = 1e-12
    edge_points: int = 4


def _typed(table: dict, key: str, types, where: str, errors: list[str], default=None):
    if key not in table:
        return default
    val = table[key]
    if isinstance(val, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        errors.append(f"{where}.{key}: expected {_type_name(types)}, got bool")
        return default
    if not isinstance(val, types):
        errors.append(f"{where}.{key}: expected {_type_name(types)}, got {type(val).__name__}")
        return default
    return val


def _type_name(types) -> str:
    if isinstance(types, tuple):
        return "/".join(t.__name__ for t in types)
    return types.__name__


def parse_config(path) -> RunConfig:
    """Read and validate a TOML run file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc

    errors: list[str] = []

    kind = _typed(data, "kind", str, "top level", errors)
    if kind is None and not errors:
        errors.append("top level: missing required field 'kind'")
    if kind is not None and kind not in KINDS:
        errors.append(f"kind: {kind!r} is not one of {', '.join(KINDS)}")

    geo = data.get("geometry", {})
    benchmark = _typed(geo, "benchmark", str, "geometry", errors)
    domain_path = _typed(geo, "domain", str, "geometry", errors)
    if benchmark is not None and domain_path is not None:
        errors.append("geometry: give either 'benchmark' or 'domain', not both")
    if benchmark is None and domain_path is None:
        errors.append("geometry: needs 'benchmark' (built-in name) or 'domain' (polygon file)")
    if benchmark is not None and benchmark not in BENCHMARKS:
        errors.append(f"geometry.benchmark: {benchmark!r} is not one of {', '.join(BENCHMARKS)}")
    if domain_path is not None and not os.path.exists(domain_path):
        errors.append(f"geometry.domain: file {domain_path!r} does not exist")

    msh = data.get("mesh", {})
    mesh_type = _typed(msh, "type", str, "mesh", errors, default="quadtree")
    mesh_path = _typed(msh, "path", str, "mesh", errors)
    mesh_size = _typed(msh, "size", (int, float), "mesh", errors)
    adaptive = _typed(msh, "adaptive", bool, "mesh", errors, default=False)
    if mesh_type not in MESH_TYPES:
        errors.append(f"mesh.type: {mesh_type!r} is not one of {', '.join(MESH_TYPES)}")
    elif mesh_type == "file":
        if mesh_path is None:
            errors.append("mesh.path: required when mesh.type = 'file'")
        elif not os.path.exists(mesh_path):
            errors.append(f"mesh.path: file {mesh_path!r} does not exist")
    if benchmark is not None and mesh_type in BENCHMARK_MESHES.get(benchmark, ()):
        pass
    elif benchmark is not None and mesh_type != "file":
        allowed = ", ".join(BENCHMARK_MESHES.get(benchmark, ()))
        errors.append(f"mesh.type: benchmark {benchmark!r} builds only: {allowed}")
    if domain_path is not None and mesh_type == "quadtree" and mesh_size is None:
        errors.append("mesh.size: required for quadtree meshing of a custom domain")

    mat = data.get("materials", {})
    conductivity: dict[int, float] | None = {}
    k_val = _typed(mat, "k", (int, float), "materials", errors)
    if k_val is not None:
        if k_val <= 0:
            errors.append("materials.k: must be positive")
        conductivity[0] = float(k_val)
    regions = mat.get("regions", {})
    if not isinstance(regions, dict):
        errors.append("materials.regions: expected a table of region id -> k")
    else:
        for rid, val in regions.items():
            try:
                rid_i = int(rid)
            except ValueError:
                errors.append(f"materials.regions: region id {rid!r} is not an integer")
                continue
            if not isinstance(val, (int, float)) or isinstance(val, bool) or val <= 0:
                errors.append(f"materials.regions.{rid}: conductivity must be a positive number")
                continue
            conductivity[rid_i] = float(val)
    if not conductivity:
        # no [materials] section: benchmarks keep their built-in values,
        # custom geometries get unit conductivity
        conductivity = None if benchmark is not None else {0: 1.0}

    bcs_raw = data.get("bcs", {})
    bcs: dict[str, float] = {}
    if not isinstance(bcs_raw, dict):
        errors.append("bcs: expected a table of boundary tag -> head value")
    else:
        for tag, val in bcs_raw.items():
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                errors.append(f"bcs.{tag}: head value must be a number")
                continue
            bcs[str(tag)] = float(val)
    if kind in ("steady", "transient") and benchmark is None and not bcs:
        errors.append("bcs: at least one Dirichlet head is required for a custom geometry")

    time_tab = data.get("time")
    time_grid = None
    if kind == "transient":
        if not isinstance(time_tab, dict):
            errors.append("time: [time] table with t_end and steps is required for transient runs")
        else:
            t_end = _typed(time_tab, "t_end", (int, float), "time", errors)
            steps = _typed(time_tab, "steps", int, "time", errors)
            storage = _typed(time_tab, "storage", (int, float), "time", errors, default=1e-4)
            if t_end is None:
                errors.append("time.t_end: required")
            elif t_end <= 0:
                errors.append("time.t_end: must be positive")
            if steps is None:
                errors.append("time.steps: required")
            elif steps < 1:
                errors.append("time.steps: must be at least 1")
            if storage is not None and storage <= 0:
                errors.append("time.storage: must be positive")
            if t_end and steps and steps >= 1 and t_end > 0:
                time_grid = TimeGrid(t_end=float(t_end), steps=int(steps), storage=float(storage))
    elif time_tab is not None:
        errors.append(f"time: only transient runs take a [time] table (kind = {kind!r})")

    probes: list[tuple[float, float]] = []
    for i, row in enumerate(data.get("probes", [])):
        if not isinstance(row, dict) or "x" not in row or "y" not in row:
            errors.append(f"probes[{i}]: expected a table with 'x' and 'y'")
            continue
        probes.append((float(row["x"]), float(row["y"])))

    out_tab = data.get("output", {})
    out_dir = _typed(out_tab, "dir", str, "output", errors, default="out")

    fs_tab = data.get("freesurface", {})
    alpha = _typed(fs_tab, "alpha", (int, float), "freesurface", errors, default=1e-3)
    eps_x = _typed(fs_tab, "eps_x", (int, float), "freesurface", errors)
    max_inner = _typed(fs_tab, "max_inner", int, "freesurface", errors, default=100)
    max_outer = _typed(fs_tab, "max_outer", int, "freesurface", errors, default=5)
    band_width = _typed(fs_tab, "band_width", (int, float), "freesurface", errors)
    grad_threshold = _typed(fs_tab, "grad_threshold", (int, float), "freesurface", errors, default=3.0)
    seepage_tag = _typed(fs_tab, "seepage", str, "freesurface", errors, default="gamma4")
    if alpha is not None and not (0.0 < alpha < 1.0):
        errors.append("freesurface.alpha: must lie strictly between 0 and 1")
    if fs_tab and kind != "free_surface":
        errors.append(f"freesurface: only free_surface runs take a [freesurface] table (kind = {kind!r})")

    sol_tab = data.get("solver", {})
    solver_tol = _typed(sol_tab, "tol", (int, float), "solver", errors, default=1e-12)
    edge_points = _typed(sol_tab, "edge_points", int, "solver", errors, default=4)
    if solver_tol is not None and solver_tol <= 0:
        errors.append("solver.tol: must be positive")
    if edge_points is not None and edge_points < 1:
        errors.append("solver.edge_points: must be at least 1")

    known = {"kind", "geometry", "mesh", "materials", "bcs", "time", "probes",
             "output", "freesurface", "solver"}
    for key in data:
        if key not in known:
            errors.append(f"{key}: unknown section")

    if errors:
        raise ValidationError(errors)

    return RunConfig(
        kind=kind,
        benchmark=benchmark,
        domain_path=domain_path,
        mesh_type=mesh_type,
        mesh_path=mesh_path,
        mesh_size=float(mesh_size) if mesh_size is not None else None,
        adaptive=bool(adaptive),
        conductivity=dict(conductivity) if conductivity is not None else None,
        bcs=bcs,
        time=time_grid,
        probes=probes,
        out_dir=out_dir,
        alpha=float(alpha),
        eps_x=float(eps_x) if eps_x is not None else None,
        max_inner=int(max_inner),
        max_outer=int(max_outer),
        band_width=float(band_width) if band_width is not None else None,
        grad_threshold=float(grad_threshold),
        seepage_tag=seepage_tag,
        solver_tol=float(solver_tol),
        edge_points=int(edge_points),
    )
