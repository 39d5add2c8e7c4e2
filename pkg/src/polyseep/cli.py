"""Command-line front end: configuration-driven runs and mesh previews.

Exit codes:
  0  success
  2  configuration parse failure (bad TOML / unreadable file)
  3  configuration validation failure (missing/invalid fields)
  4  analysis failure (solver stall, degenerate mesh, missing tags)
  5  artifact write failure
  1  unexpected internal error

Timing lines go to stdout only; files on disk carry no timestamps or
durations, so identical configs produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import os
import sys
import time


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyseep",
        description="2D seepage analysis on polygonal and quadtree meshes",
        epilog="exit codes: 0 ok, 2 parse error, 3 invalid config, "
        "4 analysis failure, 5 write failure",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run the analysis described by a config file"),
        ("mesh", "build and write the mesh only (no solve)"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="TOML run configuration")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="reserved; all algorithms are deterministic")
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS/OpenMP thread pools")
    return parser


def _apply_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt_float(v) if isinstance(v, float) else str(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_polygon(path):
    import numpy as np

    pts = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            xs, ys = ln.split()
            pts.append((float(xs), float(ys)))
    return np.array(pts)


def _side_tag_rule(domain):
    """Tag custom-domain boundary edges by the nearest polygon side's
    outward direction: left/right/bottom/top."""
    import numpy as np

    sides = []
    n = len(domain)
    for i in range(n):
        a, b = domain[i], domain[(i + 1) % n]
        d = b - a
        nrm = np.array([d[1], -d[0]])  # outward for CCW
        nrm = nrm / np.linalg.norm(nrm)
        if abs(nrm[0]) >= abs(nrm[1]):
            tag = "right" if nrm[0] > 0 else "left"
        else:
            tag = "top" if nrm[1] > 0 else "bottom"
        sides.append((a, b, tag))

    def rule(mid, edge):
        best, best_d = "", float("inf")
        p = np.asarray(mid)
        for a, b, tag in sides:
            ab = b - a
            t = float(np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0))
            d = float(np.hypot(*(p - (a + t * ab))))
            if d < best_d:
                best, best_d = tag, d
        return best

    return rule


def _build_mesh(cfg):
    """Mesh + optional generating quadtree + clip domain + tag rule."""
    import numpy as np

    from . import benchmarks as bm
    from .geometry import read_mesh_text
    from .quadtree import balance_quadtree, generate_quadtree, quadtree_to_mesh

    if cfg.mesh_type == "file":
        return read_mesh_text(cfg.mesh_path), None, None, None

    if cfg.benchmark == "patch":
        if cfg.mesh_type == "polygonal":
            return bm.patch_polygonal_mesh(), None, None, None
        return bm.patch_quadtree_mesh(), None, None, None
    if cfg.benchmark == "foundation":
        size = cfg.mesh_size if cfg.mesh_size is not None else 5.0
        return bm.dam_foundation_mesh(size), None, None, None
    if cfg.benchmark == "rect_dam":
        if cfg.mesh_type == "polygonal":
            return bm.rect_dam_voronoi(), None, None, None
        if cfg.mesh_type == "coarse" or cfg.adaptive:
            mesh, qt = bm.rect_dam_coarse()
            return mesh, qt, bm.RECT_DAM_DOMAIN, bm.rect_dam_tags
        mesh, qt = bm.rect_dam_quadtree()
        return mesh, qt, bm.RECT_DAM_DOMAIN, bm.rect_dam_tags
    if cfg.benchmark == "trapezoid":
        if cfg.mesh_type == "coarse" or cfg.adaptive:
            base = cfg.mesh_size if cfg.mesh_size is not None else bm.TRAPEZOID_ADAPTIVE_BASE
            mesh, qt = bm.trapezoid_coarse(base)
            return mesh, qt, bm.TRAPEZOID_DOMAIN, bm.trapezoid_tags
        mesh, qt = bm.trapezoid_quadtree()
        return mesh, qt, bm.TRAPEZOID_DOMAIN, bm.trapezoid_tags

    domain = _read_polygon(cfg.domain_path)
    rule = _side_tag_rule(domain)
    root = float(max(np.ptp(domain[:, 0]), np.ptp(domain[:, 1])))
    qt = generate_quadtree(domain, float(cfg.mesh_size), max_depth=10, root_size=root)
    balance_quadtree(qt)
    return quadtree_to_mesh(qt, domain, tag_rule=rule), qt, domain, rule


def _make_problem(cfg, mesh):
    from . import benchmarks as bm
    from .seepage import SeepageProblem, TimeGrid

    if cfg.benchmark == "patch":
        problem = bm.patch_problem(mesh)
    elif cfg.benchmark == "foundation":
        problem = bm.dam_foundation_problem(mesh)
    elif cfg.benchmark == "rect_dam":
        problem = bm.rect_dam_problem(mesh)
    elif cfg.benchmark == "trapezoid":
        problem = bm.trapezoid_problem(mesh)
    else:
        problem = SeepageProblem(mesh=mesh, conductivity={0: 1.0})
    if cfg.bcs:
        problem.dirichlet = dict(cfg.bcs)
    if cfg.conductivity is not None:
        problem.conductivity = dict(cfg.conductivity)
    if cfg.time is not None:
        problem.storage = {r: cfg.time.storage for r in problem.conductivity}
        problem.time = TimeGrid(t0=0.0, dt=cfg.time.t_end / cfg.time.steps, n_steps=cfg.time.steps)
    return problem


def _flux_cell_data(problem, head, mesh, k_scale=None):
    import numpy as np

    from .seepage import darcy_flux

    flux = darcy_flux(problem, head, k_scale=k_scale)
    mags = np.zeros(mesh.num_cells)
    counts = np.zeros(mesh.num_cells)
    vsum = np.zeros((mesh.num_cells, 2))
    for ci, v in zip(flux.cell_ids, flux.velocities):
        vsum[ci] += v
        counts[ci] += 1
    nonzero = counts > 0
    vsum[nonzero] /= counts[nonzero, None]
    mags = np.hypot(vsum[:, 0], vsum[:, 1])
    return mags, flux


def _default_probes(cfg):
    from . import benchmarks as bm

    if cfg.probes:
        return list(cfg.probes)
    if cfg.benchmark == "foundation":
        return [tuple(p) for p in bm.FOUNDATION_POINTS]
    return []


def _headline(cfg, mesh, head, state=None):
    """Benchmark-specific reference errors for the summary."""
    import numpy as np

    from . import benchmarks as bm
    from .seepage import interpolate_at, relative_error_l2

    lines = []
    if cfg.benchmark == "patch":
        e = relative_error_l2(head.h, bm.patch_exact(mesh))
        lines.append(("relative e_L2 vs exact plane", f"{e:.3e}"))
    elif cfg.benchmark == "foundation":
        refs = bm.FOUNDATION_REFERENCE
        for p, ref in zip(bm.FOUNDATION_POINTS, refs):
            val = interpolate_at(mesh, head.h, np.asarray(p))
            lines.append((f"head at ({p[0]:g}, {p[1]:g})",
                          f"{val:.4f} m (ref {ref:.2f}, {100*abs(val-ref)/ref:.3f}%)"))
    elif cfg.benchmark == "rect_dam" and state is not None:
        ref = bm.RECT_DAM_EXIT_ANALYTIC
        err = abs(state.x_o - ref) / ref
        lines.append(("overflow elevation", f"{state.x_o:.6f} m (ref {ref}, {100*err:.2f}%)"))
    elif cfg.benchmark == "trapezoid" and state is not None:
        lines.append(("overflow x", f"{state.x_o:.4f} m"))
    return lines


def _write_summary(path, rows) -> None:
    width = max(len(k) for k, _ in rows)
    lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_mesh(cfg, out_dir: str) -> int:
    from .geometry import write_mesh_text
    from .vtk_io import write_vtk

    mesh, _, _, _ = _build_mesh(cfg)
    os.makedirs(out_dir, exist_ok=True)
    write_mesh_text(mesh, os.path.join(out_dir, "mesh.txt"))
    write_vtk(mesh, os.path.join(out_dir, "mesh.vtk"))
    print(f"elements {mesh.num_cells}")
    print(f"dofs     {mesh.num_vertices}")
    print(f"wrote {out_dir}/mesh.txt, {out_dir}/mesh.vtk")
    return 0


def _cmd_run(cfg, out_dir: str) -> int:
    from dataclasses import replace

    import numpy as np

    from .freesurface import FreeSurfaceConfig, run_adaptive, run_fixed_mesh
    from .geometry import write_mesh_text
    from .seepage import interpolate_at, run_transient, solve_steady
    from .vtk_io import write_vtk

    mesh, qt, domain, tag_rule = _build_mesh(cfg)
    problem = _make_problem(cfg, mesh)
    probes = _default_probes(cfg)

    summary: list[tuple[str, str]] = []
    state = None
    stats = None
    polyline = None
    probe_table = None

    t0 = time.perf_counter()
    if cfg.kind == "steady":
        head = solve_steady(problem, tol=cfg.solver_tol)
        iterations = 1
    elif cfg.kind == "transient":
        history, probe_table = run_transient(problem, probes=probes, keep_history=False)
        head = history[-1]
        iterations = problem.time.n_steps
    else:
        fs_cfg = FreeSurfaceConfig(
            alpha=cfg.alpha,
            eps_x=cfg.eps_x,
            max_inner=cfg.max_inner,
            max_outer=cfg.max_outer,
            band_width=cfg.band_width,
            grad_threshold=cfg.grad_threshold,
            gamma4=cfg.seepage_tag,
            solver_tol=cfg.solver_tol,
        )
        if cfg.adaptive:
            if qt is None:
                print("error: adaptive runs need a quadtree mesh recipe", file=sys.stderr)
                return 3
            mesh, head, state, stats = run_adaptive(
                problem, fs_cfg, quadtree=qt, domain=domain, tag_rule=tag_rule
            )
            problem = replace(problem, mesh=mesh)
            iterations = sum(s["inner_iters"] for s in stats)
            from .freesurface import _clip_to_exit, _surface_exit, extract_free_surface, gamma_chain

            psi = head.h - mesh.vertices[:, 1]
            polyline = extract_free_surface(mesh, psi)
            q = _surface_exit(polyline, mesh.vertices[gamma_chain(mesh, cfg.seepage_tag)])
            if q is not None:
                polyline = _clip_to_exit(polyline, q)
        else:
            head, state, polyline = run_fixed_mesh(problem, fs_cfg)
            iterations = state.iter
        if not state.converged:
            print("error: free-surface iteration did not converge "
                  f"within {cfg.max_inner} iterations", file=sys.stderr)
            return 4
    wall = time.perf_counter() - t0

    os.makedirs(out_dir, exist_ok=True)
    write_mesh_text(mesh, os.path.join(out_dir, "mesh.txt"))

    y = mesh.vertices[:, 1]
    point_data = {"head": head.h, "pressure_head": head.h - y}
    if state is not None:
        wet = state.wet.astype(int)
        k_mult = state.k_mult
        mags, _ = _flux_cell_data(problem, head, mesh, k_scale=state.k_mult)
    else:
        wet = np.ones(mesh.num_cells, dtype=int)
        k_mult = np.ones(mesh.num_cells)
        mags, _ = _flux_cell_data(problem, head, mesh)
    cell_data = {"wet": wet, "k_mult": k_mult, "flux_magnitude": mags}
    write_vtk(mesh, os.path.join(out_dir, "solution.vtk"), point_data, cell_data)

    if polyline is not None and len(polyline):
        _write_csv(os.path.join(out_dir, "free_surface.csv"), ["x", "y"],
                   [(float(p[0]), float(p[1])) for p in polyline])
    if cfg.kind == "transient" and len(probes):
        header = ["t"] + [f"p{i}" for i in range(len(probes))]
        _write_csv(os.path.join(out_dir, "probes.csv"), header,
                   [tuple(float(v) for v in row) for row in probe_table])
    elif probes:
        rows = [(float(p[0]), float(p[1]),
                 float(interpolate_at(mesh, head.h, np.asarray(p)))) for p in probes]
        _write_csv(os.path.join(out_dir, "probes.csv"), ["x", "y", "head"], rows)
    if stats is not None:
        _write_csv(os.path.join(out_dir, "cycles.csv"),
                   ["cycle", "elements", "dofs", "x_o", "marked", "inner_iters"],
                   [(s["cycle"], s["elements"], s["dofs"], float(s["x_o"]),
                     s["marked"], s["inner_iters"]) for s in stats])

    summary.append(("elements", str(mesh.num_cells)))
    summary.append(("dofs", str(mesh.num_vertices)))
    summary.append(("iterations", str(iterations)))
    for key, val in _headline(cfg, mesh, head, state):
        summary.append((key, val))
    if state is not None:
        summary.append(("converged", str(state.converged)))
    _write_summary(os.path.join(out_dir, "summary.txt"), summary)

    for key, val in summary:
        print(f"{key.ljust(12)}  {val}")
    print(f"{'wall time'.ljust(12)}  {wall:.2f} s")
    print(f"artifacts in {out_dir}/")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _apply_threads(args.threads)

    from .errors import IoError, ParseError, PolyseepError, ValidationError

    try:
        from .config import parse_config

        cfg = parse_config(args.config)
        out_dir = args.out if args.out else cfg.out_dir
        if args.command == "mesh":
            return _cmd_mesh(cfg, out_dir)
        return _cmd_run(cfg, out_dir)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print("invalid configuration:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 3
    except (OSError, IoError) as exc:
        print(f"write failure: {exc}", file=sys.stderr)
        return 5
    except PolyseepError as exc:
        print(f"analysis failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
