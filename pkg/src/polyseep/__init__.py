"""Polygonal smoothed finite elements for 2D saturated seepage.

Meshes are arbitrary polygons (including quadtree cells with hanging
nodes); element matrices come from boundary-integral gradient smoothing
over a centroid fan of subcells, so no isoparametric mapping is needed.
Steady, transient (backward Euler) and unconfined free-surface problems
share one assembly path.
"""

from .errors import (
    PolyseepError,
    MeshError,
    ShapeFunctionError,
    NotConvergedError,
    ConflictingDirichletError,
    ValidationError,
    ParseError,
    IoError,
)
from .geometry import PolyCell, PolyMesh, read_mesh_text, write_mesh_text
from .quadtree import Quadtree, generate_quadtree, balance_quadtree, quadtree_to_mesh, refine_cells
from .voronoi import hex_seeds, graded_seeds, voronoi_mesh
from .shapefn import ShapeBasis, classify_polygon
from .smoothing import (
    SmoothingCell,
    ElementData,
    GlobalSystem,
    build_smoothing_cells,
    smoothed_grad_op,
    element_stiffness,
    element_capacity,
    precompute_elements,
    assemble,
    apply_dirichlet,
)
from .solver import solve_spd
from .seepage import (
    TimeGrid,
    SeepageProblem,
    HeadField,
    FluxField,
    solve_steady,
    step_transient,
    run_transient,
    darcy_flux,
    interpolate_at,
    relative_error_l2,
)
from .freesurface import (
    FreeSurfaceConfig,
    FreeSurfaceState,
    run_fixed_mesh,
    run_adaptive,
    extract_free_surface,
    classify_wet_dry,
    permeability_field,
    mark_band,
)
from .vtk_io import write_vtk, read_vtk, VtkGrid
from .config import RunConfig, parse_config

__version__ = "0.1.0"

__all__ = [
    "PolyseepError",
    "MeshError",
    "ShapeFunctionError",
    "NotConvergedError",
    "ConflictingDirichletError",
    "ValidationError",
    "ParseError",
    "IoError",
    "PolyCell",
    "PolyMesh",
    "read_mesh_text",
    "write_mesh_text",
    "Quadtree",
    "generate_quadtree",
    "balance_quadtree",
    "quadtree_to_mesh",
    "refine_cells",
    "hex_seeds",
    "graded_seeds",
    "voronoi_mesh",
    "ShapeBasis",
    "classify_polygon",
    "SmoothingCell",
    "ElementData",
    "GlobalSystem",
    "build_smoothing_cells",
    "smoothed_grad_op",
    "element_stiffness",
    "element_capacity",
    "precompute_elements",
    "assemble",
    "apply_dirichlet",
    "solve_spd",
    "TimeGrid",
    "SeepageProblem",
    "HeadField",
    "FluxField",
    "solve_steady",
    "step_transient",
    "run_transient",
    "darcy_flux",
    "interpolate_at",
    "relative_error_l2",
    "FreeSurfaceConfig",
    "FreeSurfaceState",
    "run_fixed_mesh",
    "run_adaptive",
    "extract_free_surface",
    "classify_wet_dry",
    "permeability_field",
    "mark_band",
    "write_vtk",
    "read_vtk",
    "VtkGrid",
    "RunConfig",
    "parse_config",
    "__version__",
]
