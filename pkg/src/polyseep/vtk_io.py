"""Legacy ASCII VTK output for polygonal meshes.

Writes unstructured grids with generic polygon cells (VTK cell type 7)
plus named nodal and per-cell scalar arrays.  Floats are formatted with
``repr``, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IoError
from .geometry import PolyCell, PolyMesh

VTK_POLYGON = 7

_HEADER = "# vtk DataFile Version 3.0"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_vtk(
    mesh: PolyMesh,
    path,
    point_data: dict[str, np.ndarray] | None = None,
    cell_data: dict[str, np.ndarray] | None = None,
    title: str = "polyseep output",
) -> None:
    """Write ``mesh`` and named scalar fields as a legacy ASCII VTK file.

    point_data arrays must have length ``mesh.num_vertices`` and
    cell_data arrays length ``mesh.num_cells``; integer-typed arrays are
    emitted as ``int`` scalars, everything else as ``double``.
    """
    point_data = point_data or {}
    cell_data = cell_data or {}
    for name, arr in point_data.items():
        if len(arr) != mesh.num_vertices:
            raise IoError(
                f"point array {name!r} has {len(arr)} values for "
                f"{mesh.num_vertices} points"
            )
    for name, arr in cell_data.items():
        if len(arr) != mesh.num_cells:
            raise IoError(
                f"cell array {name!r} has {len(arr)} values for "
                f"{mesh.num_cells} cells"
            )

    lines = [_HEADER, title, "ASCII", "DATASET UNSTRUCTURED_GRID"]

    lines.append(f"POINTS {mesh.num_vertices} double")
    for p in mesh.vertices:
        lines.append(f"{_fmt(p[0])} {_fmt(p[1])} 0.0")

    total = sum(len(c.vertex_ids) + 1 for c in mesh.cells)
    lines.append(f"CELLS {mesh.num_cells} {total}")
    for c in mesh.cells:
        ids = " ".join(str(int(v)) for v in c.vertex_ids)
        lines.append(f"{len(c.vertex_ids)} {ids}")
    lines.append(f"CELL_TYPES {mesh.num_cells}")
    lines.extend([str(VTK_POLYGON)] * mesh.num_cells)

    def emit(section: str, count: int, fields: dict[str, np.ndarray]):
        lines.append(f"{section} {count}")
        for name, arr in fields.items():
            arr = np.asarray(arr)
            if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool:
                lines.append(f"SCALARS {name} int 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(str(int(v)) for v in arr)
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(_fmt(v) for v in arr)

    if point_data:
        emit("POINT_DATA", mesh.num_vertices, point_data)
    if cell_data:
        emit("CELL_DATA", mesh.num_cells, cell_data)

    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


@dataclass
class VtkGrid:
    """Parsed contents of a legacy ASCII VTK unstructured grid."""

    points: np.ndarray
    cells: list[np.ndarray]
    point_data: dict[str, np.ndarray] = field(default_factory=dict)
    cell_data: dict[str, np.ndarray] = field(default_factory=dict)

    def to_mesh(self) -> PolyMesh:
        return PolyMesh(
            vertices=self.points[:, :2].copy(),
            cells=[PolyCell(vertex_ids=ids.copy()) for ids in self.cells],
        )


def read_vtk(path) -> VtkGrid:
    """Parse a file produced by :func:`write_vtk` (scalar arrays only)."""
    try:
        with open(path) as fh:
            tokens = fh.read().split()
    except OSError as exc:
        raise IoError(str(exc)) from exc

    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise IoError(f"{path}: truncated file")
        tok = tokens[pos]
        pos += 1
        return tok

    points = None
    cells: list[np.ndarray] = []
    point_data: dict[str, np.ndarray] = {}
    cell_data: dict[str, np.ndarray] = {}
    section = None  # which of POINT_DATA / CELL_DATA we are inside

    while pos < len(tokens):
        tok = take()
        if tok == "POINTS":
            n = int(take())
            take()  # dtype
            flat = np.array([float(take()) for _ in range(3 * n)])
            points = flat.reshape(n, 3)
        elif tok == "CELLS":
            n = int(take())
            take()  # total size
            for _ in range(n):
                m = int(take())
                cells.append(np.array([int(take()) for _ in range(m)], dtype=int))
        elif tok == "CELL_TYPES":
            n = int(take())
            for _ in range(n):
                take()
        elif tok in ("POINT_DATA", "CELL_DATA"):
            section = tok
            take()  # count
        elif tok == "SCALARS":
            name = take()
            dtype = take()
            take()  # components
            lut = take()
            if lut != "LOOKUP_TABLE":
                raise IoError(f"{path}: expected LOOKUP_TABLE after SCALARS {name}")
            take()  # table name
            if section == "POINT_DATA":
                n = len(points)
            elif section == "CELL_DATA":
                n = len(cells)
            else:
                raise IoError(f"{path}: SCALARS outside POINT_DATA/CELL_DATA")
            caster = int if dtype == "int" else float
            arr = np.array([caster(take()) for _ in range(n)])
            (point_data if section == "POINT_DATA" else cell_data)[name] = arr

    if points is None:
        raise IoError(f"{path}: no POINTS section")
    return VtkGrid(points=points, cells=cells, point_data=point_data, cell_data=cell_data)
