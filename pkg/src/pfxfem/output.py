"""Simulation output: VTK fields and load/nDOF curves.

Fields go to legacy ASCII VTK unstructured grids, readable by ParaView and
VisIt.  Curves are CSV with one row per load step.  Every file is written to
a temporary sibling first and renamed into place.
"""

from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .crack_geometry import cut_cells
from .mesh import BackgroundMesh, RefinedReference
from .partition import TIPS

CURVE_COLUMNS = ("step", "u_D", "F_x", "F_y", "nDOF", "iterations", "tips", "cracks")

VTK_POLY_LINE = 4
VTK_POLYGON = 7
VTK_QUAD = 9

LABEL_CRACK = -1


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def format_curves(records) -> str:
    out = io.StringIO()
    out.write(",".join(CURVE_COLUMNS) + "\n")
    for r in records:
        out.write(",".join(_fmt(getattr(r, c)) for c in CURVE_COLUMNS) + "\n")
    return out.getvalue()


def write_curves(records, path) -> Path:
    """CSV with header ``step,u_D,F_x,F_y,nDOF,iterations,tips,cracks``."""
    return atomic_write(path, format_curves(records))


def read_curves(path) -> dict:
    """Columns of a curve file as arrays."""
    data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    return {c: np.atleast_1d(data[c]) for c in CURVE_COLUMNS}


class _Grid:
    def __init__(self):
        self.points: list[np.ndarray] = []
        self.disp: list[np.ndarray] = []
        self.damage: list[np.ndarray] = []
        self.cells: list[np.ndarray] = []
        self.types: list[int] = []
        self.labels: list[int] = []
        self.crack: list[int] = []
        self.n = 0

    def add_points(self, x, u, d) -> np.ndarray:
        x = np.atleast_2d(x)
        ids = np.arange(self.n, self.n + len(x))
        self.points.append(x)
        self.disp.append(np.atleast_2d(u))
        self.damage.append(np.asarray(d, dtype=float).reshape(-1))
        self.n += len(x)
        return ids

    def add_cell(self, ids, vtk_type: int, label: int, crack: int = -1):
        self.cells.append(np.asarray(ids, dtype=np.int64))
        self.types.append(vtk_type)
        self.labels.append(label)
        self.crack.append(crack)

    def render(self, title: str) -> str:
        P = np.vstack(self.points) if self.points else np.zeros((0, 2))
        U = np.vstack(self.disp) if self.disp else np.zeros((0, 2))
        D = np.concatenate(self.damage) if self.damage else np.zeros(0)
        out = io.StringIO()
        out.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        out.write(f"POINTS {len(P)} double\n")
        for x in P:
            out.write(f"{_fmt(x[0])} {_fmt(x[1])} 0\n")
        size = sum(len(c) + 1 for c in self.cells)
        out.write(f"CELLS {len(self.cells)} {size}\n")
        for c in self.cells:
            out.write(f"{len(c)} " + " ".join(str(int(i)) for i in c) + "\n")
        out.write(f"CELL_TYPES {len(self.cells)}\n")
        out.write("".join(f"{t}\n" for t in self.types))
        out.write(f"POINT_DATA {len(P)}\nSCALARS damage double 1\nLOOKUP_TABLE default\n")
        out.write("".join(f"{_fmt(v)}\n" for v in D))
        out.write("VECTORS displacement double\n")
        for v in U:
            out.write(f"{_fmt(v[0])} {_fmt(v[1])} 0\n")
        out.write(f"CELL_DATA {len(self.cells)}\nSCALARS label int 1\nLOOKUP_TABLE default\n")
        out.write("".join(f"{v}\n" for v in self.labels))
        out.write("SCALARS crack int 1\nLOOKUP_TABLE default\n")
        out.write("".join(f"{v}\n" for v in self.crack))
        return out.getvalue()


def _xfem_values(disc, u, e: int, x: np.ndarray, push_to: np.ndarray) -> np.ndarray:
    """Displacement at points ``x`` of element ``e``, sides read near ``push_to``."""
    if disc is None or u is None:
        return np.zeros((len(x), 2))
    xi = disc.mesh.inverse_map(e, x)
    H = disc.heaviside(e, x + 1e-9 * (push_to - x), interior=True)
    slots, N, _ = disc.xfem_basis(e, xi, H)
    return np.column_stack([N @ u[2 * slots], N @ u[2 * slots + 1]])


def field_grid(state, mesh: BackgroundMesh, ref: RefinedReference) -> _Grid:
    """Cells and point data of a state (see :func:`write_fields`)."""
    g = _Grid()
    lab = state.partition.labels
    disc, u = state.disc, state.u
    usable = disc is not None and u is not None and np.array_equal(disc.labels, lab)
    if not usable:
        disc = u = None

    rm = state.rm
    if rm.n_nodes:
        if u is not None:
            s = disc.dofs.ref_slots(np.arange(rm.n_nodes))
            U = np.column_stack([u[2 * s], u[2 * s + 1]])
        else:
            U = np.zeros((rm.n_nodes, 2))
        base = g.add_points(rm.coords, U, state.damage)
        for e in np.nonzero(lab == TIPS)[0]:
            for c in rm.rows[int(e)][ref.sub_conn]:
                g.add_cell(base[c], VTK_QUAD, TIPS)

    cut = state.cracks.cut_elements()
    for e in np.nonzero(lab != TIPS)[0]:
        e = int(e)
        corners = mesh.corners(e)
        pieces = [p for _, p in cut.get(e, [])]
        cells = cut_cells(corners, pieces) if pieces else [corners]
        for c in cells:
            centre = c.mean(axis=0)
            vals = _xfem_values(disc, u, e, c, centre)
            ids = g.add_points(c, vals, np.zeros(len(c)))
            g.add_cell(ids, VTK_QUAD if len(c) == 4 and not pieces else VTK_POLYGON, int(lab[e]))

    for c in state.cracks.cracks:
        P = c.polyline()
        if len(P) < 2:
            continue
        ids = g.add_points(P, np.zeros((len(P), 2)), np.ones(len(P)))
        g.add_cell(ids, VTK_POLY_LINE, LABEL_CRACK, c.id)
    return g


def write_fields(state, mesh: BackgroundMesh, ref: RefinedReference, path, title: str = "pfxfem fields") -> Path:
    """Write a state as a legacy VTK unstructured grid.

    Cells: refined subcells of Omega_tips carrying nodal damage, background
    cells of Omega_xfem (cut cells split along the crack so the jump shows),
    and one poly-line cell per sharp crack.  Point data: ``damage`` and
    ``displacement``; cell data: ``label`` (1 tips, 0 xfem, -1 crack line)
    and ``crack`` (crack id on line cells, -1 elsewhere).
    """
    return atomic_write(path, field_grid(state, mesh, ref).render(title))

