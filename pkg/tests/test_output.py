from __future__ import annotations

import numpy as np
import pytest

from pfxfem.config import load_config, resolve_config
from pfxfem.driver import Simulation, StepRecord
from pfxfem.output import CURVE_COLUMNS, field_grid, format_curves, read_curves, write_curves, write_fields


def _records():
    return [
        StepRecord(1, 1e-4, 0.0, 0.125, 1000, 3, 1, 1),
        StepRecord(2, 2e-4, -1.5e-9, 0.25, 1040, 12, 2, 2, False),
    ]


def test_empty_run_writes_header_only(tmp_path):
    p = write_curves([], tmp_path / "c.csv")
    assert p.read_text() == ",".join(CURVE_COLUMNS) + "\n"


def test_curves_round_trip_and_deterministic(tmp_path):
    recs = _records()
    a = write_curves(recs, tmp_path / "a.csv").read_bytes()
    b = write_curves(recs, tmp_path / "b.csv").read_bytes()
    assert a == b
    assert a.decode().splitlines()[0] == "step,u_D,F_x,F_y,nDOF,iterations,tips,cracks"
    cols = read_curves(tmp_path / "a.csv")
    assert cols["nDOF"].tolist() == [1000, 1040]
    assert cols["u_D"] == pytest.approx([1e-4, 2e-4])
    assert cols["F_x"][1] == pytest.approx(-1.5e-9)


def test_write_leaves_no_temporaries(tmp_path):
    write_curves(_records(), tmp_path / "c.csv")
    assert [p.name for p in tmp_path.iterdir()] == ["c.csv"]


@pytest.fixture(scope="module")
def continuity_state():
    sim = Simulation(load_config(resolve_config("continuity")))
    res = sim.run()
    return sim, res.state


def _parse_vtk(text):
    lines = text.splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII" and lines[3] == "DATASET UNSTRUCTURED_GRID"
    i = 4
    n_pts = int(lines[i].split()[1])
    pts = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1 : i + 1 + n_pts]])
    i += 1 + n_pts
    n_cells, size = map(int, lines[i].split()[1:])
    cells = [[int(v) for v in ln.split()] for ln in lines[i + 1 : i + 1 + n_cells]]
    assert sum(len(c) for c in cells) == size
    i += 1 + n_cells
    assert lines[i] == f"CELL_TYPES {n_cells}"
    types = [int(v) for v in lines[i + 1 : i + 1 + n_cells]]
    i += 1 + n_cells
    assert lines[i] == f"POINT_DATA {n_pts}"
    dmg = np.array([float(v) for v in lines[i + 3 : i + 3 + n_pts]])
    i += 3 + n_pts
    assert lines[i] == "VECTORS displacement double"
    disp = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1 : i + 1 + n_pts]])
    i += 1 + n_pts
    assert lines[i] == f"CELL_DATA {n_cells}"
    labels = [int(v) for v in lines[i + 3 : i + 3 + n_cells]]
    i += 3 + n_cells
    crack = [int(v) for v in lines[i + 2 : i + 2 + n_cells]]
    return pts, cells, types, dmg, disp, labels, crack


def test_vtk_structure(continuity_state, tmp_path):
    sim, st = continuity_state
    p = write_fields(st, sim.mesh, sim.ref, tmp_path / "f.vtk")
    pts, cells, types, dmg, disp, labels, crack = _parse_vtk(p.read_text())
    assert all(c[0] == len(c) - 1 and max(c[1:]) < len(pts) for c in cells)
    assert types.count(4) == len(st.cracks) == 1
    n_tips = len(st.partition.tips_elements)
    assert types.count(9) >= n_tips * sim.m**2
    assert labels.count(1) == n_tips * sim.m**2
    # the discrete damage may overshoot 1 slightly (clamped where it is used)
    assert 0 <= dmg.min() and dmg.max() <= 1.01
    # rigid upper half in the xfem region away from the crack
    upper = (pts[:, 1] > 0.1)
    assert np.allclose(disp[upper, 1], 1e-4, atol=1e-6)
    assert np.all(np.array(crack)[np.array(types) == 4] == st.cracks.cracks[0].id)


def test_vtk_two_cracks_two_polylines(continuity_state):
    from dataclasses import replace

    from pfxfem.crack_geometry import Crack

    sim, st = continuity_state
    c = st.cracks.cracks[0]
    other = Crack(c.id + 1, c.pieces[:1])
    st2 = replace(st, cracks=st.cracks.with_crack(other))
    g = field_grid(st2, sim.mesh, sim.ref)
    assert g.types.count(4) == 2
    assert sorted(k for k, t in zip(g.crack, g.types) if t == 4) == [c.id, c.id + 1]


def test_vtk_deterministic(continuity_state, tmp_path):
    sim, st = continuity_state
    a = write_fields(st, sim.mesh, sim.ref, tmp_path / "a.vtk").read_bytes()
    b = write_fields(st, sim.mesh, sim.ref, tmp_path / "b.vtk").read_bytes()
    assert a == b
