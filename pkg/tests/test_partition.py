from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pfxfem.mesh import RefinedMesh, build_background_mesh, build_face_table, build_refined_reference, update_refined_mesh
from pfxfem.partition import (
    TIPS,
    XFEM,
    Criteria,
    Partition,
    apply_refine_criterion,
    apply_switch_criterion,
    crop_interface,
    damage_dirichlet_boundary,
    element_distance,
    identify_tip_elements,
    interface_faces,
    interface_node_damage,
)

H = 1.0
L = 0.1


def _setup(nx=5, ny=5, m=10, tips=(12,)):
    mesh = build_background_mesh((0, nx), (0, ny), nx, ny)
    faces = build_face_table(mesh)
    ref = build_refined_reference(1, m)
    labels = np.zeros(mesh.n_elements, dtype=np.int8)
    labels[list(tips)] = TIPS
    rm = update_refined_mesh(RefinedMesh(), list(tips), [], ref, mesh)
    return mesh, faces, ref, Partition(labels), rm


CRIT = Criteria.for_mesh(H, L, delta_star=2.0)


def test_criteria_ordering():
    with pytest.raises(ValueError):
        Criteria(2.0, 0.02, d_star=0.95)
    with pytest.raises(ValueError):
        Criteria(0.0, 0.02)
    assert CRIT.A_star == pytest.approx(H * L / 5)


def test_element_distance():
    mesh = build_background_mesh((0, 3), (0, 3), 3, 3)
    assert element_distance(4, 4, mesh) == 0
    assert element_distance(4, 5, mesh) == pytest.approx(1.0)
    assert element_distance(4, 8, mesh) == pytest.approx(math.sqrt(2))


def _band(rm, predicate):
    return np.where(predicate(rm.coords[:, 0], rm.coords[:, 1]), 1.0, 0.0)


def test_tip_zero_damage():
    mesh, faces, ref, part, rm = _setup()
    assert identify_tip_elements(part, np.zeros(rm.n_nodes), rm, ref, mesh, CRIT, previous=set()) == frozenset()


def test_tip_one_side_area_threshold():
    # element 12 = [2,3]x[2,3]; band enters through the left face
    mesh, faces, ref, part, rm = _setup()
    wide = _band(rm, lambda x, y: (np.abs(y - 2.5) <= 0.1 + 1e-9) & (x <= 2.5))
    assert identify_tip_elements(part, wide, rm, ref, mesh, CRIT, previous=set()) == {12}
    # band area below A* = 0.02: a sliver ending right after the face
    short = _band(rm, lambda x, y: (np.abs(y - 2.5) <= 0.1 + 1e-9) & (x <= 2.05))
    assert identify_tip_elements(part, short, rm, ref, mesh, CRIT, previous=set()) == frozenset()


def test_tip_two_adjacent_sides_needs_damaged_corner():
    mesh, faces, ref, part, rm = _setup()
    # L-shaped band along the left and bottom faces passing through corner (2, 2)
    corner = _band(rm, lambda x, y: ((x <= 2.1) | (y <= 2.1)) & (x <= 2.5) & (y <= 2.5))
    assert identify_tip_elements(part, corner, rm, ref, mesh, CRIT, previous=set()) == {12}
    # diagonal band cutting the corner off: two adjacent sides, corner undamaged
    cut = _band(rm, lambda x, y: np.abs((x - 2) + (y - 2) - 0.5) <= 0.08)
    assert identify_tip_elements(part, cut, rm, ref, mesh, CRIT, previous=set()) == frozenset()


def test_tip_through_band_is_not_a_tip():
    mesh, faces, ref, part, rm = _setup()
    through = _band(rm, lambda x, y: np.abs(y - 2.5) <= 0.1 + 1e-9)
    assert identify_tip_elements(part, through, rm, ref, mesh, CRIT, previous=set()) == frozenset()


def test_tip_retention_and_release():
    mesh, faces, ref, part, rm = _setup(tips=(11, 12, 13))
    # the band faded: previous tip is kept
    assert identify_tip_elements(part, np.zeros(rm.n_nodes), rm, ref, mesh, CRIT, previous={12}) == {12}
    # band runs through 12 and stops just inside 13 (too small to be a tip): keep 12
    moving = _band(rm, lambda x, y: (np.abs(y - 2.5) <= 0.1 + 1e-9) & (x <= 3.05))
    assert identify_tip_elements(part, moving, rm, ref, mesh, CRIT, previous={12}) == {12}
    # band runs through all three elements: the tip has left for good
    joined = _band(rm, lambda x, y: np.abs(y - 2.5) <= 0.1 + 1e-9)
    assert identify_tip_elements(part, joined, rm, ref, mesh, CRIT, previous={12}) == frozenset()
    # band reaches the middle of 13: the tip moved there
    moved = _band(rm, lambda x, y: (np.abs(y - 2.5) <= 0.1 + 1e-9) & (x <= 3.5))
    assert identify_tip_elements(part, moved, rm, ref, mesh, CRIT, previous={12}) == {13}


def test_refine_criterion():
    mesh, faces, ref, part, rm = _setup()
    assert apply_refine_criterion(part, {13: 0.25}, {12}, CRIT, mesh) == {13}
    far = Criteria.for_mesh(H, L, delta_star=2.0)
    mesh2, _, _, part2, _ = _setup(nx=30, ny=1, tips=(0,))
    assert apply_refine_criterion(part2, {21: 0.25}, {0}, far, mesh2) == set()
    assert apply_refine_criterion(part, {13: 0.0, 11: 0.0}, {12}, CRIT, mesh) == set()
    assert apply_refine_criterion(part, {13: 0.19}, {12}, CRIT, mesh) == set()


def test_refine_cut_elements_near_tip():
    mesh, faces, ref, part, rm = _setup()
    assert apply_refine_criterion(part, {}, {12}, CRIT, mesh, cut_elements=[14, 0]) == {14}


def test_switch_criterion():
    mesh, faces, ref, part, rm = _setup(nx=7, ny=1, tips=(0, 1, 4))
    crit = Criteria.for_mesh(H, L, delta_star=3.0)
    assert apply_switch_criterion(part, {0}, crit, mesh) == {4}
    assert apply_switch_criterion(part, set(), crit, mesh) == {0, 1, 4}


def test_crop_interface():
    assert crop_interface(np.array([0.0, 0.0]), CRIT).all()
    assert not crop_interface(np.array([1.0, 1.0]), CRIT).any()
    assert crop_interface(np.array([0.5, 0.89, 0.9, 0.95]), CRIT).tolist() == [True, True, False, False]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.floats(0, 1))
def test_crop_monotone(d, extra):
    d = np.array(d)
    raised = np.clip(d + extra, 0, 1)
    assert crop_interface(raised, CRIT).sum() <= crop_interface(d, CRIT).sum()


def test_interface_faces_match_labels():
    mesh, faces, ref, part, rm = _setup(tips=(12, 13))
    f = interface_faces(part.labels, faces)
    assert len(f) == 6
    for fid in f:
        assert part.labels[faces.owner[fid]] != part.labels[faces.neighbor[fid]]


@given(st.lists(st.integers(0, 24), max_size=10, unique=True))
def test_interface_faces_property(tips):
    mesh = build_background_mesh((0, 5), (0, 5), 5, 5)
    faces = build_face_table(mesh)
    lab = np.zeros(25, dtype=np.int8)
    lab[tips] = TIPS
    f = set(interface_faces(lab, faces).tolist())
    brute = {
        i
        for i in range(faces.n_faces)
        if faces.neighbor[i] >= 0 and lab[faces.owner[i]] != lab[faces.neighbor[i]]
    }
    assert f == brute
    # refine and switch never select the same element
    refine = apply_refine_criterion(Partition(lab), {e: 0.5 for e in range(25) if lab[e] == XFEM}, set(tips[:1]), CRIT, mesh)
    switch = apply_switch_criterion(Partition(lab), set(tips[:1]), CRIT, mesh)
    assert not refine & switch


def test_damage_dirichlet_boundary():
    mesh, faces, ref, part, rm = _setup(tips=(11, 12, 13))
    d = np.zeros(rm.n_nodes)
    assert damage_dirichlet_boundary(part, d, rm, ref, faces, CRIT) == {}
    # band entering element 11 through its left face at y = 2.5
    d = _band(rm, lambda x, y: (np.abs(y - 2.5) <= 0.1 + 1e-9) & (x <= 2.5))
    gam = damage_dirichlet_boundary(part, d, rm, ref, faces, CRIT)
    # cut face x = 1 plus its neighbours on Gamma (the faces at y = 2 and y = 3 of element 11)
    nodes = {k[1] for k in gam if k[0] == "v"}
    xy = {tuple(mesh.nodes[n]) for n in nodes}
    assert xy == {(1.0, 2.0), (1.0, 3.0), (2.0, 2.0), (2.0, 3.0)}
    assert max(gam.values()) == 1.0
    # stored values survive a later drop in damage
    part2 = Partition(part.labels, gamma_Dd=gam)
    again = damage_dirichlet_boundary(part2, d * 0.99 + 0.0, rm, ref, faces, CRIT)
    assert all(again[k] == gam[k] for k in gam if k in again)


def test_interface_node_damage():
    mesh, faces, ref, part, rm = _setup()
    d = _band(rm, lambda x, y: x >= 2.95)
    out = interface_node_damage(part, d, rm, ref, mesh, faces)
    assert out[13] == 1.0
    assert out[11] == 0.0
    assert out[18] == 1.0  # shares the corner (3, 3)


def test_tips_must_be_labelled():
    with pytest.raises(ValueError):
        Partition(np.zeros(4), tips={1})
