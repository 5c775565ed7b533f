from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from support import brute_force_damage, discretization

from pfxfem.assembly import (
    DirichletBC,
    EquilibriumOptions,
    SolverError,
    LinearSystem,
    assemble_damage,
    assemble_equilibrium,
    compute_beta,
    solve_spd,
)
from pfxfem.crack_geometry import Crack, CrackPiece, CrackSet
from pfxfem.material import Material

MAT = Material(E=20.0, nu=0.3, Gc=1e-3, l=0.05)


def _qp_history(disc, e, fn):
    x = disc.mesh.map(e, disc.ref.qp_xi.reshape(-1, 2))
    return fn(x[:, 0], x[:, 1]).reshape(disc.ref.m**2, 4)


def _ring_keys(disc, e):
    return [disc.rm.keys[i] for i in disc.rm.rows[e][disc.ref.boundary_loop]]


@pytest.mark.parametrize("m", [3, 6])
def test_damage_matches_brute_force(m):
    disc = discretization((0, 1), (0, 1), 1, 1, m, [0], MAT)
    Hfn = lambda x, y: 0.02 * (1 + np.sin(3 * x) * np.cos(2 * y))
    bval = lambda x, y: 0.1 * x + 0.3 * y * y
    ring = disc.rm.rows[0][disc.ref.boundary_loop]
    gam = {disc.rm.keys[i]: bval(*disc.rm.coords[i]) for i in ring}
    d = solve_spd(assemble_damage(disc, MAT, {0: _qp_history(disc, 0, Hfn)}, gam))
    X, d_ref = brute_force_damage(0, 0, 1, m, MAT.Gc, MAT.l, Hfn, bval)
    idx = {tuple(np.round(x, 12)): k for k, x in enumerate(X)}
    mine = np.array([d[i] for i in range(disc.rm.n_nodes)])
    theirs = np.array([d_ref[idx[tuple(np.round(x, 12))]] for x in disc.rm.coords])
    assert np.max(np.abs(mine - theirs)) <= 1e-12


def test_damage_matrix_symmetric_positive_definite():
    disc = discretization((0, 2), (0, 1), 2, 1, 4, [0, 1], MAT)
    H = {e: _qp_history(disc, e, lambda x, y: x * y) for e in (0, 1)}
    sysm = assemble_damage(disc, MAT, H, {})
    A = sysm.matrix.toarray()
    assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()
    assert np.linalg.eigvalsh(A).min() > 0


def test_uniform_history_interior_value_converges():
    l, Gc, H0 = MAT.l, MAT.Gc, 0.05
    exact = 2 * l * H0 / (Gc + 2 * l * H0)
    errs = []
    for m in (2, 4, 8, 16):
        disc = discretization((0, 1), (0, 1), 1, 1, m, [0], MAT)
        gam = {k: 0.0 for k in _ring_keys(disc, 0)}
        d = solve_spd(assemble_damage(disc, MAT, {0: np.full((m * m, 4), H0)}, gam))
        centre = np.argmin(np.linalg.norm(disc.rm.coords - 0.5, axis=1))
        errs.append(abs(d[centre] - exact))
    assert all(b < a for a, b in zip(errs[:-1], errs[1:]))
    assert errs[-1] < 1e-3 * exact


def test_uniform_history_neumann_is_constant():
    H0 = 0.05
    disc = discretization((0, 1), (0, 1), 1, 1, 5, [0], MAT)
    d = solve_spd(assemble_damage(disc, MAT, {0: np.full((25, 4), H0)}, {}))
    assert np.allclose(d, 2 * MAT.l * H0 / (MAT.Gc + 2 * MAT.l * H0), rtol=1e-12)


def test_beta():
    assert compute_beta(MAT, 0.1, 10, 100) == pytest.approx(100 * 20 * 10 / 0.1)


def _cracked_system():
    # 4 x 3 mesh; kinked crack through the two left elements of the middle row,
    # the right two elements of that row carry a damage band
    cracks = CrackSet((Crack(1, (CrackPiece(4, [[0, 1.5], [1, 1.55]]), CrackPiece(5, [[1, 1.55], [2, 1.5]]))),), 2)
    disc = discretization((0, 4), (0, 3), 4, 3, 3, [6, 7], MAT, cracks)
    bcs = [
        DirichletBC("bottom", (0, 4, 0, 0), ux=lambda x, y, u: 0 * x, uy=lambda x, y, u: 0 * x),
        DirichletBC("top", (0, 4, 3, 3), ux=lambda x, y, u: 0 * x, uy=lambda x, y, u: u + 0 * x),
    ]
    damage = np.clip(1 - np.abs(disc.rm.coords[:, 1] - 1.5) / 0.2, 0, 1)
    opts = EquilibriumOptions(beta=compute_beta(MAT, 1.0, 3, 100))
    return disc, assemble_equilibrium(disc, MAT, damage, None, bcs, [], 1e-3, opts)


def test_equilibrium_symmetric_positive_definite():
    disc, sysm = _cracked_system()
    A = sysm.matrix.toarray()
    assert np.abs(A - A.T).max() <= 1e-10 * np.abs(A).max()
    free = np.setdiff1d(np.arange(A.shape[0]), sysm.fixed_idx)
    assert np.linalg.eigvalsh(A[np.ix_(free, free)]).min() > 0
    u = solve_spd(sysm)
    r = sysm.matrix @ u - sysm.rhs
    assert np.abs(r[free]).max() <= 1e-8 * np.abs(sysm.matrix @ u).max()
    assert disc.dofs.n_enr == 6  # nodes of the two cut elements


def test_dof_map_contiguous():
    disc, _ = _cracked_system()
    dm = disc.dofs
    used = list(dm.std_slot[dm.std_slot >= 0])
    for s in dm.enr_slot:
        used += list(s[s >= 0])
    used += list(dm.ref_slots(np.arange(dm.n_ref)))
    assert sorted(used) == list(range(dm.n_slots))


def test_solver_rejects_singular():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverError):
        solve_spd(LinearSystem(A, np.ones(2)))
    with pytest.raises(SolverError):
        solve_spd(LinearSystem(sp.csr_matrix(-np.eye(2)), np.ones(2)))
