"""Discrete equilibrium and damage systems.

The displacement space combines standard bilinear functions on Omega_xfem
nodes, Heaviside-enriched functions on the enriched nodes of every crack and
the refined bilinear functions of the auxiliary mesh covering Omega_tips.
The two sides are glued on the (cropped) interface with a symmetric Nitsche
formulation.  Damage unknowns live only on the refined mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .crack_geometry import CrackSet, Enrichment, blending_sign, element_cut_quadrature
from .material import Material, degradation_voigt
from .mesh import (
    GAUSS_2X2,
    BackgroundMesh,
    FaceTable,
    RefinedMesh,
    RefinedReference,
    build_refined_reference,
    face_reference_points,
    q4_shape,
)
from .partition import TIPS, XFEM, interface_faces


class SolverError(RuntimeError):
    """Factorization or residual check failed."""


# ---------------------------------------------------------------------------
# boundary conditions


@dataclass(frozen=True)
class DirichletBC:
    """Prescribed displacement components on the nodes inside ``box``.

    ``ux``/``uy`` are callables ``f(x, y, u)`` (vectorized over nodes, ``u``
    the load parameter) or ``None`` for a free component.
    """

    name: str
    box: tuple
    ux: Callable | None = None
    uy: Callable | None = None


@dataclass(frozen=True)
class TractionBC:
    """Traction ``(tx, ty)`` on the boundary faces whose end nodes lie in ``box``."""

    name: str
    box: tuple
    tx: Callable | None = None
    ty: Callable | None = None


def in_box(x: np.ndarray, box, tol: float) -> np.ndarray:
    x0, x1, y0, y1 = box
    x = np.atleast_2d(x)
    return (x[:, 0] >= x0 - tol) & (x[:, 0] <= x1 + tol) & (x[:, 1] >= y0 - tol) & (x[:, 1] <= y1 + tol)


# ---------------------------------------------------------------------------
# DOF numbering


@dataclass(frozen=True, eq=False)
class DofMap:
    """Slot numbering; slot ``s`` owns displacement DOFs ``2s`` and ``2s+1``.

    Slots are ordered: standard Omega_xfem nodes, then enriched nodes crack
    by crack, then every node of the refined mesh.
    """

    std_slot: np.ndarray
    enr_slot: tuple
    ref_offset: int
    n_ref: int

    @property
    def n_std(self) -> int:
        return int(np.count_nonzero(self.std_slot >= 0))

    @property
    def n_enr(self) -> int:
        return int(sum(np.count_nonzero(s >= 0) for s in self.enr_slot))

    @property
    def n_slots(self) -> int:
        return self.ref_offset + self.n_ref

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_slots

    def ref_slots(self, ids) -> np.ndarray:
        return self.ref_offset + np.asarray(ids, dtype=np.int64)


def number_dofs(labels, enr: Enrichment, rm: RefinedMesh, mesh: BackgroundMesh) -> DofMap:
    labels = np.asarray(labels)
    xf = np.nonzero(labels == XFEM)[0]
    std = np.unique(mesh.conn[xf]) if len(xf) else np.zeros(0, dtype=np.int64)
    std_slot = -np.ones(mesh.n_nodes, dtype=np.int64)
    std_slot[std] = np.arange(len(std))
    nxt = len(std)
    enr_slot = []
    for k, nodes in enumerate(enr.nodes):
        s = -np.ones(mesh.n_nodes, dtype=np.int64)
        nodes = np.asarray(nodes, dtype=np.int64)
        if len(nodes) and np.any(std_slot[nodes] < 0):
            raise ValueError(f"crack {k} enriches a node outside Omega_xfem")
        s[nodes] = nxt + np.arange(len(nodes))
        nxt += len(nodes)
        enr_slot.append(s)
    tips = np.nonzero(labels == TIPS)[0]
    if set(int(e) for e in tips) != set(rm.rows):
        raise ValueError("refined mesh does not match the tips subdomain")
    return DofMap(std_slot, tuple(enr_slot), nxt, rm.n_nodes)


def slot_dofs(slots) -> np.ndarray:
    s = np.asarray(slots, dtype=np.int64)
    return np.stack([2 * s, 2 * s + 1], axis=-1).reshape(*s.shape[:-1], -1)


# ---------------------------------------------------------------------------
# element kernels


def b_matrix(G: np.ndarray) -> np.ndarray:
    """Strain-displacement matrices from shape gradients ``(..., n, 2)`` -> ``(..., 3, 2n)``."""
    n = G.shape[-2]
    B = np.zeros(G.shape[:-2] + (3, 2 * n))
    B[..., 0, 0::2] = G[..., 0]
    B[..., 1, 1::2] = G[..., 1]
    B[..., 2, 0::2] = G[..., 1]
    B[..., 2, 1::2] = G[..., 0]
    return B


@dataclass(frozen=True, eq=False)
class ElementKernel:
    """Per-subelement quadrature data of one element.

    Leading dimension ``S`` is 1 for affine elements (all subelements alike)
    and ``m*m`` otherwise.
    """

    w: np.ndarray  # (S, 4)
    N: np.ndarray  # (4, 4) qp x node
    G: np.ndarray  # (S, 4, 4, 2)
    B: np.ndarray  # (S, 4, 3, 8)
    Kq: np.ndarray  # (S, 4, 8, 8) w B^T D B per quadrature point
    Mq: np.ndarray  # (S, 4, 4, 4) w N N^T per quadrature point
    L: np.ndarray  # (S, 4, 4) sum_q w G G^T
    Nw: np.ndarray  # (S, 4, 4) w N per quadrature point


class Kernels:
    """Cache of element kernels for a given refined reference and material."""

    def __init__(self, mesh: BackgroundMesh, ref: RefinedReference, D: np.ndarray):
        self.mesh = mesh
        self.ref = ref
        self.D = D
        self._cache: dict = {}
        self._by_elem: dict = {}

    def get(self, e: int) -> ElementKernel:
        k = self._by_elem.get(e)
        if k is not None:
            return k
        c = self.mesh.corners(e)
        affine = np.allclose(c[0] - c[1] + c[2] - c[3], 0.0, atol=1e-12 * self.mesh.h)
        if affine:
            J = self.mesh.jacobian(e, np.zeros(2))
            key = np.round(J / self.mesh.h, 12).tobytes()
            k = self._cache.get(key)
            if k is None:
                k = self._build(np.broadcast_to(J, (1, 4, 2, 2)))
                self._cache[key] = k
        else:
            J = self.mesh.jacobian(e, self.ref.qp_xi.reshape(-1, 2)).reshape(-1, 4, 2, 2)
            k = self._build(J)
        self._by_elem[e] = k
        return k

    def _build(self, J: np.ndarray) -> ElementKernel:
        ref = self.ref
        det = np.linalg.det(J)
        if np.any(det <= 0):
            raise ValueError("non-positive Jacobian")
        Jinv = np.linalg.inv(J)
        S = J.shape[0]
        w = det * (1.0 / (ref.m * ref.m))
        G = np.einsum("qak,sqkj->sqaj", ref.sub_dN, Jinv)
        B = b_matrix(G)
        Kq = w[..., None, None] * np.einsum("sqia,ij,sqjb->sqab", B, self.D, B)
        N = ref.sub_N
        Mq = w[..., None, None] * np.einsum("qa,qb->qab", N, N)[None]
        L = np.einsum("sq,sqak,sqbk->sab", w, G, G)
        Nw = w[..., None] * N[None]
        return ElementKernel(w, N, G, B, Kq, np.broadcast_to(Mq, (S, 4, 4, 4)), L, Nw)


# ---------------------------------------------------------------------------
# discretization context


@dataclass(frozen=True)
class NitscheParams:
    alpha_E: float = 100.0
    beta: float = 0.0


def compute_beta(mat: Material, h: float, m: int, alpha_E: float) -> float:
    """Nitsche stabilization ``alpha_E * E * m / h``."""
    return alpha_E * mat.E * m / h


@dataclass(eq=False)
class Discretization:
    """Everything needed to assemble one staggered iteration."""

    mesh: BackgroundMesh
    faces: FaceTable
    ref: RefinedReference
    rm: RefinedMesh
    labels: np.ndarray
    cracks: CrackSet
    enr: Enrichment
    dofs: DofMap
    tips_kernels: Kernels
    std_kernels: Kernels
    _xfem_layout: dict = field(default_factory=dict)

    @property
    def tips_elements(self) -> list[int]:
        return sorted(self.rm.rows)

    # -- xfem side -------------------------------------------------------
    def xfem_layout(self, e: int):
        """Slots of element ``e`` and their (local node, crack or -1)."""
        lay = self._xfem_layout.get(e)
        if lay is not None:
            return lay
        row = self.mesh.conn[e]
        slots, node_loc, crack = [], [], []
        for a, n in enumerate(row):
            slots.append(int(self.dofs.std_slot[n]))
            node_loc.append(a)
            crack.append(-1)
        for k, es in enumerate(self.dofs.enr_slot):
            for a, n in enumerate(row):
                if es[n] >= 0:
                    slots.append(int(es[n]))
                    node_loc.append(a)
                    crack.append(k)
        lay = (np.array(slots), np.array(node_loc), np.array(crack))
        self._xfem_layout[e] = lay
        return lay

    def is_enriched_element(self, e: int) -> bool:
        return bool(np.any(self.xfem_layout(e)[2] >= 0))

    def heaviside(self, e: int, x: np.ndarray, interior: bool = False) -> dict:
        """Heaviside value of every crack enriching element ``e`` at points ``x``.

        Points on the element boundary are pushed slightly towards the
        centroid so the region test is well defined.
        """
        _, _, crack = self.xfem_layout(e)
        ks = sorted(set(int(k) for k in crack if k >= 0))
        out = {}
        if not ks:
            return out
        corners = self.mesh.corners(e)
        xin = x if interior else x + 1e-9 * (self.mesh.centroids[e] - x)
        cut = dict()
        for k, p in self.enr.cut.get(e, []):
            cut.setdefault(k, p)
        for k in ks:
            if k in cut:
                out[k] = cut[k].heaviside(corners, xin)
            else:
                out[k] = np.full(len(x), blending_sign(self.enr, k, e, self.mesh, self.cracks))
        return out

    def xfem_basis(self, e: int, xi: np.ndarray, H: dict):
        """Slots, values ``(n, ns)`` and gradients ``(n, ns, 2)`` of the XFEM functions of ``e``."""
        slots, node_loc, crack = self.xfem_layout(e)
        N, dN = q4_shape(xi)
        J = self.mesh.jacobian(e, xi)
        G = np.einsum("pak,pkj->paj", dN, np.linalg.inv(J))
        Nv = N[:, node_loc].copy()
        Gv = G[:, node_loc, :].copy()
        for i, k in enumerate(crack):
            if k >= 0:
                Nv[:, i] *= H[int(k)]
                Gv[:, i, :] *= H[int(k)][:, None]
        return slots, Nv, Gv

    # -- tips side -------------------------------------------------------
    def tips_basis(self, e: int, xi: np.ndarray):
        """Local slots, values and gradients of the refined functions at ``xi``."""
        ids, N, dN, sub = self.ref.basis_at(xi)
        J = self.mesh.jacobian(e, xi)
        G = np.einsum("pak,pkj->paj", dN, np.linalg.inv(J))
        gids = self.rm.rows[e][ids]
        uniq, inv = np.unique(gids, return_inverse=True)
        inv = inv.reshape(gids.shape)
        n = len(xi)
        Nv = np.zeros((n, len(uniq)))
        Gv = np.zeros((n, len(uniq), 2))
        for a in range(4):
            np.add.at(Nv, (np.arange(n), inv[:, a]), N[:, a])
            np.add.at(Gv, (np.arange(n), inv[:, a]), G[:, a, :])
        return self.dofs.ref_slots(uniq), Nv, Gv, sub


def build_discretization(mesh, faces, ref, rm, labels, cracks, enr, tips_kernels, std_kernels) -> Discretization:
    dofs = number_dofs(labels, enr, rm, mesh)
    return Discretization(mesh, faces, ref, rm, np.asarray(labels), cracks, enr, dofs, tips_kernels, std_kernels)


def make_kernels(mesh: BackgroundMesh, ref: RefinedReference, mat: Material) -> tuple[Kernels, Kernels]:
    return Kernels(mesh, ref, mat.D), Kernels(mesh, build_refined_reference(1, 1), mat.D)


# ---------------------------------------------------------------------------
# equilibrium


@dataclass(eq=False)
class LinearSystem:
    """Sparse symmetric system with Dirichlet data (before elimination)."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    fixed_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fixed_val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    groups: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EquilibriumOptions:
    beta: float
    k_res: float = 1e-8
    crop: bool = True
    d_crop: float = 0.9


class _Triplets:
    def __init__(self):
        self.r, self.c, self.v = [], [], []

    def add_blocks(self, dofs: np.ndarray, Ke: np.ndarray):
        """``dofs`` (nb, n), ``Ke`` (nb, n, n)."""
        n = dofs.shape[1]
        self.r.append(np.repeat(dofs, n, axis=1).ravel())
        self.c.append(np.tile(dofs, (1, n)).ravel())
        self.v.append(Ke.ravel())

    def matrix(self, n: int) -> sp.csr_matrix:
        if not self.r:
            return sp.csr_matrix((n, n))
        r = np.concatenate(self.r)
        c = np.concatenate(self.c)
        v = np.concatenate(self.v)
        return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def tips_degradation(disc: Discretization, e: int, damage: np.ndarray, tension) -> np.ndarray:
    """Degradation at the refined quadrature points of element ``e``, ``(m*m, 4)``."""
    ref = disc.ref
    dq = damage[disc.rm.rows[e][ref.sub_conn]] @ ref.sub_N.T
    t = tension.get(e) if tension is not None else None
    if t is None:
        t = np.ones_like(dq, dtype=bool)
    return degradation_voigt(dq, np.where(t, 1.0, 0.0), np.where(t, 0.0, 1.0))


def _qp_subindex(xi: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    t = (xi + 1.0) * 0.5 * m
    ij = np.clip(np.floor(t).astype(np.int64), 0, m - 1)
    loc = t - ij
    code = (loc[:, 0] > 0.5).astype(int) + 2 * (loc[:, 1] > 0.5).astype(int)
    return ij[:, 1] * m + ij[:, 0], np.array([0, 1, 3, 2])[code]


def assemble_equilibrium(
    disc: Discretization,
    mat: Material,
    damage: np.ndarray,
    tension: dict | None,
    dirichlet,
    tractions,
    load: float,
    opts: EquilibriumOptions,
) -> LinearSystem:
    """Nitsche-coupled equilibrium system.

    ``damage`` holds nodal values on the refined mesh; ``tension`` maps tips
    elements to ``(m*m, 4)`` booleans selecting the degraded branch of the
    hybrid law (missing entries mean tension).
    """
    mesh, ref, dofs = disc.mesh, disc.ref, disc.dofs
    n = dofs.n_dofs
    D = mat.D
    T = _Triplets()

    # Omega_tips: refined subelements with degraded stiffness
    for e in disc.tips_elements:
        ker = disc.tips_kernels.get(e)
        g = tips_degradation(disc, e, damage, tension) * (1.0 - opts.k_res) + opts.k_res
        Ke = np.einsum("sq,sqab->sab", g, np.broadcast_to(ker.Kq, (g.shape[0],) + ker.Kq.shape[1:]))
        ids = disc.rm.rows[e][ref.sub_conn]
        T.add_blocks(slot_dofs(dofs.ref_slots(ids)), Ke)

    # Omega_xfem: plain elements, then enriched ones
    plain, enriched = [], []
    for e in np.nonzero(disc.labels == XFEM)[0]:
        (enriched if disc.is_enriched_element(int(e)) else plain).append(int(e))
    if plain:
        Ke = np.stack([disc.std_kernels.get(e).Kq[0].sum(axis=0) for e in plain])
        sl = dofs.std_slot[mesh.conn[plain]]
        T.add_blocks(slot_dofs(sl), Ke)
    for e in enriched:
        slots, Ke = _enriched_element_matrix(disc, e, D)
        T.add_blocks(slot_dofs(slots)[None], Ke[None])

    f = np.zeros(n)
    # interface coupling
    for rows, Kf in _nitsche_blocks(disc, mat, damage, tension, opts):
        T.add_blocks(rows[None], Kf[None])
    K = T.matrix(n)

    # Neumann data
    for tb in tractions:
        _add_traction(disc, tb, load, f)

    fixed_idx, fixed_val, groups = _dirichlet(disc, dirichlet, load)
    return LinearSystem(K, f, fixed_idx, fixed_val, groups)


def _enriched_element_matrix(disc: Discretization, e: int, D: np.ndarray):
    mesh = disc.mesh
    pieces = [p for _, p in disc.enr.cut.get(e, [])]
    if pieces:
        x, w, Hc = element_cut_quadrature(mesh.corners(e), pieces)
        xi = mesh.inverse_map(e, x)
        H = {}
        ks = [k for k, _ in disc.enr.cut[e]]
        for j, k in enumerate(ks):
            H.setdefault(k, Hc[:, j])
        for k, v in disc.heaviside(e, x, interior=True).items():
            H.setdefault(k, v)
    else:
        xi = GAUSS_2X2
        x = mesh.map(e, xi)
        w = np.linalg.det(mesh.jacobian(e, xi))
        H = disc.heaviside(e, x, interior=True)
    slots, _, G = disc.xfem_basis(e, xi, H)
    B = b_matrix(G)
    Ke = np.einsum("p,pia,ij,pjb->ab", w, B, D, B)
    return slots, Ke


def face_geometry(mesh: BackgroundMesh, e: int, j: int, s: np.ndarray):
    """Physical points, outward unit normal and length of local face ``j``."""
    c = mesh.corners(e)
    a, b = c[j], c[(j + 1) % 4]
    d = b - a
    L = float(np.linalg.norm(d))
    nrm = np.array([d[1], -d[0]]) / L
    return a + s[:, None] * d, nrm, L


def _face_sides(disc: Discretization, f: int):
    faces, lab = disc.faces, disc.labels
    o, nb = int(faces.owner[f]), int(faces.neighbor[f])
    t, x = (o, nb) if lab[o] == TIPS else (nb, o)
    jt, jx = faces.local_of(f, t), faces.local_of(f, x)
    return t, jt, x, jx


def _stress_operator(G: np.ndarray, D: np.ndarray, nrm: np.ndarray, scale) -> np.ndarray:
    """Traction ``sigma n`` as a linear map of the local DOFs, ``(p, 2, 2n)``."""
    B = b_matrix(G)
    S = np.einsum("ij,pjb->pib", D, B) * np.asarray(scale)[:, None, None]
    Nm = np.array([[nrm[0], 0.0, nrm[1]], [0.0, nrm[1], nrm[0]]])
    return np.einsum("ki,pib->pkb", Nm, S)


def _value_operator(N: np.ndarray) -> np.ndarray:
    p, ns = N.shape
    V = np.zeros((p, 2, 2 * ns))
    V[:, 0, 0::2] = N
    V[:, 1, 1::2] = N
    return V


def interface_face_data(disc: Discretization, f: int, damage: np.ndarray, tension, k_res: float):
    """Value and traction operators of both sides on face ``f``.

    Returns ``(dofs, jump (p,2,nd), traction (p,2,nd), weights (p,), d (p,))``
    with the jump taken tips minus xfem and the traction the mean of both
    sides' stress against the tips outward normal.
    """
    mesh, ref = disc.mesh, disc.ref
    t, jt, x, jx = _face_sides(disc, f)
    s = ref.face_s
    xi_t = face_reference_points(jt, s)
    pts, nrm, L = face_geometry(mesh, t, jt, s)
    w = ref.face_w * L
    same = mesh.conn[x][jx] == mesh.conn[t][jt]
    xi_x = face_reference_points(jx, s if same else 1.0 - s)

    ts, tN, tG, _ = disc.tips_basis(t, xi_t)
    d = tN @ damage[ts - disc.dofs.ref_offset]
    tens = tension.get(t) if tension is not None else None
    if tens is None:
        flag = np.ones(len(s), dtype=bool)
    else:
        subi, q = _qp_subindex(xi_t, ref.m)
        flag = tens[subi, q]
    g = degradation_voigt(d, np.where(flag, 1.0, 0.0), np.where(flag, 0.0, 1.0)) * (1 - k_res) + k_res

    H = disc.heaviside(x, pts)
    xs, xN, xG = disc.xfem_basis(x, xi_x, H)
    D = disc_D(disc)
    Vt, Vx = _value_operator(tN), _value_operator(xN)
    St = _stress_operator(tG, D, nrm, g)
    Sx = _stress_operator(xG, D, nrm, np.ones(len(s)))
    slots = np.concatenate([ts, xs])
    jump = np.concatenate([Vt, -Vx], axis=2)
    trac = 0.5 * np.concatenate([St, Sx], axis=2)
    return slot_dofs(slots[None])[0], jump, trac, w, d


def disc_D(disc: Discretization) -> np.ndarray:
    return disc.tips_kernels.D


def _nitsche_blocks(disc, mat, damage, tension, opts: EquilibriumOptions):
    for f in interface_faces(disc.labels, disc.faces):
        rows, J, Tr, w, d = interface_face_data(disc, int(f), damage, tension, opts.k_res)
        if opts.crop:
            w = np.where(d < opts.d_crop, w, 0.0)
        if not np.any(w > 0):
            continue
        K = np.einsum("p,pka,pkb->ab", w, J, J) * opts.beta
        C = np.einsum("p,pka,pkb->ab", w, J, Tr)
        K -= C + C.T
        yield rows, K


def _dirichlet(disc: Discretization, bcs, load: float):
    mesh, rm, dofs = disc.mesh, disc.rm, disc.dofs
    tol = 1e-9 * mesh.h
    std_nodes = np.nonzero(dofs.std_slot >= 0)[0]
    fixed: dict[int, float] = {}
    groups: dict[str, list] = {}
    enriched = set()
    for s in dofs.enr_slot:
        enriched.update(np.nonzero(s >= 0)[0].tolist())
    for bc in bcs:
        sel_std = std_nodes[in_box(mesh.nodes[std_nodes], bc.box, tol)] if len(std_nodes) else std_nodes
        bad = [int(nd) for nd in sel_std if int(nd) in enriched]
        if bad:
            raise ValueError(f"Dirichlet condition '{bc.name}' acts on enriched nodes {bad}")
        sel_ref = np.nonzero(in_box(rm.coords, bc.box, tol))[0] if rm.n_nodes else np.zeros(0, dtype=np.int64)
        xs = np.vstack([mesh.nodes[sel_std], rm.coords[sel_ref]]).reshape(-1, 2)
        slots = np.concatenate([dofs.std_slot[sel_std], dofs.ref_slots(sel_ref)])
        g = groups.setdefault(bc.name, [])
        for comp, fn in ((0, bc.ux), (1, bc.uy)):
            if fn is None:
                continue
            vals = np.broadcast_to(np.asarray(fn(xs[:, 0], xs[:, 1], load), dtype=float), (len(slots),))
            for sl, v in zip(slots, vals):
                fixed[int(2 * sl + comp)] = float(v)
                g.append(int(2 * sl + comp))
    idx = np.array(sorted(fixed), dtype=np.int64)
    val = np.array([fixed[i] for i in idx])
    return idx, val, {k: np.array(sorted(set(v)), dtype=np.int64) for k, v in groups.items()}


def _add_traction(disc: Discretization, tb: TractionBC, load: float, f: np.ndarray):
    mesh, faces, ref = disc.mesh, disc.faces, disc.ref
    tol = 1e-9 * mesh.h
    for fid in faces.boundary:
        nodes = faces.nodes[fid]
        if not np.all(in_box(mesh.nodes[nodes], tb.box, tol)):
            continue
        e, j = int(faces.owner[fid]), int(faces.owner_local[fid])
        s = ref.face_s
        xi = face_reference_points(j, s)
        pts, _, L = face_geometry(mesh, e, j, s)
        w = ref.face_w * L
        if disc.labels[e] == TIPS:
            slots, N, _, _ = disc.tips_basis(e, xi)
        else:
            slots, N, _ = disc.xfem_basis(e, xi, disc.heaviside(e, pts))
        for comp, fn in ((0, tb.tx), (1, tb.ty)):
            if fn is None:
                continue
            tv = np.broadcast_to(np.asarray(fn(pts[:, 0], pts[:, 1], load), dtype=float), (len(s),))
            np.add.at(f, 2 * slots + comp, (w * tv) @ N)


# ---------------------------------------------------------------------------
# damage


def assemble_damage(disc: Discretization, mat: Material, history: dict, gamma_Dd: dict) -> LinearSystem:
    """Screened Poisson system for the damage on the refined mesh.

    ``history`` maps tips elements to ``(m*m, 4)`` arrays; ``gamma_Dd`` maps
    refined node keys to prescribed damage values.
    """
    rm, ref = disc.rm, disc.ref
    n = rm.n_nodes
    T = _Triplets()
    f = np.zeros(n)
    Gc, l = mat.Gc, mat.l
    for e in disc.tips_elements:
        ker = disc.tips_kernels.get(e)
        H = history[e]
        c = Gc / l + 2.0 * H  # (S, 4)
        Mq = np.broadcast_to(ker.Mq, (H.shape[0], 4, 4, 4))
        Ke = np.einsum("sq,sqab->sab", c, Mq) + Gc * l * ker.L
        fe = np.einsum("sq,sqa->sa", 2.0 * H, np.broadcast_to(ker.Nw, (H.shape[0], 4, 4)))
        ids = rm.rows[e][ref.sub_conn]
        T.add_blocks(ids, Ke)
        np.add.at(f, ids.ravel(), fe.ravel())
    K = T.matrix(n)
    idx = rm.index()
    fixed = {}
    for k, v in gamma_Dd.items():
        i = idx.get(k)
        if i is None:
            raise ValueError(f"damage Dirichlet node {k} is not in the refined mesh")
        fixed[i] = v
    fi = np.array(sorted(fixed), dtype=np.int64)
    return LinearSystem(K, f, fi, np.array([fixed[i] for i in fi]))


# ---------------------------------------------------------------------------
# solving and post-processing


def solve_spd(system: LinearSystem, context: str = "") -> np.ndarray:
    """Solve with Dirichlet elimination by a symmetric sparse factorization.

    Raises :class:`SolverError` if the reduced matrix is not positive definite
    or the residual exceeds ``1e-10 ||b||``.
    """
    A = sp.csr_matrix(system.matrix)
    n = A.shape[0]
    x = np.zeros(n)
    x[system.fixed_idx] = system.fixed_val
    free = np.ones(n, dtype=bool)
    free[system.fixed_idx] = False
    fi = np.nonzero(free)[0]
    if len(fi) == 0:
        return x
    Aff = A[fi][:, fi].tocsc()
    b = system.rhs[fi] - A[fi] @ x
    where = f" ({context})" if context else ""
    diag = Aff.diagonal()
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise SolverError(f"matrix is not positive definite{where}")
    try:
        lu = splu(
            Aff,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as exc:
        raise SolverError(f"factorization failed{where}: {exc}") from exc
    # symmetric pivoting: U's diagonal is the D of an LDL^T factorization
    piv = lu.U.diagonal()
    if np.any(~np.isfinite(piv)) or np.any(piv <= 1e-14 * np.max(np.abs(diag))):
        raise SolverError(f"matrix is singular or not positive definite{where}")
    y = lu.solve(b)
    bn = np.linalg.norm(b)
    for _ in range(4):
        r = b - Aff @ y
        if np.linalg.norm(r) <= 1e-10 * bn:
            break
        y += lu.solve(r)
    r = b - Aff @ y
    if not np.all(np.isfinite(y)) or np.linalg.norm(r) > 1e-10 * bn:
        raise SolverError(f"residual {np.linalg.norm(r):.3e} above tolerance{where}")
    x[fi] = y
    return x


def reactions(system: LinearSystem, u: np.ndarray) -> dict:
    """Total reaction force of every Dirichlet group, ``(F_x, F_y)``."""
    r = system.matrix @ u - system.rhs
    out = {}
    for name, idx in system.groups.items():
        out[name] = (float(r[idx[idx % 2 == 0]].sum()), float(r[idx[idx % 2 == 1]].sum()))
    return out


def tips_strains(disc: Discretization, u: np.ndarray, e: int) -> np.ndarray:
    """Voigt strains at the refined quadrature points of ``e``, ``(m*m, 4, 3)``."""
    ker = disc.tips_kernels.get(e)
    ids = disc.rm.rows[e][disc.ref.sub_conn]
    ue = u[slot_dofs(disc.dofs.ref_slots(ids))]  # (S, 8)
    return np.einsum("sqib,sb->sqi", np.broadcast_to(ker.B, (ue.shape[0],) + ker.B.shape[1:]), ue)


def refined_displacement(disc: Discretization, u: np.ndarray) -> np.ndarray:
    """Displacement of every refined node, ``(n_ref, 2)``."""
    s = disc.dofs.ref_slots(np.arange(disc.rm.n_nodes))
    return np.column_stack([u[2 * s], u[2 * s + 1]])


def xfem_nodal_displacement(disc: Discretization, u: np.ndarray) -> dict:
    """Displacement at each Omega_xfem node, enrichment included.

    The Heaviside value at a node is its side label, so a node of a cut element
    reports the displacement of the side it lies on.
    """
    dofs = disc.dofs
    out = {}
    for nd in np.nonzero(dofs.std_slot >= 0)[0]:
        s = dofs.std_slot[nd]
        v = np.array([u[2 * s], u[2 * s + 1]])
        for k, es in enumerate(dofs.enr_slot):
            if es[nd] >= 0:
                v = v + disc.enr.labels[k][int(nd)] * np.array([u[2 * es[nd]], u[2 * es[nd] + 1]])
        out[int(nd)] = v
    return out


def interface_jump(disc: Discretization, u: np.ndarray, damage: np.ndarray, crop: bool = True, d_crop: float = 0.9) -> float:
    """``int |u_t - u_x| ds`` over the (cropped) interface."""
    total = 0.0
    for f in interface_faces(disc.labels, disc.faces):
        rows, J, _, w, d = interface_face_data(disc, int(f), damage, None, 0.0)
        if crop:
            w = np.where(d < d_crop, w, 0.0)
        jv = np.einsum("pkb,b->pk", J, u[rows])
        total += float(np.sum(w * np.linalg.norm(jv, axis=1)))
    return total
