"""Load stepping, the staggered scheme and partition updates.

Each staggered iteration solves equilibrium, updates the history field,
solves the damage equation and then updates the partition: tip elements are
identified, elements far from every tip are derefined (their damage band is
replaced by a sharp crack), and interface elements reached by the damage
near a tip are refined.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import (
    EquilibriumOptions,
    assemble_damage,
    assemble_equilibrium,
    build_discretization,
    compute_beta,
    make_kernels,
    reactions,
    solve_spd,
    tips_strains,
)
from .config import ScenarioConfig, boundary_conditions
from .crack_geometry import (
    Crack,
    CrackPiece,
    CrackSet,
    append_segment,
    cross2,
    build_enrichment,
    merge_cracks,
    remove_element_pieces,
    snap_off_vertices,
)
from .material import split_energy_voigt
from .mesh import (
    build_background_mesh,
    build_face_table,
    build_refined_reference,
    remove_box,
    RefinedMesh,
    update_refined_mesh,
)
from .partition import (
    TIPS,
    Criteria,
    Partition,
    apply_refine_criterion,
    apply_switch_criterion,
    damage_dirichlet_boundary,
    identify_tip_elements,
    interface_faces,
    interface_node_damage,
)

log = logging.getLogger(__name__)


@dataclass(eq=False)
class FieldState:
    """Fields and geometry carried between staggered iterations."""

    partition: Partition
    cracks: CrackSet
    rm: RefinedMesh
    damage: np.ndarray
    history: dict
    tension: dict
    u: np.ndarray | None = None
    disc: object = None
    system: object = None
    step: int = 0
    load: float = 0.0
    events: list = field(default_factory=list)
    history_start: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StepRecord:
    step: int
    u_D: float
    F_x: float
    F_y: float
    nDOF: int
    iterations: int
    tips: int
    cracks: int
    converged: bool = True


@dataclass(frozen=True)
class LoadProgram:
    """Load parameter ``u0 + n * du`` at step ``n``."""

    du: float
    n_steps: int
    u0: float = 0.0

    def level(self, n: int) -> float:
        if n < 0:
            raise ValueError("step index must be non-negative")
        return self.u0 + n * self.du


def convergence_check(d_new, d_old, tol: float, common=None) -> bool:
    """``||d_new - d_old||_2 <= tol`` on the common nodes (all if ``common`` is None)."""
    diff = np.asarray(d_new) - np.asarray(d_old)
    if common is not None:
        diff = diff[np.asarray(common)]
    return float(np.linalg.norm(diff)) <= tol


# ---------------------------------------------------------------------------
# diffuse to sharp


def _loop_geometry(mesh, ref, e):
    pts = mesh.map(e, ref.lattice[ref.boundary_loop])
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return pts, s


def _loop_point(pts, s, arc):
    total = s[-1]
    arc = arc % total
    i = int(np.searchsorted(s, arc, side="right") - 1)
    i = min(max(i, 0), len(pts) - 1)
    t = (arc - s[i]) / (s[i + 1] - s[i])
    return pts[i] + t * (pts[(i + 1) % len(pts)] - pts[i])


def _arc_of(pts, s, x):
    a = pts
    b = np.roll(pts, -1, axis=0)
    d = b - a
    t = np.clip(np.einsum("ij,ij->i", x - a, d) / np.einsum("ij,ij->i", d, d), 0, 1)
    dist = np.linalg.norm(a + t[:, None] * d - x, axis=1)
    i = int(np.argmin(dist))
    return s[i] + t[i] * (s[i + 1] - s[i]), float(dist[i])


def band_runs(mesh, ref, e, lattice_damage, threshold):
    """Runs of the element boundary where ``d > threshold`` as ``(start_arc, end_arc)``.

    Arcs are measured counter-clockwise from corner 0.  Run ends are the
    threshold crossings interpolated linearly between the last damaged and
    the first undamaged boundary lattice node, so they move continuously with
    the damage field.  A run wrapping past corner 0 has ``end_arc >
    perimeter``.
    """
    pts, s = _loop_geometry(mesh, ref, e)
    vals = np.asarray(lattice_damage)[ref.boundary_loop]
    hot = vals > threshold
    n = len(hot)
    if hot.all():
        return None, pts, s
    if not hot.any():
        return [], pts, s
    seg = np.diff(s)
    perim = s[-1]
    start = int(np.argmin(hot))  # a cold node
    runs = []
    i = 0
    while i < n:
        j = (start + i) % n
        if hot[j]:
            k = i
            while k + 1 < n and hot[(start + k + 1) % n]:
                k += 1
            a = (start + i) % n
            b = (start + k) % n
            pa, nb = (a - 1) % n, (b + 1) % n
            sa = s[a] - seg[pa] * (vals[a] - threshold) / (vals[a] - vals[pa])
            sb = s[b] + seg[b] * (vals[b] - threshold) / (vals[b] - vals[nb])
            if b < a:
                sb += perim
            if sa < 0:
                sa, sb = sa + perim, sb + perim
            runs.append((sa, sb))
            i = k + 1
        else:
            i += 1
    return runs, pts, s


def boundary_intersections(mesh, ref, e, lattice_damage, crit: Criteria, cracks: CrackSet, faces):
    """Points where the sharp crack must cross the boundary of element ``e``.

    Existing crack ends lying on a face shared with a neighbor are reused
    exactly; every other run of boundary nodes with ``d > d_extract``
    contributes its midpoint, or the vertex it contains when that vertex lies
    on the domain boundary.  Returns ``(points, matches)`` sorted along the
    boundary, ``matches[i]`` being ``(crack id, 'start'|'end')`` or None, or
    ``None`` if the whole boundary is damaged.
    """
    runs, pts, s = band_runs(mesh, ref, e, lattice_damage, crit.d_extract)
    if runs is None:
        return None
    perim = s[-1]
    spacing = perim / len(ref.boundary_loop)
    nbrs = {faces.other(int(f), e)[0] for f in faces.elem_faces[e]} - {-1}
    found = []
    for cid, at, x, el in cracks.ends():
        if el not in nbrs:
            continue
        arc, dist = _arc_of(pts, s, x)
        if dist <= 1e-9 * mesh.h:
            found.append((arc, np.array(x, dtype=float), (cid, at)))
    on_boundary = set(faces.nodes[faces.boundary].ravel().tolist())
    corners = [
        (_arc_of(pts, s, mesh.nodes[nd])[0], np.array(mesh.nodes[nd], dtype=float))
        for nd in mesh.conn[e]
        if int(nd) in on_boundary
    ]
    for a, b in runs:
        covered = False
        for arc, _, _ in found:
            for shift in (0.0, perim):
                if a - spacing - 1e-12 <= arc + shift <= b + spacing + 1e-12:
                    covered = True
        if covered:
            continue
        hit = [(arc, c) for arc, c in corners if a <= arc <= b or a <= arc + perim <= b]
        if hit:
            # the band reaches the domain boundary at a vertex: end the crack there
            arc, x = hit[0]
            found.append((arc, x, None))
            continue
        mid = 0.5 * (a + b)
        x = _loop_point(pts, s, mid)
        x = snap_off_vertices(mesh, e, x, mesh.h)
        found.append((mid % perim, x, None))
    found.sort(key=lambda t: t[0])
    return [f[1] for f in found], [f[2] for f in found]


def _grazes(mesh, x, match, cracks: CrackSet, tol=0.1) -> bool:
    """Whether a lone boundary intersection is already carried by a sharp crack."""
    if match is not None:
        return True
    for c in cracks.cracks:
        P = c.polyline()
        if len(P) >= 2 and np.min(_point_segment_distance_all(x, P)) <= tol * mesh.h:
            return True
    return False


def _point_segment_distance_all(x, P):
    a, b = P[:-1], P[1:]
    d = b - a
    t = np.clip(np.einsum("ij,ij->i", x - a, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
    return np.linalg.norm(a + t[:, None] * d - x, axis=1)


def _straightness(j, p, q):
    a, b = p - j, q - j
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def _add_piece(cracks: CrackSet, piece: CrackPiece, match, h) -> tuple[CrackSet, int]:
    """Attach ``piece`` to the crack end ``match`` (at ``piece.start`` side) or start a crack."""
    if match is None:
        cracks, c = cracks.new_crack([piece])
        return cracks, c.id
    cid, at = match
    c = cracks.by_id(cid)
    c = append_segment(c, piece, h, at=at)
    return cracks.with_crack(c), cid


def _join_at(cracks: CrackSet, cid: int, x, match, h) -> CrackSet:
    """Merge crack ``cid`` (which has an end at ``x``) with the crack end ``match``."""
    if match is None or match[0] == cid:
        return cracks
    a = cracks.by_id(cid)
    a_at = "end" if np.linalg.norm(a.pieces[-1].end - x) <= 1e-10 * h else "start"
    b = cracks.by_id(match[0])
    merged = merge_cracks(a, a_at, b, match[1], h)
    return cracks.without(b.id).with_crack(merged)


def transition_to_sharp(mesh, ref, faces, e: int, lattice_damage, crit: Criteria, cracks: CrackSet):
    """Replace the damage band of element ``e`` by sharp crack pieces.

    Returns ``(cracks, status)`` with status ``'none'`` (no band crosses the
    element), ``'sharp'`` (pieces added) or ``'deferred'`` (band geometry not
    representable; the element must stay refined).
    """
    h = mesh.h
    res = boundary_intersections(mesh, ref, e, lattice_damage, crit, cracks, faces)
    if res is None:
        return cracks, "deferred"
    pts, matches = res
    n = len(pts)
    if n == 0:
        return cracks, "none"
    if n == 1 and _grazes(mesh, pts[0], matches[0], cracks):
        return cracks, "none"
    if n == 1 or n >= 4:
        return cracks, "deferred"
    if n == 2:
        p, q = pts
        mp, mq = matches
        if mp is None and mq is not None:
            p, q, mp, mq = q, p, mq, mp
        piece = CrackPiece(e, [p, q])
        cracks, cid = _add_piece(cracks, piece, mp, h)
        return _join_at(cracks, cid, q, mq, h), "sharp"

    # three intersections: a Y-shaped piece through the centroid of the points
    P = np.array(pts)
    J = P.mean(axis=0)
    area = 0.5 * abs(cross2(P[1] - P[0], P[2] - P[0]))
    if area < 1e-6 * h * h:
        return cracks, "deferred"
    matched = [i for i in range(3) if matches[i] is not None]
    pairs = [(0, 1), (0, 2), (1, 2)]
    if len(matched) == 1:
        pairs = [pr for pr in pairs if matched[0] in pr]
    elif len(matched) == 2:
        pairs = [tuple(matched)]
    a, b = min(pairs, key=lambda pr: _straightness(J, P[pr[0]], P[pr[1]]))
    c = ({0, 1, 2} - {a, b}).pop()
    if matches[a] is None and matches[b] is not None:
        a, b = b, a
    parent = CrackPiece(e, [P[a], J, P[b]])
    cracks, pid = _add_piece(cracks, parent, matches[a], h)
    cracks = _join_at(cracks, pid, P[b], matches[b], h)
    stored = [pc for pc in cracks.by_id(pid).pieces if pc.element == e][0]
    corners = mesh.corners(e)
    side = int(stored.heaviside(corners, 0.5 * (J + P[c]))[0])
    if matches[c] is None:
        child = CrackPiece(e, [J, P[c]], support=stored.points, support_sign=side)
        cracks, _ = cracks.new_crack([child])
    else:
        cid, at = matches[c]
        pts_c = [P[c], J] if at == "end" else [J, P[c]]
        child = CrackPiece(e, pts_c, support=stored.points, support_sign=side)
        cr = cracks.by_id(cid)
        cracks = cracks.with_crack(append_segment(cr, child, h, at=at))
    return cracks, "sharp"


# ---------------------------------------------------------------------------
# simulation


def _segment_hits_element(corners, p, q) -> bool:
    """Whether segment ``pq`` meets the convex element (Cyrus-Beck clipping)."""
    d = q - p
    t0, t1 = 0.0, 1.0
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        e = b - a
        nrm = np.array([e[1], -e[0]])  # outward
        num = np.dot(nrm, a - p)
        den = np.dot(nrm, d)
        if abs(den) < 1e-300:
            if num < 0:
                return False
            continue
        t = num / den
        if den < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1 + 1e-12:
            return False
    return t1 - t0 > 1e-12


def _point_segment_distance(x, p, q):
    d = q - p
    t = np.clip(((x - p) @ d) / (d @ d), 0.0, 1.0)
    return np.linalg.norm(x - (p + t[:, None] * d), axis=1)


@dataclass
class SimulationResult:
    records: list
    state: FieldState
    wall_time: float = 0.0


class Simulation:
    """Static context of a run: mesh, reference element, material, criteria."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        g = cfg.geometry
        mesh = build_background_mesh(g.x_range, g.y_range, g.nx, g.ny)
        if g.remove_box is not None:
            mesh = remove_box(mesh, g.remove_box)
        self.mesh = mesh
        self.faces = build_face_table(mesh)
        self.h = g.h
        self.m = cfg.m
        self.ref = build_refined_reference(cfg.numerics.p, self.m)
        self.mat = cfg.material
        nm = cfg.numerics
        self.crit = Criteria(cfg.delta_star, cfg.A_star, nm.d_star, nm.d_crop, nm.d_cut, nm.d_extract)
        self.kernels = make_kernels(mesh, self.ref, self.mat)
        self.dirichlet, self.tractions = boundary_conditions(cfg)
        self.beta = compute_beta(self.mat, self.h, self.m, nm.alpha_E)
        self.opts = EquilibriumOptions(self.beta, nm.k_res, nm.crop, nm.d_crop)
        self.program = LoadProgram(cfg.loading.du, cfg.loading.n_steps, cfg.loading.u0)
        self.reference_mode = cfg.mode == "pf_reference"
        self.fixed = cfg.partition.fixed

    # -- state helpers ----------------------------------------------------
    def empty_state(self) -> FieldState:
        part = Partition(np.zeros(self.mesh.n_elements, dtype=np.int8))
        return FieldState(part, CrackSet(), RefinedMesh(), np.zeros(0), {}, {})

    def discretize(self, st: FieldState):
        enr = build_enrichment(st.cracks, st.partition.labels, self.mesh)
        tk, sk = self.kernels
        return build_discretization(self.mesh, self.faces, self.ref, st.rm, st.partition.labels, st.cracks, enr, tk, sk)

    def qp_coords(self, e: int) -> np.ndarray:
        return self.mesh.map(e, self.ref.qp_xi.reshape(-1, 2)).reshape(self.m * self.m, 4, 2)

    def _refine(self, st: FieldState, elements, iteration=0) -> np.ndarray:
        """Move ``elements`` into Omega_tips; returns the mask of nodes with carried values."""
        elements = sorted(set(int(e) for e in elements))
        part = st.partition
        cut = st.cracks.cut_elements()
        cracks = st.cracks
        for e in elements:
            if e in cut:
                if e not in part.stored_damage:
                    raise RuntimeError(f"element {e} is cut by a sharp crack but has no stored damage")
                cracks = remove_element_pieces(cracks, e)
        old = st.rm
        rm = update_refined_mesh(old, elements, [], self.ref, self.mesh)
        dmg = rm.transfer(old, st.damage, fill=np.nan)
        known = ~np.isnan(dmg)
        stored_d = dict(part.stored_damage)
        stored_h = dict(part.stored_history)
        for e in elements:
            row = rm.rows[e]
            new = np.isnan(dmg[row])
            vals = stored_d.pop(e, None)
            dmg[row[new]] = vals[new] if vals is not None else 0.0
            hist = stored_h.pop(e, None)
            st.history[e] = hist.copy() if hist is not None else np.zeros((self.m * self.m, 4))
            st.history_start[e] = st.history[e].copy()
            st.tension[e] = np.ones((self.m * self.m, 4), dtype=bool)
            st.events.append((st.step, iteration, "refine", e, e in cut))
        st.partition = replace(part.relabel(to_tips=elements), stored_damage=stored_d, stored_history=stored_h)
        st.cracks = cracks
        st.rm = rm
        st.damage = dmg
        return known

    def _derefine(self, st: FieldState, elements, iteration=0) -> list:
        """Move ``elements`` to Omega_xfem, converting their bands to sharp cracks."""
        done = []
        part = st.partition
        stored_d = dict(part.stored_damage)
        stored_h = dict(part.stored_history)
        cracks = st.cracks
        for e in sorted(set(int(x) for x in elements)):
            lat = st.damage[st.rm.rows[e]]
            cracks_new, status = transition_to_sharp(self.mesh, self.ref, self.faces, e, lat, self.crit, cracks)
            if status == "deferred":
                log.debug("transition of element %d deferred", e)
                continue
            cracks = cracks_new
            stored_d[e] = lat.copy()
            stored_h[e] = st.history.pop(e).copy()
            st.history_start.pop(e, None)
            st.tension.pop(e, None)
            done.append(e)
            st.events.append((st.step, iteration, "derefine", e, status == "sharp"))
        if done:
            for c in cracks.cracks:
                c.check_chain(self.h)
            rm = update_refined_mesh(st.rm, [], done, self.ref, self.mesh)
            st.damage = rm.transfer(st.rm, st.damage)
            st.rm = rm
            st.partition = replace(part.relabel(to_xfem=done), stored_damage=stored_d, stored_history=stored_h)
            st.cracks = cracks
        return done

    # -- seeding ------------------------------------------------------------
    def seed(self, st: FieldState | None = None) -> FieldState:
        """Initial Omega_tips, diffuse bands of the initial cracks and their sharp wake."""
        cfg = self.cfg
        st = st or self.empty_state()
        mesh = self.mesh
        h = self.h
        lo = mesh.nodes.min(axis=0)
        hi = mesh.nodes.max(axis=0)

        def on_domain_boundary(x):
            return bool(np.any(np.abs(x - lo) <= 1e-9 * h) or np.any(np.abs(x - hi) <= 1e-9 * h))

        segs = []
        tips_init, pseudo = set(), set()
        radius = cfg.length(cfg.numerics.init_radius)
        anchors = []
        for p, q in cfg.cracks.cracks:
            p, q = np.array(p, float), np.array(q, float)
            if np.linalg.norm(q - p) <= 0:
                raise ValueError("zero-length initial crack")
            for x in (p, q):
                if not mesh.locate(x):
                    raise ValueError(f"crack end point {tuple(x)} lies outside the domain")
            segs.append((p, q))
            for e in range(mesh.n_elements):
                if _segment_hits_element(mesh.corners(e), p, q):
                    tips_init.add(e)
            for x in (p, q):
                if not on_domain_boundary(x):
                    els = mesh.locate(x)
                    pseudo.update(els)
                    tips_init.update(els)
                    anchors.append(x)
        for x in cfg.cracks.notches:
            x = np.array(x, float)
            els = mesh.locate(x)
            if not els:
                raise ValueError(f"notch {tuple(x)} lies outside the domain")
            pseudo.update(els)
            tips_init.update(els)
            anchors.append(x)
        if radius > 0 and anchors:
            c = mesh.centroids
            for x in anchors:
                tips_init.update(np.nonzero(np.linalg.norm(c - x, axis=1) <= radius * (1 + 1e-12))[0].tolist())
        box = cfg.partition.tips_box
        if box is not None:
            c = mesh.centroids
            inb = (c[:, 0] >= box[0]) & (c[:, 0] <= box[1]) & (c[:, 1] >= box[2]) & (c[:, 1] <= box[3])
            tips_init.update(np.nonzero(inb)[0].tolist())

        self._refine(st, tips_init)
        st.partition = replace(st.partition, tips=frozenset(pseudo) & frozenset(tips_init))
        st.events.clear()

        if segs:
            B, Gc, l = cfg.numerics.B, self.mat.Gc, self.mat.l
            for e in st.rm.rows:
                x = self.qp_coords(e).reshape(-1, 2)
                D = np.min([_point_segment_distance(x, p, q) for p, q in segs], axis=0)
                H0 = np.where(D <= l / 2, B * Gc / (2 * l) * (1 - 2 * D / l), 0.0)
                st.history[e] = np.maximum(st.history[e], H0.reshape(self.m * self.m, 4))
            disc = self.discretize(st)
            st.damage = solve_spd(assemble_damage(disc, self.mat, st.history, {}), "initial damage")

        if self.fixed:
            c = mesh.centroids
            out = [
                e
                for e in st.partition.tips_elements
                if not (box[0] <= c[e, 0] <= box[1] and box[2] <= c[e, 1] <= box[3])
            ]
            self._derefine(st, out)
            st.partition = replace(st.partition, tips=frozenset())
        elif not self.reference_mode:
            tips = identify_tip_elements(st.partition, st.damage, st.rm, self.ref, mesh, self.crit)
            st.partition = replace(st.partition, tips=tips, previous_tips=st.partition.tips)
            self._derefine(st, apply_switch_criterion(st.partition, tips, self.crit, mesh))
        return st

    # -- staggered iteration --------------------------------------------------
    def update_partition(self, st: FieldState, iteration: int):
        """Step (iv); returns ``(changed, known)``."""
        mesh, crit = self.mesh, self.crit
        part = st.partition
        tips = identify_tip_elements(part, st.damage, st.rm, self.ref, mesh, crit, previous=part.tips)
        st.partition = replace(part, tips=tips, previous_tips=part.tips)
        changed = False
        if not self.reference_mode:
            gone = self._derefine(st, apply_switch_criterion(st.partition, tips, crit, mesh), iteration)
            changed = bool(gone)
        iface = interface_node_damage(st.partition, st.damage, st.rm, self.ref, mesh, self.faces)
        cut = () if self.reference_mode else st.cracks.cut_elements().keys()
        add = apply_refine_criterion(
            st.partition, iface, tips, crit, mesh, cut, use_distance=not self.reference_mode
        )
        known = np.ones(st.rm.n_nodes, dtype=bool)
        if add:
            known = self._refine(st, add, iteration)
            changed = True
        if changed and not self.reference_mode:
            # keep Gamma_D^d on the faces of the new interface
            gam = damage_dirichlet_boundary(st.partition, st.damage, st.rm, self.ref, self.faces, crit)
            st.partition = replace(st.partition, gamma_Dd=gam)
        return changed, known

    def staggered_step(self, st: FieldState, load: float):
        """Iterate equilibrium, history, damage and partition update to convergence."""
        nm = self.cfg.numerics
        st.load = load
        # the history is a maximum over load steps: every iterate is compared
        # with the history converged at the previous step
        st.history_start = {e: h.copy() for e, h in st.history.items()}
        converged = False
        it = 0
        for it in range(1, nm.max_iter + 1):
            disc = self.discretize(st)
            system = assemble_equilibrium(
                disc, self.mat, st.damage, st.tension, self.dirichlet, self.tractions, load, self.opts
            )
            u = solve_spd(system, f"equilibrium, step {st.step}, iteration {it}")
            st.u, st.disc, st.system = u, disc, system
            for e in disc.tips_elements:
                pp, pm = split_energy_voigt(tips_strains(disc, u, e), self.mat)
                st.history[e] = np.maximum(st.history_start[e], pp)
                st.tension[e] = pp >= pm
            if not self.reference_mode:
                gam = damage_dirichlet_boundary(st.partition, st.damage, st.rm, self.ref, self.faces, self.crit)
                st.partition = replace(st.partition, gamma_Dd=gam)
            dsys = assemble_damage(disc, self.mat, st.history, st.partition.gamma_Dd)
            d_new = solve_spd(dsys, f"damage, step {st.step}, iteration {it}")
            small = convergence_check(d_new, st.damage, nm.tol)
            st.damage = d_new
            changed = False
            if not self.fixed:
                changed, _ = self.update_partition(st, it)
            if small and not changed:
                converged = True
                break
        if not converged:
            log.warning("step %d did not converge in %d iterations", st.step, nm.max_iter)
        return st, it, converged

    def record(self, st: FieldState, iterations: int, converged: bool) -> StepRecord:
        fx = fy = 0.0
        name = self.cfg.loading.reaction
        if name and st.system is not None:
            fx, fy = reactions(st.system, st.u).get(name, (0.0, 0.0))
        ndof = st.disc.dofs.n_dofs if st.disc is not None else 0
        return StepRecord(
            st.step, st.load, fx, fy, ndof, iterations, len(st.partition.tips), len(st.cracks), converged
        )

    def run(self, n_steps: int | None = None, callback=None, state: FieldState | None = None) -> SimulationResult:
        t0 = time.perf_counter()
        st = state if state is not None else self.seed()
        n = self.program.n_steps if n_steps is None else n_steps
        records = []
        for k in range(1, n + 1):
            st.step = k
            st, its, conv = self.staggered_step(st, self.program.level(k))
            rec = self.record(st, its, conv)
            records.append(rec)
            log.info(
                "step %d u=%.4g F=(%.4g, %.4g) nDOF=%d it=%d tips=%d cracks=%d",
                rec.step, rec.u_D, rec.F_x, rec.F_y, rec.nDOF, rec.iterations, rec.tips, rec.cracks,
            )
            if callback is not None:
                callback(st, rec)
        return SimulationResult(records, st, time.perf_counter() - t0)


def seed_initial_cracks(cfg: ScenarioConfig, state: FieldState | None = None) -> tuple[Simulation, FieldState]:
    sim = Simulation(cfg)
    return sim, sim.seed(state)


def staggered_step(sim: Simulation, state: FieldState, load: float):
    return sim.staggered_step(state, load)


def run_simulation(cfg: ScenarioConfig, n_steps: int | None = None, callback=None) -> SimulationResult:
    return Simulation(cfg).run(n_steps, callback)


def refine_element(sim: Simulation, state: FieldState, e: int) -> np.ndarray:
    """Refine one element and return its nodal damage on the refined lattice."""
    sim._refine(state, [e])
    return state.damage[state.rm.rows[e]].copy()


def interface_consistent(st: FieldState, faces) -> bool:
    """Stored interface data matches the labels (Gamma_D^d on Gamma faces, tips refined)."""
    lab = st.partition.labels
    if set(np.nonzero(lab == TIPS)[0].tolist()) != set(st.rm.rows):
        return False
    if not st.partition.tips <= set(st.rm.rows):
        return False
    gam = interface_faces(lab, faces)
    keys = set()
    for f in gam:
        o, n = int(faces.owner[f]), int(faces.neighbor[f])
        t = o if lab[o] == TIPS else n
        row = st.rm.rows[t]
        keys.update(st.rm.keys[i] for i in row)
    return all(k in keys for k in st.partition.gamma_Dd)
