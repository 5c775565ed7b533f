"""Element partition into the crack-tip subdomain and the XFEM subdomain.

Labels are ``1`` for Omega_tips (refined, phase-field) and ``0`` for
Omega_xfem.  This module holds the partition state and the criteria that
move elements between the two subdomains every staggered iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .mesh import GAUSS_1D, BackgroundMesh, FaceTable, RefinedMesh, RefinedReference

TIPS = 1
XFEM = 0


@dataclass(frozen=True)
class Criteria:
    """Thresholds driving refinement, switching and tip identification.

    ``delta_star`` and ``A_star`` are lengths/areas; the remaining values are
    damage levels and must satisfy
    ``0 < d_star < d_crop < d_cut < d_extract < 1``.
    """

    delta_star: float
    A_star: float
    d_star: float = 0.2
    d_crop: float = 0.9
    d_cut: float = 0.95
    d_extract: float = 0.98

    def __post_init__(self):
        if not (0 < self.d_star < self.d_crop < self.d_cut < self.d_extract < 1):
            raise ValueError("thresholds must satisfy 0 < d_star < d_crop < d_cut < d_extract < 1")
        if self.delta_star <= 0 or self.A_star <= 0:
            raise ValueError("delta_star and A_star must be positive")

    @classmethod
    def for_mesh(cls, h: float, l: float, delta_star: float, **kw) -> "Criteria":
        return cls(delta_star=delta_star, A_star=h * l / 5.0, **kw)


@dataclass(frozen=True, eq=False)
class Partition:
    """Partition state.

    Attributes
    ----------
    labels : per-element TIPS/XFEM
    tips : current tip elements
    previous_tips : tip elements of the previous identification
    gamma_Dd : refined node key -> frozen damage value on the interface
    stored_damage : derefined element -> damage on its refined lattice
    stored_history : derefined element -> history at its refined quadrature points
    """

    labels: np.ndarray
    tips: frozenset = frozenset()
    previous_tips: frozenset = frozenset()
    gamma_Dd: dict = field(default_factory=dict)
    stored_damage: dict = field(default_factory=dict)
    stored_history: dict = field(default_factory=dict)

    def __post_init__(self):
        lab = np.array(self.labels, dtype=np.int8)
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "tips", frozenset(int(e) for e in self.tips))
        object.__setattr__(self, "previous_tips", frozenset(int(e) for e in self.previous_tips))
        bad = [e for e in self.tips if lab[e] != TIPS]
        if bad:
            raise ValueError(f"tip elements {sorted(bad)} are not in the tips subdomain")

    @property
    def tips_elements(self) -> np.ndarray:
        return np.nonzero(self.labels == TIPS)[0]

    @property
    def xfem_elements(self) -> np.ndarray:
        return np.nonzero(self.labels == XFEM)[0]

    def relabel(self, to_tips=(), to_xfem=()) -> "Partition":
        lab = self.labels.copy()
        lab[list(to_tips)] = TIPS
        lab[list(to_xfem)] = XFEM
        return replace(self, labels=lab, tips=frozenset(e for e in self.tips if lab[e] == TIPS))


def interface_faces(labels, faces: FaceTable) -> np.ndarray:
    """Faces whose two owners carry different labels."""
    labels = np.asarray(labels)
    nb = faces.neighbor
    inner = nb >= 0
    a = labels[faces.owner]
    b = np.where(inner, labels[np.where(inner, nb, 0)], a)
    return np.nonzero(inner & (a != b))[0]


def element_distance(e1: int, e2: int, mesh: BackgroundMesh) -> float:
    """Center-to-center distance between two elements."""
    c = mesh.centroids
    return float(np.linalg.norm(c[e1] - c[e2]))


def min_tip_distance(mesh: BackgroundMesh, elements, tips) -> np.ndarray:
    """Distance from each element to its nearest tip element (inf if no tips)."""
    elements = np.asarray(list(elements), dtype=np.int64)
    if len(tips) == 0:
        return np.full(len(elements), np.inf)
    c = mesh.centroids
    t = c[np.array(sorted(tips))]
    d = np.linalg.norm(c[elements][:, None, :] - t[None, :, :], axis=2)
    return d.min(axis=1)


def face_trace_values(values: np.ndarray, row: np.ndarray, ref: RefinedReference, j: int) -> np.ndarray:
    """Refined nodal ``values`` interpolated at the Gauss points of local face ``j``."""
    ids = row[ref.face_ids[j]]
    v = values[ids]
    t = GAUSS_1D[None, :]
    return ((1 - t) * v[:-1, None] + t * v[1:, None]).ravel()


def element_qp_values(values: np.ndarray, row: np.ndarray, ref: RefinedReference) -> np.ndarray:
    """Refined nodal values at the element's refined quadrature points, ``(m*m, 4)``."""
    return values[row[ref.sub_conn]] @ ref.sub_N.T


def element_qp_weights(mesh: BackgroundMesh, e: int, ref: RefinedReference) -> np.ndarray:
    J = mesh.jacobian(e, ref.qp_xi.reshape(-1, 2))
    return (np.linalg.det(J) * ref.qp_w.ravel()).reshape(ref.qp_w.shape)


def tip_configuration(values, row, ref, mesh, e, crit: Criteria):
    """Intersected local faces, band area and corner damage of element ``e``."""
    sides = [j for j in range(4) if np.any(face_trace_values(values, row, ref, j) > crit.d_cut)]
    dq = element_qp_values(values, row, ref)
    area = float(np.sum(element_qp_weights(mesh, e, ref)[dq > crit.d_cut]))
    corners = values[row[[ref.face_ids[j][0] for j in range(4)]]]
    return sides, area, corners


def _band_ends(sides, corners, crit: Criteria) -> bool:
    """Whether the band enters the element and stops inside it."""
    if len(sides) == 1:
        return True
    if len(sides) == 2:
        a, b = sides
        if (b - a) % 4 == 2:
            return False
        shared = b if b - a == 1 else 0  # local face j joins corners j and j+1
        return corners[shared] > crit.d_cut
    return False


def _is_tip(sides, area, corners, crit: Criteria) -> bool:
    return _band_ends(sides, corners, crit) and area > crit.A_star


def _is_through(sides, corners, crit: Criteria) -> bool:
    if len(sides) >= 3:
        return True
    if len(sides) == 2:
        a, b = sides
        if (b - a) % 4 == 2:
            return True
        shared = b if b - a == 1 else 0
        return not corners[shared] > crit.d_cut
    return False


def identify_tip_elements(
    partition: Partition,
    damage: np.ndarray,
    rm: RefinedMesh,
    ref: RefinedReference,
    mesh: BackgroundMesh,
    crit: Criteria,
    previous=None,
) -> frozenset:
    """Elements of Omega_tips containing a crack tip.

    An element is a tip if exactly one side is intersected by the band
    (``d > d_cut`` at a face Gauss point) and the band area exceeds ``A*``, or
    if two adjacent sides are intersected, their shared corner is damaged and
    the area exceeds ``A*``.  A previous tip that is still in Omega_tips is
    kept when no new tip appeared in it or around it.  If the band now runs
    through it, it is kept only while a neighbouring element holds a band end
    too small to be a tip and no new tip lies within ``delta_star``: the band
    has left the element but has not yet grown enough in the next one to be
    recognised there.  A band running through with no loose end nearby has
    joined another crack or the domain boundary, and the tip is dropped.
    """
    if previous is None:
        previous = partition.previous_tips | partition.tips
    conf = {}
    new, loose = set(), set()
    for e in partition.tips_elements:
        e = int(e)
        sides, area, corners = tip_configuration(damage, rm.rows[e], ref, mesh, e, crit)
        conf[e] = (sides, corners)
        if _is_tip(sides, area, corners, crit):
            new.add(e)
        elif _band_ends(sides, corners, crit):
            loose.add(e)
    nbrs = mesh.node_neighbors()
    out = set(new)
    for e in previous:
        if e not in conf or e in new:
            continue
        if any(n in new for n in nbrs[e]):
            continue
        sides, corners = conf[e]
        if _is_through(sides, corners, crit):
            if not any(n in loose for n in nbrs[e]):
                continue
            if new and min_tip_distance(mesh, [e], new)[0] <= crit.delta_star * (1 + 1e-12):
                continue
        out.add(e)
    return frozenset(out)


def interface_node_damage(
    partition: Partition, damage: np.ndarray, rm: RefinedMesh, ref: RefinedReference, mesh: BackgroundMesh, faces: FaceTable
) -> dict:
    """Max refined damage seen by each Omega_xfem element on its interface.

    Covers refined trace nodes of its faces on Gamma and any of its vertices
    that belong to the refined mesh.
    """
    idx = rm.index()
    out: dict[int, float] = {}
    lab = partition.labels
    for f in interface_faces(lab, faces):
        o, n = int(faces.owner[f]), int(faces.neighbor[f])
        t, x = (o, n) if lab[o] == TIPS else (n, o)
        j = faces.local_of(f, t)
        v = float(np.max(damage[rm.rows[t][ref.face_ids[j]]]))
        out[x] = max(out.get(x, -np.inf), v)
    for e in partition.xfem_elements:
        for nd in mesh.conn[e]:
            i = idx.get(("v", int(nd)))
            if i is not None:
                out[int(e)] = max(out.get(int(e), -np.inf), float(damage[i]))
    return out


def apply_refine_criterion(
    partition: Partition,
    iface_damage: dict,
    tips,
    crit: Criteria,
    mesh: BackgroundMesh,
    cut_elements=(),
    use_distance: bool = True,
) -> set:
    """Omega_xfem elements to move into Omega_tips.

    An element next to the interface is refined when its interface damage
    reaches ``d_star`` and it lies within ``delta_star`` of a tip element.
    Cut elements approached by a tip within ``delta_star`` are also refined so
    that merging cracks are handled by the phase field.
    """
    cand = {e for e, v in iface_damage.items() if v >= crit.d_star}
    if not use_distance:
        return {e for e in cand if partition.labels[e] == XFEM}
    cand |= {int(e) for e in cut_elements if partition.labels[e] == XFEM}
    cand = sorted(cand)
    if not cand:
        return set()
    dist = min_tip_distance(mesh, cand, tips)
    return {e for e, dd in zip(cand, dist) if dd <= crit.delta_star * (1 + 1e-12)}


def apply_switch_criterion(partition: Partition, tips, crit: Criteria, mesh: BackgroundMesh) -> set:
    """Omega_tips elements farther than ``delta_star`` from every tip element."""
    el = partition.tips_elements
    if len(el) == 0:
        return set()
    dist = min_tip_distance(mesh, el, tips)
    return {int(e) for e, dd in zip(el, dist) if dd > crit.delta_star * (1 + 1e-12)}


def crop_interface(face_damage: np.ndarray, crit: Criteria) -> np.ndarray:
    """Mask of face Gauss points kept on the cropped interface (``d < d_crop``)."""
    return np.asarray(face_damage) < crit.d_crop


def damage_dirichlet_boundary(
    partition: Partition,
    damage: np.ndarray,
    rm: RefinedMesh,
    ref: RefinedReference,
    faces: FaceTable,
    crit: Criteria,
) -> dict:
    """Frozen damage values on the interface faces crossed by a crack.

    Faces of Gamma with a refined trace node above ``d_cut`` are selected
    together with every Gamma face sharing a background node with them.
    Nodes already frozen keep their stored value; new ones take the current
    damage.
    """
    lab = partition.labels
    gam = interface_faces(lab, faces)
    trace = {}
    for f in gam:
        o, n = int(faces.owner[f]), int(faces.neighbor[f])
        t = o if lab[o] == TIPS else n
        trace[int(f)] = rm.rows[t][ref.face_ids[faces.local_of(f, t)]]
    cut = {f for f, ids in trace.items() if np.any(damage[ids] > crit.d_cut)}
    if not cut:
        return {}
    by_node: dict[int, list[int]] = {}
    for f in trace:
        for nd in faces.nodes[f]:
            by_node.setdefault(int(nd), []).append(f)
    sel = set(cut)
    for f in cut:
        for nd in faces.nodes[f]:
            sel.update(by_node[int(nd)])
    out = {}
    old = partition.gamma_Dd
    for f in sorted(sel):
        for i in trace[f]:
            k = rm.keys[i]
            out[k] = old.get(k, float(damage[i]))
    return out
