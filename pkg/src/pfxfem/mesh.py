"""Fixed background mesh, face adjacency and the refined reference element.

The background mesh is a conforming quadrilateral mesh that never changes
during a run.  Elements of the crack-tip subdomain are h-refined by mapping a
refined reference element (``m x m`` bilinear subelements) into them; the
union of those mapped lattices is kept in a :class:`RefinedMesh` so that the
refined approximation is continuous inside the refined region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

# Reference square [-1, 1]^2, corners counter-clockwise.  Local face j joins
# local nodes j and j+1.
REF_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_GP = 1.0 / math.sqrt(3.0)
GAUSS_1D = np.array([0.5 - 0.5 * _GP, 0.5 + 0.5 * _GP])  # on [0, 1]
GAUSS_1D_W = np.array([0.5, 0.5])
GAUSS_2X2 = np.array([[-_GP, -_GP], [_GP, -_GP], [_GP, _GP], [-_GP, _GP]])


def q4_shape(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear shape functions and reference gradients.

    Parameters
    ----------
    xi : (..., 2) array
        Reference coordinates.

    Returns
    -------
    N : (..., 4) array
    dN : (..., 4, 2) array
        Derivatives with respect to (xi, eta).
    """
    xi = np.asarray(xi, dtype=float)
    x = xi[..., 0]
    e = xi[..., 1]
    N = 0.25 * np.stack(
        [(1 - x) * (1 - e), (1 + x) * (1 - e), (1 + x) * (1 + e), (1 - x) * (1 + e)],
        axis=-1,
    )
    dx = 0.25 * np.stack([-(1 - e), (1 - e), (1 + e), -(1 + e)], axis=-1)
    de = 0.25 * np.stack([-(1 - x), -(1 + x), (1 + x), (1 - x)], axis=-1)
    return N, np.stack([dx, de], axis=-1)


def face_reference_points(face: int, s: np.ndarray) -> np.ndarray:
    """Reference coordinates of parameter ``s`` in [0, 1] along local face ``face``."""
    s = np.asarray(s, dtype=float)[..., None]
    a = REF_CORNERS[face]
    b = REF_CORNERS[(face + 1) % 4]
    return a + s * (b - a)


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    """Quadrilateral background mesh ``(X, T)``.

    ``nodes`` is ``(n_nodes, 2)``; ``conn`` is ``(n_el, 4)`` with
    counter-clockwise node order.  ``h`` is the largest element edge.
    """

    nodes: np.ndarray
    conn: np.ndarray
    h: float

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        conn = np.array(self.conn, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise ValueError("nodes must be (n, 2)")
        if conn.ndim != 2 or conn.shape[1] != 4:
            raise ValueError("connectivity must be (n_el, 4)")
        if conn.size and (conn.min() < 0 or conn.max() >= len(nodes)):
            raise ValueError("connectivity references a missing node")
        nodes.flags.writeable = False
        conn.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "conn", conn)
        _, dN = q4_shape(GAUSS_2X2)
        for e in range(len(conn)):
            J = np.einsum("ai,qaj->qij", nodes[conn[e]], dN)
            if np.any(np.linalg.det(J) <= 0.0):
                raise ValueError(f"element {e} is inverted or not counter-clockwise")
        cent = nodes[conn].mean(axis=1)
        cent.flags.writeable = False
        object.__setattr__(self, "centroids", cent)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.conn)

    def corners(self, e: int) -> np.ndarray:
        return self.nodes[self.conn[e]]

    def map(self, e: int, xi: np.ndarray) -> np.ndarray:
        N, _ = q4_shape(xi)
        return N @ self.nodes[self.conn[e]]

    def jacobian(self, e: int, xi: np.ndarray) -> np.ndarray:
        """``J[..., i, j] = dx_i / dxi_j`` at reference points ``xi``."""
        _, dN = q4_shape(xi)
        return np.einsum("ai,...aj->...ij", self.nodes[self.conn[e]], dN)

    def inverse_map(self, e: int, x: np.ndarray, tol: float = 1e-13) -> np.ndarray:
        """Reference coordinates of physical points ``x`` (Newton iteration)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi = np.zeros_like(x)
        for _ in range(25):
            r = self.map(e, xi) - x
            J = self.jacobian(e, xi)
            step = np.linalg.solve(J, r[..., None])[..., 0]
            xi -= step
            if np.max(np.abs(step)) < tol:
                break
        return xi

    def node_neighbors(self) -> list[set[int]]:
        """Elements sharing at least one node with each element (itself excluded)."""
        if "_nbrs" not in self.__dict__:
            by_node: list[list[int]] = [[] for _ in range(self.n_nodes)]
            for e, row in enumerate(self.conn):
                for n in row:
                    by_node[n].append(e)
            nbrs = []
            for e, row in enumerate(self.conn):
                s = set()
                for n in row:
                    s.update(by_node[n])
                s.discard(e)
                nbrs.append(s)
            object.__setattr__(self, "_nbrs", nbrs)
            object.__setattr__(self, "_by_node", by_node)
        return self.__dict__["_nbrs"]

    def elements_of_node(self, n: int) -> list[int]:
        self.node_neighbors()
        return self.__dict__["_by_node"][n]

    def locate(self, x: np.ndarray, tol: float = 1e-10) -> list[int]:
        """Elements whose closure contains point ``x`` (axis-aligned bounding test + inverse map)."""
        x = np.asarray(x, dtype=float)
        c = self.nodes[self.conn]
        lo = c.min(axis=1) - tol * self.h
        hi = c.max(axis=1) + tol * self.h
        cand = np.nonzero(np.all((x >= lo) & (x <= hi), axis=1))[0]
        out = []
        for e in cand:
            xi = self.inverse_map(int(e), x)[0]
            if np.all(np.abs(xi) <= 1.0 + 1e-9):
                out.append(int(e))
        return out


def build_background_mesh(x_range, y_range, nx: int, ny: int) -> BackgroundMesh:
    """Uniform ``nx x ny`` quadrilateral mesh of a rectangle."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError("element counts must be positive integers")
    x0, x1 = map(float, x_range)
    y0, y1 = map(float, y_range)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("coordinate ranges must be increasing")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (j * (nx + 1) + i).ravel()
    conn = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    h = max((x1 - x0) / nx, (y1 - y0) / ny)
    return BackgroundMesh(nodes, conn, h)


def remove_box(mesh: BackgroundMesh, box) -> BackgroundMesh:
    """Drop elements whose centroid lies inside ``box = (x0, x1, y0, y1)``.

    Used for L-shaped domains: a uniform grid with one corner block removed.
    Unused nodes are dropped and the rest renumbered in their original order.
    """
    x0, x1, y0, y1 = box
    c = mesh.centroids
    keep = ~((c[:, 0] > x0) & (c[:, 0] < x1) & (c[:, 1] > y0) & (c[:, 1] < y1))
    conn = mesh.conn[keep]
    used = np.unique(conn)
    renum = -np.ones(mesh.n_nodes, dtype=np.int64)
    renum[used] = np.arange(len(used))
    return BackgroundMesh(mesh.nodes[used], renum[conn], mesh.h)


@dataclass(frozen=True, eq=False)
class FaceTable:
    """Face adjacency computed from the connectivity.

    Attributes
    ----------
    nodes : (n_faces, 2) node pair, in the owner's local orientation
    owner, owner_local : owning element and its local face id
    neighbor, neighbor_local : second element and local id, ``-1`` on the boundary
    elem_faces : (n_el, 4) face id of each local face
    """

    nodes: np.ndarray
    owner: np.ndarray
    owner_local: np.ndarray
    neighbor: np.ndarray
    neighbor_local: np.ndarray
    elem_faces: np.ndarray

    @property
    def n_faces(self) -> int:
        return len(self.nodes)

    @property
    def boundary(self) -> np.ndarray:
        return np.nonzero(self.neighbor < 0)[0]

    @property
    def interior(self) -> np.ndarray:
        return np.nonzero(self.neighbor >= 0)[0]

    def other(self, f: int, e: int) -> tuple[int, int]:
        """Element and local face on the other side of face ``f`` seen from ``e``."""
        if self.owner[f] == e:
            return int(self.neighbor[f]), int(self.neighbor_local[f])
        return int(self.owner[f]), int(self.owner_local[f])

    def local_of(self, f: int, e: int) -> int:
        return int(self.owner_local[f] if self.owner[f] == e else self.neighbor_local[f])


def build_face_table(mesh: BackgroundMesh) -> FaceTable:
    seen: dict[tuple[int, int], int] = {}
    nodes, owner, owner_loc, nb, nb_loc = [], [], [], [], []
    elem_faces = np.empty((mesh.n_elements, 4), dtype=np.int64)
    for e, row in enumerate(mesh.conn):
        for j in range(4):
            a, b = int(row[j]), int(row[(j + 1) % 4])
            key = (min(a, b), max(a, b))
            f = seen.get(key)
            if f is None:
                f = len(nodes)
                seen[key] = f
                nodes.append((a, b))
                owner.append(e)
                owner_loc.append(j)
                nb.append(-1)
                nb_loc.append(-1)
            else:
                if nb[f] >= 0:
                    raise ValueError(f"face {key} shared by more than two elements")
                nb[f] = e
                nb_loc[f] = j
            elem_faces[e, j] = f
    arr = lambda v: np.array(v, dtype=np.int64)  # noqa: E731
    return FaceTable(
        np.array(nodes, dtype=np.int64).reshape(-1, 2),
        arr(owner),
        arr(owner_loc),
        arr(nb),
        arr(nb_loc),
        elem_faces,
    )


def refinement_factor(h: float, l: float, p: int = 1, a: float = 5.0) -> int:
    """Subdivisions per direction, ``ceil(a h / (l p))``, at least 1."""
    if h <= 0 or l <= 0 or a <= 0:
        raise ValueError("h, l and a must be positive")
    if p < 1:
        raise ValueError("degree must be >= 1")
    # guard against 20.000000000000004 -> 21
    q = a * h / (l * p)
    return max(1, int(math.ceil(q - 1e-12 * max(1.0, q))))


@dataclass(frozen=True, eq=False)
class RefinedReference:
    """Reference square split into ``m x m`` bilinear subelements.

    Lattice node ``(a, b)``, ``a, b = 0..m``, has local index ``b*(m+1) + a`` and
    reference coordinates ``(-1 + 2a/m, -1 + 2b/m)``.
    """

    p: int
    m: int
    lattice: np.ndarray  # (n_nodes, 2) reference coordinates
    sub_conn: np.ndarray  # (m*m, 4) local lattice ids
    qp_xi: np.ndarray  # (m*m, 4, 2) reference coordinates of subelement Gauss points
    qp_w: np.ndarray  # (m*m, 4) reference weights (sum = 4)
    sub_N: np.ndarray  # (4, 4) subelement shape values at its Gauss points
    sub_dN: np.ndarray  # (4, 4, 2) d/dxi of subelement shapes (already scaled by m)
    face_ids: tuple  # per local face, (m+1,) lattice ids from corner j to j+1
    boundary_loop: np.ndarray  # (4m,) lattice ids, counter-clockwise from corner 0
    face_s: np.ndarray  # (2m,) face parameter of face Gauss points
    face_w: np.ndarray  # (2m,) weights on [0, 1]

    @property
    def n_nodes(self) -> int:
        return (self.m + 1) ** 2

    @property
    def n_qp(self) -> int:
        return 4 * self.m * self.m

    def lid(self, a, b):
        return np.asarray(b) * (self.m + 1) + np.asarray(a)

    def basis_at(self, xi: np.ndarray):
        """Nonzero refined basis functions at reference points.

        Returns ``(ids (n, 4), N (n, 4), dN (n, 4, 2), sub (n,))`` where ``ids``
        are lattice ids and ``dN`` derivatives with respect to the element's
        reference coordinates.
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        m = self.m
        t = (xi + 1.0) * 0.5 * m
        ij = np.clip(np.floor(t).astype(np.int64), 0, m - 1)
        loc = 2.0 * (t - ij) - 1.0
        N, dN = q4_shape(loc)
        sub = ij[:, 1] * m + ij[:, 0]
        return self.sub_conn[sub], N, dN * m, sub

    def evaluate(self, values: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Interpolate lattice nodal ``values`` at reference points ``xi``."""
        ids, N, _, _ = self.basis_at(xi)
        return np.einsum("na,na...->n...", N, np.asarray(values)[ids])

    def face_points(self, face: int) -> np.ndarray:
        return face_reference_points(face, self.face_s)


def build_refined_reference(p: int, m: int) -> RefinedReference:
    if p != 1:
        raise ValueError(f"unsupported degree p={p}; only p=1 is implemented")
    if int(m) != m or m < 1:
        raise ValueError("refinement factor must be a positive integer")
    m = int(m)
    g = np.linspace(-1.0, 1.0, m + 1)
    A, B = np.meshgrid(np.arange(m + 1), np.arange(m + 1))
    lattice = np.column_stack([g[A.ravel()], g[B.ravel()]])
    i, j = np.meshgrid(np.arange(m), np.arange(m))
    n0 = (j * (m + 1) + i).ravel()
    sub_conn = np.column_stack([n0, n0 + 1, n0 + m + 2, n0 + m + 1])
    centers = lattice[sub_conn].mean(axis=1)
    qp_xi = centers[:, None, :] + GAUSS_2X2[None, :, :] / m
    qp_w = np.full((m * m, 4), 1.0 / (m * m))
    sub_N, sub_dN = q4_shape(GAUSS_2X2)
    k = np.arange(m + 1)
    faces = (
        k,  # bottom, a = k, b = 0
        m + k * (m + 1),  # right, a = m, b = k
        (m - k) + m * (m + 1),  # top
        (m - k) * (m + 1),  # left
    )
    loop = np.concatenate([f[:-1] for f in faces])
    s = (np.arange(m)[:, None] + GAUSS_1D[None, :]).ravel() / m
    w = np.tile(GAUSS_1D_W, m) / m
    return RefinedReference(
        p=1,
        m=m,
        lattice=lattice,
        sub_conn=sub_conn,
        qp_xi=qp_xi,
        qp_w=qp_w,
        sub_N=sub_N,
        sub_dN=sub_dN * m,
        face_ids=tuple(np.asarray(f) for f in faces),
        boundary_loop=loop,
        face_s=s,
        face_w=w,
    )


def _lattice_keys(mesh: BackgroundMesh, ref: RefinedReference, e: int) -> list[tuple]:
    """Exact identifiers of the refined nodes of element ``e``.

    Corners are keyed by background node, edge nodes by the sorted node pair
    plus an integer position, interior nodes by element and lattice indices.
    """
    m = ref.m
    row = [int(n) for n in mesh.conn[e]]
    keys: list = [None] * ref.n_nodes
    for b in range(1, m):
        for a in range(1, m):
            keys[b * (m + 1) + a] = ("i", e, a, b)
    for j in range(4):
        n0, n1 = row[j], row[(j + 1) % 4]
        ids = ref.face_ids[j]
        keys[ids[0]] = ("v", n0)
        for k in range(1, m):
            keys[ids[k]] = ("e", n0, n1, k) if n0 < n1 else ("e", n1, n0, m - k)
    return keys


@dataclass(frozen=True, eq=False)
class RefinedMesh:
    """Auxiliary mesh ``(X_ref, T_ref)`` over the refined elements.

    ``rows[e]`` holds the refined node ids of background element ``e`` in
    lattice order.  ``keys[i]`` identifies node ``i`` exactly, so values can
    be carried across updates that renumber the nodes.
    """

    coords: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    keys: tuple = ()
    rows: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.keys)

    @property
    def elements(self) -> list[int]:
        return sorted(self.rows)

    def index(self) -> dict:
        if "_index" not in self.__dict__:
            object.__setattr__(self, "_index", {k: i for i, k in enumerate(self.keys)})
        return self.__dict__["_index"]

    def transfer(self, other: "RefinedMesh", values: np.ndarray, fill=0.0) -> np.ndarray:
        """Carry nodal ``values`` defined on ``other`` onto this mesh by key."""
        idx = other.index()
        out = np.full(self.n_nodes, fill, dtype=float)
        for i, k in enumerate(self.keys):
            j = idx.get(k)
            if j is not None:
                out[i] = values[j]
        return out


def update_refined_mesh(
    rm: RefinedMesh,
    add: Iterable[int],
    remove: Iterable[int],
    ref: RefinedReference,
    mesh: BackgroundMesh,
) -> RefinedMesh:
    add = sorted(set(int(e) for e in add))
    remove = set(int(e) for e in remove)
    if remove & set(add):
        raise ValueError("an element cannot be added and removed at once")
    for e in add:
        if e in rm.rows:
            raise ValueError(f"element {e} is already refined")
    for e in remove:
        if e not in rm.rows:
            raise ValueError(f"element {e} is not refined")

    old_keys = rm.keys
    elem_keys = {e: [old_keys[i] for i in row] for e, row in rm.rows.items() if e not in remove}
    coord_of = {k: rm.coords[i] for i, k in enumerate(old_keys)}
    for e in add:
        ks = _lattice_keys(mesh, ref, e)
        elem_keys[e] = ks
        xs = mesh.map(e, ref.lattice)
        for k, x in zip(ks, xs):
            coord_of.setdefault(k, x)

    used = set()
    for ks in elem_keys.values():
        used.update(ks)
    keys = [k for k in old_keys if k in used]
    seen = set(keys)
    for e in add:
        for k in elem_keys[e]:
            if k not in seen:
                seen.add(k)
                keys.append(k)
    index = {k: i for i, k in enumerate(keys)}
    coords = np.array([coord_of[k] for k in keys], dtype=float).reshape(-1, 2)
    rows = {e: np.array([index[k] for k in ks], dtype=np.int64) for e, ks in sorted(elem_keys.items())}
    out = RefinedMesh(coords, tuple(keys), rows)
    object.__setattr__(out, "_index", index)
    return out
