"""Sharp cracks as per-element polylines, Heaviside sides and cut quadrature.

A crack is an ordered chain of pieces, one per cut element.  Each piece is a
polyline whose end points lie on the element boundary (two points for a
straight cut, three when the piece bends at a branching junction).  A branch
that starts at a junction carries a *support*: the parent polyline in that
element and the side of it the branch lives on.  The branch's Heaviside
function is +1/-1 on the two parts of the support side and 0 on the other
side of the parent, so the parent keeps its own labeling untouched.

Sides are "left" (+1) and "right" (-1) of the polyline direction.  All
pieces of one crack are oriented consistently along the chain, so a node
shared by two cut elements gets the same label from both.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .mesh import BackgroundMesh

# Dunavant 3-point rule on the reference triangle, exact for degree 2.
_TRI_BARY = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
_TRI_W = np.array([1 / 3, 1 / 3, 1 / 3])


class DegenerateCutError(ValueError):
    """A node lies on a crack segment, so its side is undefined."""


def cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def polygon_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def points_in_polygon(points, poly) -> np.ndarray:
    """Even-odd ray casting test; points exactly on the boundary are unspecified."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    P = np.asarray(poly, dtype=float)
    Q = np.roll(P, -1, axis=0)
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    yi, yj = P[:, 1][None, :], Q[:, 1][None, :]
    xi, xj = P[:, 0][None, :], Q[:, 0][None, :]
    straddle = (yi > y) != (yj > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = xi + (y - yi) * (xj - xi) / (yj - yi)
    hit = straddle & (x < xc)
    return (np.count_nonzero(hit, axis=1) % 2) == 1


def clip_convex(poly: np.ndarray, p, q):
    """Split a convex polygon by the infinite line through ``p, q``.

    Returns ``(left, right)`` vertex arrays (either may be empty).
    """
    p = np.asarray(p, float)
    d = np.asarray(q, float) - p
    s = cross2(d, poly - p)
    tol = 1e-14 * max(1.0, float(np.max(np.abs(poly))))
    s = np.where(np.abs(s) < tol * np.linalg.norm(d), 0.0, s)
    left, right = [], []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        sa, sb = s[i], s[(i + 1) % n]
        if sa >= 0:
            left.append(a)
        if sa <= 0:
            right.append(a)
        if sa * sb < 0:
            x = a + (b - a) * (sa / (sa - sb))
            left.append(x)
            right.append(x)
    return np.array(left).reshape(-1, 2), np.array(right).reshape(-1, 2)


def _point_param_on_boundary(poly: np.ndarray, x) -> tuple[int, float]:
    """Edge index and parameter of the boundary point closest to ``x``."""
    P = poly
    Q = np.roll(P, -1, axis=0)
    d = Q - P
    L2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", x - P, d) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    proj = P + t[:, None] * d
    dist = np.linalg.norm(proj - x, axis=1)
    i = int(np.argmin(dist))
    return i, float(t[i])


def split_polygon_by_path(poly, path):
    """Split a simple CCW polygon by a path joining two boundary points.

    Returns ``(left, right)`` polygons, ``left`` lying to the left of the path
    direction.  Both are CCW.
    """
    P = np.asarray(poly, dtype=float)
    path = np.asarray(path, dtype=float)
    n = len(P)
    S, E = path[0], path[-1]
    iS, tS = _point_param_on_boundary(P, S)
    iE, tE = _point_param_on_boundary(P, E)

    def walk(i_from, t_from, i_to, t_to):
        # vertices met going CCW from (i_from, t_from) to (i_to, t_to)
        out = []
        if i_from == i_to and t_to > t_from:
            return out
        i = (i_from + 1) % n
        for _ in range(n):
            out.append(P[i])
            if i == i_to:
                break
            i = (i + 1) % n
        return out

    left = list(path) + walk(iE, tE, iS, tS)
    right = list(path[::-1]) + walk(iS, tS, iE, tE)
    return _drop_repeats(np.array(left)), _drop_repeats(np.array(right))


def _drop_repeats(poly: np.ndarray) -> np.ndarray:
    # a path ending on a polygon vertex repeats that vertex
    scale = max(float(np.ptp(poly, axis=0).max()), 1e-300)
    nxt = np.roll(poly, -1, axis=0)
    keep = np.linalg.norm(nxt - poly, axis=1) > 1e-12 * scale
    return poly[keep] if keep.sum() >= 3 else poly


def _fan_quadrature(cell: np.ndarray):
    pts, wts = [], []
    a = cell[0]
    for i in range(1, len(cell) - 1):
        b, c = cell[i], cell[i + 1]
        area = 0.5 * cross2(b - a, c - a)
        if area <= 0:
            continue
        tri = np.array([a, b, c])
        pts.append(_TRI_BARY @ tri)
        wts.append(_TRI_W * area)
    if not pts:
        return np.zeros((0, 2)), np.zeros(0)
    return np.vstack(pts), np.concatenate(wts)


@dataclass(frozen=True, eq=False)
class CrackPiece:
    """The part of one crack inside one element."""

    element: int
    points: np.ndarray
    support: np.ndarray | None = None
    support_sign: int = 0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if len(pts) < 2:
            raise ValueError("a crack piece needs at least two points")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.support is not None:
            sup = np.array(self.support, dtype=float).reshape(-1, 2)
            sup.flags.writeable = False
            object.__setattr__(self, "support", sup)
            if self.support_sign not in (1, -1):
                raise ValueError("support side must be +1 or -1")

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def reversed(self) -> "CrackPiece":
        return replace(self, points=self.points[::-1].copy())

    def regions(self, corners: np.ndarray):
        """``(left, right, support)`` polygons of this piece inside the element."""
        if self.support is None:
            left, right = split_polygon_by_path(corners, self.points)
            return left, right, None
        sl, sr = split_polygon_by_path(corners, self.support)
        sup = sl if self.support_sign > 0 else sr
        left, right = split_polygon_by_path(sup, self.points)
        return left, right, sup

    def heaviside(self, corners: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Heaviside value at interior points ``x`` (0 outside a branch's support)."""
        left, _, sup = self.regions(corners)
        x = np.atleast_2d(x)
        H = np.where(points_in_polygon(x, left), 1.0, -1.0)
        if sup is not None:
            H = np.where(points_in_polygon(x, sup), H, 0.0)
        return H

    def node_labels(self, corners: np.ndarray) -> np.ndarray:
        """Side of each element corner, read off the region polygons exactly.

        A corner on the crack itself (a crack ending at a vertex) gets 0.
        """
        left, right, sup = self.regions(corners)
        out = np.empty(4, dtype=np.int64)
        for i, c in enumerate(corners):
            in_left = np.any(np.all(left == c, axis=1))
            if sup is not None and not np.any(np.all(sup == c, axis=1)):
                out[i] = 0
            elif in_left and np.any(np.all(right == c, axis=1)):
                out[i] = 0
            else:
                out[i] = 1 if in_left else -1
        return out


@dataclass(frozen=True, eq=False)
class Crack:
    """Ordered chain of crack pieces with consistent orientation."""

    id: int
    pieces: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))

    @property
    def elements(self) -> list[int]:
        return [p.element for p in self.pieces]

    def polyline(self) -> np.ndarray:
        """All points along the crack, shared piece ends listed once."""
        if not self.pieces:
            return np.zeros((0, 2))
        pts = [self.pieces[0].points]
        for p in self.pieces[1:]:
            pts.append(p.points[1:])
        return np.vstack(pts)

    def check_chain(self, h: float) -> None:
        for a, b in zip(self.pieces[:-1], self.pieces[1:]):
            if np.linalg.norm(a.end - b.start) > 1e-10 * h:
                raise ValueError(f"crack {self.id}: pieces in elements {a.element} and {b.element} do not chain")


@dataclass(frozen=True, eq=False)
class CrackSet:
    cracks: tuple = ()
    next_id: int = 1

    def __post_init__(self):
        object.__setattr__(self, "cracks", tuple(c for c in self.cracks if c.pieces))

    def __len__(self) -> int:
        return len(self.cracks)

    def cut_elements(self) -> dict[int, list[tuple[int, CrackPiece]]]:
        """Element -> list of (crack index, piece)."""
        out: dict[int, list] = {}
        for k, c in enumerate(self.cracks):
            for p in c.pieces:
                out.setdefault(p.element, []).append((k, p))
        return out

    def by_id(self, cid: int) -> Crack:
        for c in self.cracks:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def with_crack(self, crack: Crack) -> "CrackSet":
        """Replace the crack with the same id, or add it."""
        cracks = list(self.cracks)
        for i, c in enumerate(cracks):
            if c.id == crack.id:
                cracks[i] = crack
                return CrackSet(tuple(cracks), max(self.next_id, crack.id + 1))
        cracks.append(crack)
        return CrackSet(tuple(cracks), max(self.next_id, crack.id + 1))

    def without(self, cid: int) -> "CrackSet":
        return CrackSet(tuple(c for c in self.cracks if c.id != cid), self.next_id)

    def new_crack(self, pieces=()) -> tuple["CrackSet", Crack]:
        c = Crack(self.next_id, tuple(pieces))
        return CrackSet(self.cracks + (c,), self.next_id + 1), c

    def ends(self) -> list[tuple[int, str, np.ndarray, int]]:
        """Open ends as (crack id, 'start'|'end', point, element of the end piece)."""
        out = []
        for c in self.cracks:
            first, last = c.pieces[0], c.pieces[-1]
            out.append((c.id, "start", first.start, first.element))
            out.append((c.id, "end", last.end, last.element))
        return out


def classify_node_side(crack: Crack, node, element: int, h: float = 1.0) -> int:
    """Side (+1 left, -1 right) of ``node`` w.r.t. the crack's piece in ``element``.

    Uses the signed area against the sub-segment of the piece polyline
    nearest to the node.  When the nearest point is a kink shared by two
    sub-segments, the node is left of the kink iff it is left of both
    sub-segments (left turn) or of either one (right turn).
    """
    node = np.asarray(node, dtype=float)
    pieces = [p for p in crack.pieces if p.element == element]
    if not pieces:
        raise ValueError(f"crack {crack.id} does not cut element {element}")
    best = None
    for p in pieces:
        P = p.points
        for i, (a, b) in enumerate(zip(P[:-1], P[1:])):
            d = b - a
            t = np.clip(np.dot(node - a, d) / np.dot(d, d), 0.0, 1.0)
            dist = np.linalg.norm(a + t * d - node)
            if best is None or dist < best[0]:
                best = (dist, P, i, t)
    dist, P, i, t = best
    if dist <= 1e-12 * h:
        raise DegenerateCutError("node lies on the crack segment")
    if t == 1.0 and i + 2 < len(P):
        i0 = i
    elif t == 0.0 and i > 0:
        i0 = i - 1
    else:
        a, b = P[i], P[i + 1]
        return 1 if cross2(b - a, node - a) > 0 else -1
    a, k, b = P[i0], P[i0 + 1], P[i0 + 2]
    left1 = cross2(k - a, node - a) > 0
    left2 = cross2(b - k, node - k) > 0
    if cross2(k - a, b - k) > 0:
        return 1 if left1 and left2 else -1
    return 1 if left1 or left2 else -1


def cut_cells(corners: np.ndarray, pieces: Sequence[CrackPiece]) -> list:
    """Convex cells of an element split by the lines through every sub-segment."""
    corners = np.asarray(corners, dtype=float)
    cells = [corners]
    for p in pieces:
        segs = list(zip(p.points[:-1], p.points[1:]))
        if p.support is not None:
            segs += list(zip(p.support[:-1], p.support[1:]))
        for a, b in segs:
            nxt = []
            for c in cells:
                l, r = clip_convex(c, a, b)
                for q in (l, r):
                    if len(q) >= 3 and polygon_area(q) > 1e-14 * polygon_area(corners):
                        nxt.append(q)
            cells = nxt
    return cells


def element_cut_quadrature(corners: np.ndarray, pieces: Sequence[CrackPiece]):
    """Quadrature of an element cut by one or more crack pieces.

    The element is split by the lines through every sub-segment into convex
    cells; each cell lies on one side of every piece.  Cells are fan
    triangulated and integrated with a 3-point rule.

    Returns
    -------
    points : (n, 2) physical points
    weights : (n,) physical weights
    H : (n, len(pieces)) Heaviside value of each piece at each point
    """
    corners = np.asarray(corners, dtype=float)
    cells = cut_cells(corners, pieces)
    pts, wts, cent = [], [], []
    for c in cells:
        x, w = _fan_quadrature(c)
        if len(w):
            pts.append(x)
            wts.append(w)
            cent.append(np.repeat(c.mean(axis=0)[None], len(w), axis=0))
    pts = np.vstack(pts)
    wts = np.concatenate(wts)
    cent = np.vstack(cent)
    H = np.column_stack([p.heaviside(corners, cent) for p in pieces]) if pieces else np.zeros((len(wts), 0))
    return pts, wts, H


def cut_element_quadrature(corners, polyline):
    """Two-sided quadrature for an element cut by a single polyline.

    Returns ``(points, weights, sides)`` with ``sides`` in {+1, -1}.
    """
    corners = np.asarray(corners, dtype=float)
    polyline = np.asarray(polyline, dtype=float)
    _check_on_boundary(corners, polyline)
    pts, w, H = element_cut_quadrature(corners, [CrackPiece(-1, polyline)])
    return pts, w, H[:, 0].astype(np.int64)


def _check_on_boundary(corners: np.ndarray, polyline: np.ndarray, rel: float = 1e-9):
    size = float(np.max(np.ptp(corners, axis=0)))
    for x in (polyline[0], polyline[-1]):
        i, t = _point_param_on_boundary(corners, x)
        a, b = corners[i], corners[(i + 1) % len(corners)]
        if np.linalg.norm(a + t * (b - a) - x) > rel * size:
            raise ValueError("crack polyline must end on the element boundary")


def snap_off_vertices(mesh: BackgroundMesh, element: int, x, h: float) -> np.ndarray:
    """Move a boundary point lying within 1e-9 h of a corner 1e-6 h along its edge."""
    x = np.array(x, dtype=float)
    corners = mesh.corners(element)
    for i, c in enumerate(corners):
        if np.linalg.norm(x - c) <= 1e-9 * h:
            # move along the edge the point belongs to; pick the next CCW edge
            nxt = corners[(i + 1) % 4]
            d = (nxt - c) / np.linalg.norm(nxt - c)
            return c + 1e-6 * h * d
    return x


@dataclass
class Enrichment:
    """Heaviside enrichment data derived from a CrackSet and the partition.

    ``nodes[k]`` is the sorted enriched node set of crack ``k`` (position in
    ``CrackSet.cracks``); ``labels[k]`` maps node -> side (+1, -1, or 0 for a
    branch node outside the branch's support).
    """

    nodes: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    cut: dict = field(default_factory=dict)

    def cracks_of_element(self, conn_row) -> list[int]:
        s = set(int(n) for n in conn_row)
        return [k for k, ns in enumerate(self.nodes) if s.intersection(self._sets[k])]

    def __post_init__(self):
        self._sets = [set(int(n) for n in ns) for ns in self.nodes]

    def is_enriched(self, k: int, node: int) -> bool:
        return int(node) in self._sets[k]


def build_enrichment(cracks: CrackSet, labels, mesh: BackgroundMesh) -> Enrichment:
    """Per-crack enriched node sets: nodes of Omega_xfem elements cut by each crack.

    ``labels`` is the per-element partition label array (1 = tips, 0 = xfem).
    """
    labels = np.asarray(labels)
    cut = cracks.cut_elements()
    nodes, side = [], []
    for k, c in enumerate(cracks.cracks):
        ns: dict[int, int] = {}
        for p in c.pieces:
            if labels[p.element] == 1:
                raise ValueError(f"element {p.element} is cut by crack {c.id} but lies in the tips subdomain")
            corners = mesh.corners(p.element)
            lab = p.node_labels(corners)
            for n, s in zip(mesh.conn[p.element], lab):
                ns.setdefault(int(n), int(s))
        nodes.append(np.array(sorted(ns), dtype=np.int64))
        side.append(ns)
    return Enrichment(nodes, side, cut)


def blending_sign(enr: Enrichment, k: int, element: int, mesh: BackgroundMesh, cracks: CrackSet) -> float:
    """Constant Heaviside value of crack ``k`` in an uncut element with enriched nodes."""
    vals = [enr.labels[k][int(n)] for n in mesh.conn[element] if int(n) in enr.labels[k]]
    nz = {v for v in vals if v != 0}
    if len(nz) == 1:
        return float(nz.pop())
    if not nz:
        return 0.0
    # conflicting labels: fall back on the side of the element centroid
    c = mesh.centroids[element]
    crack = cracks.cracks[k]
    best = None
    for p in crack.pieces:
        for a, b in zip(p.points[:-1], p.points[1:]):
            d = b - a
            t = np.clip(np.dot(c - a, d) / np.dot(d, d), 0.0, 1.0)
            dist = np.linalg.norm(a + t * d - c)
            if best is None or dist < best[0]:
                best = (dist, a, b)
    _, a, b = best
    return 1.0 if cross2(b - a, c - a) > 0 else -1.0


def append_segment(crack: Crack, piece: CrackPiece, h: float, at: str = "end") -> Crack:
    """Chain ``piece`` onto one end of ``crack``.

    ``at='end'`` expects ``piece.start`` at the crack's end; ``at='start'``
    expects ``piece.end`` at the crack's start.  A piece given in the opposite
    orientation is reversed.  An empty crack accepts any piece.
    """
    if not crack.pieces:
        return replace(crack, pieces=(piece,))
    tol = 1e-10 * h
    if at == "end":
        tail = crack.pieces[-1].end
        if np.linalg.norm(piece.start - tail) <= tol:
            return replace(crack, pieces=crack.pieces + (piece,))
        if np.linalg.norm(piece.end - tail) <= tol:
            return replace(crack, pieces=crack.pieces + (piece.reversed(),))
    elif at == "start":
        head = crack.pieces[0].start
        if np.linalg.norm(piece.end - head) <= tol:
            return replace(crack, pieces=(piece,) + crack.pieces)
        if np.linalg.norm(piece.start - head) <= tol:
            return replace(crack, pieces=(piece.reversed(),) + crack.pieces)
    else:
        raise ValueError("at must be 'start' or 'end'")
    raise ValueError(f"piece in element {piece.element} does not chain onto crack {crack.id}")


def reverse_crack(crack: Crack) -> Crack:
    return replace(crack, pieces=tuple(p.reversed() for p in crack.pieces[::-1]))


def merge_cracks(a: Crack, a_at: str, b: Crack, b_at: str, h: float) -> Crack:
    """Join crack ``b`` onto crack ``a``; the ends ``a_at``/``b_at`` must coincide."""
    if a_at == "start":
        a = reverse_crack(a)
    if b_at == "end":
        b = reverse_crack(b)
    if np.linalg.norm(a.pieces[-1].end - b.pieces[0].start) > 1e-10 * h:
        raise ValueError(f"cracks {a.id} and {b.id} do not meet")
    return replace(a, pieces=a.pieces + b.pieces)


def remove_element_pieces(cracks: CrackSet, element: int) -> CrackSet:
    """Drop every piece inside ``element``; a crack cut in the middle splits in two."""
    out = CrackSet((), cracks.next_id)
    for c in cracks.cracks:
        runs: list[list] = [[]]
        for p in c.pieces:
            if p.element == element:
                runs.append([])
            else:
                runs[-1].append(p)
        runs = [r for r in runs if r]
        if not runs:
            continue
        out = out.with_crack(Crack(c.id, tuple(runs[0])))
        for r in runs[1:]:
            out, _ = out.new_crack(r)
    return out
