"""Builders and independent oracles shared by the test modules."""

from __future__ import annotations

import numpy as np

from pfxfem.assembly import build_discretization, make_kernels
from pfxfem.crack_geometry import CrackSet, build_enrichment
from pfxfem.material import Material
from pfxfem.mesh import (
    RefinedMesh,
    build_background_mesh,
    build_face_table,
    build_refined_reference,
    update_refined_mesh,
)

# small cracked square used by the driver and invariant tests
SMALL = """
[scenario]
name = small
[geometry]
x_range = 0, 1
y_range = 0, 1
nx = 8
ny = 8
[material]
E = 20
nu = 0.3
Gc = 1e-3
l = 0.03
[numerics]
m = 5
delta_star = 2h
[loading]
du = 2e-3
u0 = 4e-3
n_steps = 4
reaction = top
[bc.bottom]
box = 0, 1, 0, 0
ux = 0
uy = 0
[bc.top]
box = 0, 1, 1, 1
ux = 0
uy = u
[cracks]
crack.1 = 0, 0.44, 0.45, 0.44
"""

G2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def discretization(x_range, y_range, nx, ny, m, tips, mat: Material, cracks: CrackSet | None = None):
    """Discretization of a uniform mesh with the given tips elements."""
    mesh = build_background_mesh(x_range, y_range, nx, ny)
    faces = build_face_table(mesh)
    ref = build_refined_reference(1, m)
    labels = np.zeros(mesh.n_elements, dtype=np.int8)
    labels[list(tips)] = 1
    rm = update_refined_mesh(RefinedMesh(), list(tips), [], ref, mesh)
    cracks = cracks or CrackSet()
    enr = build_enrichment(cracks, labels, mesh)
    tk, sk = make_kernels(mesh, ref, mat)
    return build_discretization(mesh, faces, ref, rm, labels, cracks, enr, tk, sk)


def brute_force_damage(x0, y0, size, m, Gc, l, H, boundary_value):
    """Dense damage system on an axis-aligned square split into m x m bilinear cells.

    Written from scratch (explicit loops, own shape functions and Gauss rule)
    as an oracle for the package assembler.  ``H(x, y)`` gives the history
    at a point; every node on the square's boundary is fixed to
    ``boundary_value(x, y)``.  Returns node coordinates and nodal damage.
    """
    n1 = m + 1
    hs = size / m
    xs = x0 + hs * np.arange(n1)
    ys = y0 + hs * np.arange(n1)
    X = np.array([[x, y] for y in ys for x in xs])
    N = n1 * n1
    K = np.zeros((N, N))
    f = np.zeros(N)
    for j in range(m):
        for i in range(m):
            nodes = [j * n1 + i, j * n1 + i + 1, (j + 1) * n1 + i + 1, (j + 1) * n1 + i]
            for gy in G2:
                for gx in G2:
                    sx, sy = (1 + gx) / 2, (1 + gy) / 2
                    Nv = np.array([(1 - sx) * (1 - sy), sx * (1 - sy), sx * sy, (1 - sx) * sy])
                    dNx = np.array([-(1 - sy), (1 - sy), sy, -sy]) / hs
                    dNy = np.array([-(1 - sx), -sx, sx, (1 - sx)]) / hs
                    w = hs * hs / 4
                    x = xs[i] + sx * hs
                    y = ys[j] + sy * hs
                    h = H(x, y)
                    for a in range(4):
                        f[nodes[a]] += w * 2 * h * Nv[a]
                        for b in range(4):
                            K[nodes[a], nodes[b]] += w * (
                                (Gc / l + 2 * h) * Nv[a] * Nv[b] + Gc * l * (dNx[a] * dNx[b] + dNy[a] * dNy[b])
                            )
    on_bd = (np.isclose(X[:, 0], x0) | np.isclose(X[:, 0], x0 + size) | np.isclose(X[:, 1], y0) | np.isclose(X[:, 1], y0 + size))
    d = np.zeros(N)
    d[on_bd] = [boundary_value(x, y) for x, y in X[on_bd]]
    free = ~on_bd
    d[free] = np.linalg.solve(K[np.ix_(free, free)], f[free] - K[np.ix_(free, on_bd)] @ d[on_bd])
    return X, d


ACCEPTANCE: dict = {}


def report(n: int, title: str, ok: bool, detail: str) -> None:
    """Record and print the one-line outcome of acceptance criterion ``n``."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} -- {detail}"
    ACCEPTANCE[n] = line
    print(line)


def checked(n: int, title: str, body):
    """Run ``body() -> (ok, detail)``, report it, and return ``ok``.

    An exception inside ``body`` is reported as a failure and re-raised.
    """
    try:
        ok, detail = body()
    except Exception as exc:
        report(n, title, False, f"raised {type(exc).__name__}: {exc}")
        raise
    report(n, title, ok, detail)
    return ok


def mirror_damage_gap(coords: np.ndarray, damage: np.ndarray, tol: float = 1e-9) -> tuple[float, int]:
    """Largest ``|d(x, y) - d(x, -y)|`` over the refined nodes.

    A node whose mirror image is not a refined node is compared with zero
    damage, since no diffuse damage is carried outside the refined region.
    Returns the gap and the number of nodes without a mirror partner.
    """
    key = np.round(coords / tol).astype(np.int64)
    idx = {tuple(k): i for i, k in enumerate(key)}
    worst, lonely = 0.0, 0
    for i, (kx, ky) in enumerate(key):
        j = idx.get((kx, -ky))
        other = 0.0 if j is None else damage[j]
        lonely += j is None
        worst = max(worst, abs(damage[i] - other))
    return worst, lonely


def crack_mirror_gap(cracks) -> float:
    """Largest distance from a mirrored crack vertex to the nearest crack segment."""
    polys = [c.polyline() for c in cracks.cracks]
    segs = [(P[k], P[k + 1]) for P in polys for k in range(len(P) - 1)]
    worst = 0.0
    for P in polys:
        for x in P * np.array([1.0, -1.0]):
            best = np.inf
            for a, b in segs:
                d = b - a
                t = np.clip(np.dot(x - a, d) / max(np.dot(d, d), 1e-300), 0.0, 1.0)
                best = min(best, float(np.linalg.norm(x - a - t * d)))
            worst = max(worst, best)
    return worst
