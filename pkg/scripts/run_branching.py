"""Branching test: tip and crack counts and mirror symmetry per step.

The symmetry measure is the largest damage difference between refined nodes
mirrored about y = 0, taking d = 0 where the mirror node is not refined.

    python3 scripts/run_branching.py [--config branching_desk] [--steps N]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from pfxfem.config import load_config, resolve_config
from pfxfem.driver import Simulation
from pfxfem.output import write_curves, write_fields


def mirror_asymmetry(coords: np.ndarray, damage: np.ndarray, tol: float = 1e-9) -> float:
    """Largest ``|d(x, y) - d(x, -y)|`` over refined nodes; a missing mirror node counts as d = 0."""
    key = np.round(coords / tol).astype(np.int64)
    idx = {tuple(k): i for i, k in enumerate(key)}
    worst = 0.0
    for i, (kx, ky) in enumerate(key):
        j = idx.get((kx, -ky))
        worst = max(worst, abs(damage[i] - (0.0 if j is None else damage[j])))
    return worst


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="branching_desk")
    ap.add_argument("--steps", type=int)
    ap.add_argument("--out", type=Path, default=Path("out/branching"))
    args = ap.parse_args()
    sim = Simulation(load_config(resolve_config(args.config)))
    print(f"{'step':>4} {'u':>9} {'F':>10} {'it':>4} {'tips':>4} {'cracks':>6} {'nDOF':>6} {'asym':>9}")

    def report(st, rec):
        a = mirror_asymmetry(st.rm.coords, st.damage)
        print(
            f"{rec.step:4d} {rec.u_D:9.4g} {rec.F_y:10.4g} {rec.iterations:4d} {rec.tips:4d} "
            f"{rec.cracks:6d} {rec.nDOF:6d} {a:9.2e}",
            flush=True,
        )

    res = sim.run(args.steps, report)
    write_curves(res.records, args.out / "curves.csv")
    write_fields(res.state, sim.mesh, sim.ref, args.out / "fields_final.vtk")
    for c in res.state.cracks.cracks:
        P = c.polyline()
        print(f"crack {c.id}: {len(c.pieces)} pieces from {np.round(P[0], 3)} to {np.round(P[-1], 3)}")


if __name__ == "__main__":
    main()
