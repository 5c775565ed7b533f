"""Coalescence of two head-on cracks.

Reports when the cracks merge, the tip elements left at the end and the
elements that were refined and later switched back to XFEM.

    python3 scripts/run_coalescence.py [--config coalescence_desk] [--steps N]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from pfxfem.config import load_config, resolve_config
from pfxfem.driver import Simulation
from pfxfem.output import write_curves, write_fields


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="coalescence_desk")
    ap.add_argument("--steps", type=int)
    ap.add_argument("--out", type=Path, default=Path("out/coalescence"))
    args = ap.parse_args()
    sim = Simulation(load_config(resolve_config(args.config)))
    merged = []

    def report(st, rec):
        if len(st.cracks) == 1 and not merged:
            merged.append(rec.step)
        print(
            f"step {rec.step:3d} u = {rec.u_D:.4g} F = {rec.F_y:.4g} it = {rec.iterations:3d} "
            f"tips = {rec.tips} cracks = {rec.cracks} nDOF = {rec.nDOF}",
            flush=True,
        )

    res = sim.run(args.steps, report)
    st = res.state
    refined, cycled = set(), set()
    for step, _, kind, e, _ in st.events:
        if step == 0:
            continue
        if kind == "refine":
            refined.add(e)
        elif kind == "derefine" and e in refined:
            cycled.add(e)
    write_curves(res.records, args.out / "curves.csv")
    write_fields(st, sim.mesh, sim.ref, args.out / "fields_final.vtk")
    print(f"cracks merged at step: {merged[0] if merged else 'never'}")
    print(f"tip elements left: {sorted(st.partition.tips)}")
    print(f"elements refined and switched back: {sorted(cycled)}")
    for c in st.cracks.cracks:
        P = c.polyline()
        print(f"crack {c.id}: from {np.round(P[0], 3)} to {np.round(P[-1], 3)}")


if __name__ == "__main__":
    main()
