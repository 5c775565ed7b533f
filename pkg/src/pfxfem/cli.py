"""Command-line entry point.

::

    python3 -m pfxfem run <config> [--mode pf|pf_xfem] [--out DIR] [--steps N] [--seed-only]
    python3 -m pfxfem list-scenarios
    python3 -m pfxfem validate <config>

``<config>`` is a path or the name of a shipped scenario.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config, resolve_config, shipped_scenarios
from .output import write_curves, write_fields

log = logging.getLogger("pfxfem")

MODE_ALIASES = {"pf": "pf_reference", "pf_reference": "pf_reference", "pf_xfem": "pf_xfem"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pfxfem", description="Phase-field/XFEM fracture simulations.")
    ap.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("config", help="config file or shipped scenario name")
    run.add_argument("--mode", choices=sorted(MODE_ALIASES), help="pf (plain adaptive phase field) or pf_xfem")
    run.add_argument("--out", type=Path, help="output directory (default: the config's)")
    run.add_argument("--steps", type=int, help="number of load steps (default: the config's)")
    run.add_argument("--seed-only", action="store_true", help="stop after seeding the initial cracks")

    sub.add_parser("list-scenarios", help="list the shipped scenarios")

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("config")
    return ap


def _load(name):
    path = resolve_config(name)
    return path, load_config(path)


def cmd_run(args) -> int:
    from .driver import Simulation

    _, cfg = _load(args.config)
    if args.mode:
        cfg = cfg.with_mode(MODE_ALIASES[args.mode])
    if args.steps is not None and args.steps < 0:
        raise ConfigError("--steps must be >= 0")
    out = args.out if args.out is not None else Path(cfg.output.directory)
    stride = cfg.output.stride
    sim = Simulation(cfg)
    st = sim.seed()
    if cfg.output.fields:
        write_fields(st, sim.mesh, sim.ref, out / "fields_0000.vtk")
    if args.seed_only:
        log.info("seeded: %d tip elements, %d cracks", len(st.partition.tips), len(st.cracks))
        return 0
    records = []
    curves = out / "curves.csv"

    def callback(state, rec):
        records.append(rec)
        write_curves(records, curves)
        if cfg.output.fields and rec.step % stride == 0:
            write_fields(state, sim.mesh, sim.ref, out / f"fields_{rec.step:04d}.vtk")

    write_curves(records, curves)
    res = sim.run(args.steps, callback, st)
    n = len(res.records)
    if cfg.output.fields and n and n % stride:
        write_fields(res.state, sim.mesh, sim.ref, out / f"fields_{n:04d}.vtk")
    failed = [r.step for r in res.records if not r.converged]
    if failed:
        log.warning("staggered loop hit the iteration cap at steps %s", failed)
    log.info("%d steps in %.1f s, output in %s", n, res.wall_time, out)
    return 0


def cmd_list(args) -> int:
    for name, path in shipped_scenarios().items():
        cfg = load_config(path)
        g = cfg.geometry
        print(f"{name:<18} {g.nx}x{g.ny} m={cfg.m} steps={cfg.loading.n_steps} mode={cfg.mode}")
    return 0


def cmd_validate(args) -> int:
    path, cfg = _load(args.config)
    print(f"{path}: ok ({cfg.name}, h={cfg.h:g}, m={cfg.m}, delta*={cfg.delta_star:g})")
    return 0


COMMANDS = {"run": cmd_run, "list-scenarios": cmd_list, "validate": cmd_validate}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, OSError) as exc:
        print(f"pfxfem: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
