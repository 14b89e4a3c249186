"""Command-line entry point.

::

    fastice run --config scenario.ini --out runs/a
    fastice scenario refinement --resolution 4000 --duration 259200 --out runs/b
    fastice validate --config scenario.ini

Exit codes: 0 success, 1 configuration error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .driver import SCENARIOS, builtin_scenario, load_config, run_scenario, validate_config
from .errors import ConfigurationError, SolverError

logger = logging.getLogger("fastice")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


def build_parser():
    p = argparse.ArgumentParser(prog="fastice", description="Iceberg and sea-ice simulator.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario from a config file")
    run.add_argument("--config", required=True, help="INI scenario file")
    run.add_argument("--out", required=True, help="output directory")

    sc = sub.add_parser("scenario", help="run a built-in scenario")
    sc.add_argument("name", choices=SCENARIOS)
    sc.add_argument("--resolution", type=float, help="cell size (m)")
    sc.add_argument("--radius", type=float, help="iceberg radius (m)")
    sc.add_argument("--duration", type=float, help="simulated time (s)")
    sc.add_argument("--dt", type=float, help="time step (s)")
    sc.add_argument("--out", required=True, help="output directory")

    va = sub.add_parser("validate", help="check a config file without running it")
    va.add_argument("--config", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "scenario":
            cfg = builtin_scenario(args.name, resolution=args.resolution, radius=args.radius,
                                   duration=args.duration)
            if args.dt is not None:
                cfg = cfg.replace(dt=args.dt)
        else:
            cfg = load_config(args.config)
        if args.command == "validate":
            mesh = validate_config(cfg)
            print(f"ok: {mesh.n_cells_x} x {mesh.n_cells_y} cells, dt = {cfg.time_step:g} s, "
                  f"{len(cfg.bergs)} icebergs")
            return EXIT_OK
        result = run_scenario(cfg, out_dir=args.out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    grounded = sum(b.grounded for b in result.bergs)
    print(f"done: {len(result.records) - 1} steps, {grounded} grounded icebergs, "
          f"output in {result.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
