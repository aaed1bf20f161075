"""Command line entry point ``docking-ocp``.

Exit codes: 0 success, 2 solver did not converge, 3 configuration error,
4 I/O error.
"""

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .constraints_cost import ControlBounds
from .errors import ConfigError, DomainError
from .pipeline import RunOptions, run_propagate, run_solve, write_outputs
from .propagation import MODES
from .results import atomic_write, read_trajectory_csv, report_text, trajectory_from_columns
from .scenario import flyaround_path, load_scenario
from .verification import run_oracles

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_IO = 0, 2, 3, 4


def _scenario(args):
    path = args.scenario or flyaround_path()
    cfg = load_scenario(path)
    changes = {}
    if getattr(args, "steps", None):
        changes["steps"] = args.steps
    if getattr(args, "no_collision_constraint", False):
        changes["collision_constraint"] = False
    if getattr(args, "thrust_bound_mode", None):
        b = cfg.bounds
        changes["bounds"] = ControlBounds(b.u_max, b.m_max, args.thrust_bound_mode)
    return cfg.replace(**changes) if changes else cfg


def cmd_solve(args):
    cfg = _scenario(args)
    opts = RunOptions(steps=cfg.steps, kkt_tol=args.kkt_tol, seed=args.seed,
                      tf_guess=args.tf_guess, verbose=args.verbose)
    traj = run_solve(cfg, opts, out=args.out)
    sys.stdout.write(report_text(traj))
    return EXIT_OK if traj.solve_report.converged else EXIT_SOLVER


def cmd_propagate(args):
    cfg = _scenario(args)
    times, X = run_propagate(cfg, args.t_end, args.mode, args.dt)
    lines = [",".join(["t"] + [f"s{i}" for i in range(X.shape[1])])]
    lines += [",".join(format(v, ".17g") for v in np.concatenate([[t], x]))
              for t, x in zip(times, X)]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write(Path(args.out) / f"propagate_{args.mode}.csv", text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args):
    checks = run_oracles(_scenario(args))
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_SOLVER


def cmd_report(args):
    cfg = _scenario(args)
    src = Path(args.out) / "trajectory.csv"
    traj = trajectory_from_columns(read_trajectory_csv(src), cfg)
    if args.rewrite:
        write_outputs(traj, args.out)
    sys.stdout.write(report_text(traj))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="docking-ocp",
                                 description="Optimal docking maneuvers by direct transcription.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", help="scenario file (default: shipped flyaround)")
        p.add_argument("--steps", type=int, help="number of discretization steps N")
        p.add_argument("--no-collision-constraint", action="store_true")
        p.add_argument("--thrust-bound-mode", choices=("literal", "squared"))

    p = sub.add_parser("solve", help="solve the optimal control problem")
    common(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--kkt-tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int)
    p.add_argument("--tf-guess", type=float, default=400.0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("propagate", help="zero-control open-loop propagation")
    common(p)
    p.add_argument("--out")
    p.add_argument("--t-end", type=float, default=400.0)
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--mode", choices=MODES, default="reference-rk")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("verify", help="run the oracle suite")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="re-read trajectory.csv from --out and print the report")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--rewrite", action="store_true", help="also rewrite report and plot data")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
