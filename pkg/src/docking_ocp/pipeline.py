"""End-to-end runs: transcribe, solve, post-process, persist."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError
from .propagation import MODES, propagate
from .results import build_trajectory, export_plot_series, export_report, export_trajectory
from .solver import SolverOptions, solve
from .transcription import initial_guess, perturb, resample, transcribe

logger = logging.getLogger(__name__)


@dataclass
class RunOptions:
    steps: int = None
    kkt_tol: float = 1e-6
    max_iterations: int = 3000
    tf_guess: float = 400.0
    seed: int = None
    #: uniform noise added to the fine-grid initial guess
    perturbation: float = 0.0
    #: coarse grid used to warm-start the fine one; 0 disables continuation
    coarse_steps: int = 40
    warm_mu: float = 1e-3
    derivative_check: bool = False
    verbose: bool = False


def _solver_options(opts, **kw):
    base = dict(kkt_tol=opts.kkt_tol, max_iterations=opts.max_iterations, seed=opts.seed,
                verbose=opts.verbose)
    base.update(kw)
    return SolverOptions(**base)


def starting_point(config, opts):
    """Fine-grid initial guess and the barrier parameter to start from.

    The keep-out detour guess is solved on a coarse grid first when the fine
    grid is much larger; its solution is resampled and the fine solve starts
    with a small barrier parameter.  Falls back to the detour guess itself if
    the coarse solve does not converge.
    """
    steps = int(opts.steps or config.steps)
    mu0 = SolverOptions.mu_init
    z0 = initial_guess(config, steps, opts.tf_guess, detour=True)
    if opts.coarse_steps and steps >= 1.5 * opts.coarse_steps:
        coarse = transcribe(config, opts.coarse_steps)
        zc = initial_guess(config, opts.coarse_steps, opts.tf_guess, detour=True)
        rep = solve(coarse.as_problem(), zc, _solver_options(opts, verbose=False))
        logger.info("coarse solve (N=%d): %s", opts.coarse_steps, rep.summary())
        if rep.converged:
            z0, mu0 = resample(rep.x, steps), opts.warm_mu
    if opts.perturbation > 0:
        z0 = perturb(z0, opts.perturbation, opts.seed)
    return z0, mu0


def run_solve(config, opts=None, out=None):
    """Solve the docking problem for ``config``; write outputs to ``out`` if given."""
    opts = opts or RunOptions()
    steps = int(opts.steps or config.steps)
    nlp = transcribe(config, steps)
    z0, mu0 = starting_point(config, opts)
    report = solve(nlp.as_problem(), z0,
                   _solver_options(opts, mu_init=mu0, derivative_check=opts.derivative_check))
    logger.info("solve (N=%d): %s", steps, report.summary())
    traj = build_trajectory(report.x, config, report)
    if out is not None:
        write_outputs(traj, out)
    return traj


def write_outputs(traj, out):
    out = Path(out)
    export_trajectory(traj, out / "trajectory.csv")
    export_report(traj, out / "report.txt")
    export_plot_series(traj, out / "plot_series.json")


def run_propagate(config, t_end, mode="reference-rk", dt=1.0):
    """Zero-control propagation from the scenario's initial state.

    Returns ``(times, states)``; analytic mode yields the translational block only.
    """
    if mode not in MODES:
        raise DomainError(f"unknown propagation mode {mode!r}; choose from {MODES}")
    n = max(1, int(round(t_end / dt)))
    times = np.linspace(0.0, float(t_end), n + 1)
    return times, propagate(config.initial_state(), config.body_params, times, mode)
