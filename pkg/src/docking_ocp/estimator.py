"""scikit-learn style wrapper around ``run_solve``."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .constraints_cost import ControlBounds
from .pipeline import RunOptions, run_solve
from .scenario import flyaround, load_scenario


class DockingOptimizer(BaseEstimator):
    """Fit an optimal docking trajectory to a scenario.

    ``fit`` takes a ``ScenarioConfig`` or a path to a scenario file (default:
    the shipped flyaround).  ``predict`` returns the states linearly
    interpolated at the requested times.
    """

    def __init__(self, steps=None, collision_constraint=True, thrust_bound_mode=None,
                 kkt_tol=1e-6, tf_guess=400.0, coarse_steps=40, seed=None):
        self.steps = steps
        self.collision_constraint = collision_constraint
        self.thrust_bound_mode = thrust_bound_mode
        self.kkt_tol = kkt_tol
        self.tf_guess = tf_guess
        self.coarse_steps = coarse_steps
        self.seed = seed

    def _config(self, scenario):
        if scenario is None:
            cfg = flyaround()
        elif isinstance(scenario, (str, bytes)) or hasattr(scenario, "__fspath__"):
            cfg = load_scenario(scenario)
        else:
            cfg = scenario
        changes = {"collision_constraint": bool(self.collision_constraint)}
        if self.steps is not None:
            changes["steps"] = int(self.steps)
        if self.thrust_bound_mode is not None:
            b = cfg.bounds
            changes["bounds"] = ControlBounds(b.u_max, b.m_max, self.thrust_bound_mode)
        return cfg.replace(**changes)

    def fit(self, scenario=None, y=None):
        cfg = self._config(scenario)
        opts = RunOptions(steps=cfg.steps, kkt_tol=self.kkt_tol, tf_guess=self.tf_guess,
                          coarse_steps=self.coarse_steps, seed=self.seed)
        self.scenario_ = cfg
        self.trajectory_ = run_solve(cfg, opts)
        self.report_ = self.trajectory_.solve_report
        self.t_f_ = self.trajectory_.t_f
        self.cost_ = self.trajectory_.J
        self.converged_ = self.report_.converged
        return self

    def predict(self, times):
        check_is_fitted(self, "trajectory_")
        times = np.atleast_1d(np.asarray(times, dtype=float))
        tr = self.trajectory_
        return np.column_stack([np.interp(times, tr.times, tr.states[:, j])
                                for j in range(tr.states.shape[1])])

    def controls(self, times):
        check_is_fitted(self, "trajectory_")
        times = np.atleast_1d(np.asarray(times, dtype=float))
        tr = self.trajectory_
        # piecewise linear, as assumed by the trapezoidal defects
        return np.column_stack([np.interp(times, tr.times, tr.controls[:, j])
                                for j in range(tr.controls.shape[1])])
