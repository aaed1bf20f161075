"""Optimal control of a servicer satellite docking to a tumbling target."""

from .constraints_cost import ControlBounds, CostBreakdown, CostWeights, DockingGeometry, total_cost
from .dynamics import BodyParams, InertiaTensor
from .errors import ConfigError, DomainError, PhysicalityWarning
from .estimator import DockingOptimizer
from .pipeline import RunOptions, run_propagate, run_solve
from .results import SolutionTrajectory, export_report, export_trajectory, read_trajectory_csv
from .scenario import ScenarioConfig, flyaround, load_scenario
from .solver import (NlpProblem, SolveReport, SolverOptions, Status, derivative_check,
                     kkt_residual, solve)
from .transcription import TranscribedNLP, initial_guess, transcribe

__all__ = [
    "BodyParams", "ConfigError", "ControlBounds", "CostBreakdown", "CostWeights",
    "DockingGeometry", "DockingOptimizer", "DomainError", "InertiaTensor", "NlpProblem",
    "PhysicalityWarning", "RunOptions", "ScenarioConfig", "SolutionTrajectory", "SolveReport",
    "SolverOptions", "Status", "TranscribedNLP", "derivative_check", "export_report",
    "export_trajectory", "flyaround", "initial_guess", "kkt_residual", "load_scenario",
    "read_trajectory_csv", "run_propagate", "run_solve", "solve", "total_cost", "transcribe",
]
