"""Post-processing and persistence of solved trajectories."""

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints_cost import collision_margin, thrust_margin, total_cost
from .dynamics import NU, NX, Q_S, Q_T, THRUST, euler_yxz, rotation_matrix_unchecked
from .errors import DomainError
from .transcription import pack, unpack

STATE_COLUMNS = ("x", "y", "z", "vx", "vy", "vz", "wSx", "wSy", "wSz", "wTx", "wTy", "wTz",
                 "qS1", "qS2", "qS3", "qS4", "qT1", "qT2", "qT3", "qT4")
CONTROL_COLUMNS = ("ux", "uy", "uz")
BODY_THRUST_COLUMNS = ("u1", "u2", "u3")
TORQUE_COLUMNS = ("mx", "my", "mz")
EULER_COLUMNS = ("phiS", "thetaS", "psiS", "phiT", "thetaT", "psiT")
COLUMNS = (("k", "t") + STATE_COLUMNS + CONTROL_COLUMNS + BODY_THRUST_COLUMNS + TORQUE_COLUMNS
           + EULER_COLUMNS + ("collision_margin", "gimbalS", "gimbalT"))


@dataclass
class SolutionTrajectory:
    t_f: float
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    body_thrust: np.ndarray
    euler_s: np.ndarray
    euler_t: np.ndarray
    gimbal_s: np.ndarray
    gimbal_t: np.ndarray
    J: float
    u_total: float
    m_total: float
    collision: np.ndarray
    thrust: np.ndarray
    #: plain-data summary of the SolveReport, empty for re-imported files
    report: dict = field(default_factory=dict)
    solve_report: object = None

    @property
    def steps(self):
        return self.states.shape[0] - 1

    def quaternion_drift(self):
        drift = [np.abs(np.sum(self.states[:, b] ** 2, axis=1) - 1.0) for b in (Q_S, Q_T)]
        return float(max(np.max(d) for d in drift))


def _euler_rows(Q):
    out = np.empty((Q.shape[0], 3))
    flags = np.zeros(Q.shape[0], dtype=int)
    for k, q in enumerate(Q):
        phi, theta, psi, degenerate = euler_yxz(q)
        out[k] = phi, theta, psi
        flags[k] = int(degenerate)
    return out, flags


def build_trajectory(z, scenario, report=None):
    """Assemble a ``SolutionTrajectory`` from a decision vector."""
    X, U, t_f = unpack(z)
    x0 = scenario.initial_state()
    # the initial condition holds to solver tolerance; store it exactly
    if np.max(np.abs(X[0] - x0)) <= 1e-8:
        X[0] = x0
    times = np.linspace(0.0, t_f, X.shape[0])
    body = np.empty((X.shape[0], 3))
    for k in range(X.shape[0]):
        # unchecked on purpose: converged nodes are unit only to solver tolerance
        q = X[k, Q_S] / np.linalg.norm(X[k, Q_S])
        body[k] = rotation_matrix_unchecked(q) @ U[k, THRUST]
    es, gs = _euler_rows(X[:, Q_S])
    et, gt = _euler_rows(X[:, Q_T])
    cost = total_cost(times, U, scenario.weights)
    summary = {}
    if report is not None:
        summary = {
            "status": report.status.value,
            "message": report.message,
            "iterations": report.iterations,
            "wall_time_s": report.wall_time,
            "objective": report.objective,
            "max_eq_violation": report.max_eq_violation,
            "min_ineq_margin": report.min_ineq_margin,
            "kkt": report.kkt._asdict(),
        }
    return SolutionTrajectory(
        t_f=float(t_f), times=times, states=X, controls=U, body_thrust=body,
        euler_s=es, euler_t=et, gimbal_s=gs, gimbal_t=gt,
        J=cost.J, u_total=cost.u_total, m_total=cost.m_total,
        collision=collision_margin(X, scenario.geometry, scenario.safety_margin),
        thrust=thrust_margin(U, scenario.bounds), report=summary, solve_report=report)


# -- files ----------------------------------------------------------------

def _fmt(v):
    return format(float(v), ".17g")


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_csv(traj):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for k in range(traj.states.shape[0]):
        row = [str(k), _fmt(traj.times[k])]
        row += [_fmt(v) for v in traj.states[k]]
        row += [_fmt(v) for v in traj.controls[k, THRUST]]
        row += [_fmt(v) for v in traj.body_thrust[k]]
        row += [_fmt(v) for v in traj.controls[k, 3:]]
        row += [_fmt(v) for v in traj.euler_s[k]] + [_fmt(v) for v in traj.euler_t[k]]
        row += [_fmt(traj.collision[k]), str(traj.gimbal_s[k]), str(traj.gimbal_t[k])]
        w.writerow(row)
    return buf.getvalue()


def export_trajectory(traj, path):
    atomic_write(path, trajectory_csv(traj))


def read_trajectory_csv(path):
    """Columns of an exported CSV as a dict of arrays (exact round trip)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise DomainError(f"{path}: unexpected header")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return {name: data[:, j] for j, name in enumerate(COLUMNS)}


def report_text(traj):
    lines = [
        f"t_f                     {_fmt(traj.t_f)} s",
        f"J                       {_fmt(traj.J)}",
        f"u_total                 {_fmt(traj.u_total)}",
        f"m_total                 {_fmt(traj.m_total)}",
        f"steps                   {traj.steps}",
        f"min |r|^2               {_fmt(np.min(np.sum(traj.states[:, :3] ** 2, axis=1)))} m^2",
        f"min collision           {_fmt(np.min(traj.collision))}",
        f"min thrust              {_fmt(np.min(traj.thrust))}",
        f"quat drift              {_fmt(traj.quaternion_drift())}",
    ]
    rep = traj.report
    if rep:
        lines += [
            f"status                  {rep['status']}",
            f"iterations              {rep['iterations']}",
            f"wall time               {rep['wall_time_s']:.2f} s",
            f"max eq viol             {_fmt(rep['max_eq_violation'])}",
        ]
        lines += [f"{'kkt ' + k:<24}{_fmt(v)}" for k, v in rep["kkt"].items()]
        if rep.get("message"):
            lines.append(f"message                 {rep['message']}")
    return "\n".join(lines) + "\n"


def export_report(traj, path):
    atomic_write(path, report_text(traj))


def plot_series(traj):
    """Plot-ready series for the position/thrust, attitude/torque and 3-D path figures."""
    t = traj.times.tolist()
    X, U = traj.states, traj.controls
    return {
        "position_thrust": {
            "t": t,
            "x": X[:, 0].tolist(), "y": X[:, 1].tolist(), "z": X[:, 2].tolist(),
            "u1": traj.body_thrust[:, 0].tolist(), "u2": traj.body_thrust[:, 1].tolist(),
            "u3": traj.body_thrust[:, 2].tolist(),
        },
        "attitude_torque": {
            "t": t,
            "euler_servicer": traj.euler_s.tolist(), "euler_target": traj.euler_t.tolist(),
            "omega_servicer": X[:, 6:9].tolist(), "omega_target": X[:, 9:12].tolist(),
            "torque": U[:, 3:].tolist(),
        },
        "path_3d": {"x": X[:, 0].tolist(), "y": X[:, 1].tolist(), "z": X[:, 2].tolist()},
    }


def export_plot_series(traj, path):
    atomic_write(path, json.dumps(plot_series(traj), indent=1))


def trajectory_from_columns(cols, scenario):
    """Rebuild a trajectory from ``read_trajectory_csv`` output."""
    X = np.column_stack([cols[c] for c in STATE_COLUMNS])
    U = np.column_stack([cols[c] for c in CONTROL_COLUMNS + TORQUE_COLUMNS])
    if X.shape[1] != NX or U.shape[1] != NU:
        raise DomainError("column layout mismatch")
    return build_trajectory(pack(X, U, cols["t"][-1]), scenario)
