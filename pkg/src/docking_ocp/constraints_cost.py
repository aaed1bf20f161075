"""Docking residuals, path constraints and the Bolza cost."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dynamics import (NORM_TOL, NX, POS, Q_S, Q_T, THRUST, TORQUE, VEL, W_S, W_T,
                       check_unit, rotation_matrix_derivative, rotation_matrix_unchecked)
from .errors import ConfigError, DomainError

N_TERMINAL = 13


@dataclass(frozen=True)
class DockingGeometry:
    """Body-fixed docking points and safety-sphere radii [m]."""

    d_s: tuple
    d_t: tuple
    r_s: float
    r_t: float

    def __post_init__(self):
        if not (self.r_s > 0 and self.r_t > 0):
            raise ConfigError(f"safety radii must be positive, got rS={self.r_s}, rT={self.r_t}")
        object.__setattr__(self, "d_s", tuple(float(v) for v in self.d_s))
        object.__setattr__(self, "d_t", tuple(float(v) for v in self.d_t))

    @property
    def offset(self):
        """``dT - dS`` in body coordinates."""
        return np.subtract(self.d_t, self.d_s)

    @property
    def docking_distance(self):
        return float(np.linalg.norm(self.offset))

    def check_feasible(self, margin=0.0):
        """Raise ConfigError if docking would violate the keep-out sphere."""
        need = self.r_s + self.r_t + margin
        if self.docking_distance < need:
            raise ConfigError(
                f"docking distance |dT - dS| = {self.docking_distance:g} m is smaller than "
                f"rS + rT = {need:g} m; the terminal condition contradicts collision avoidance")


@dataclass(frozen=True)
class CostWeights:
    l_tf: float = 1.0
    l_u: float = 1.0
    l_m: float = 1.0

    def __post_init__(self):
        w = (self.l_tf, self.l_u, self.l_m)
        if any(not np.isfinite(v) or v < 0 for v in w):
            raise ConfigError(f"cost weights must be nonnegative, got {w}")
        if all(v == 0 for v in w):
            raise ConfigError("at least one cost weight must be positive")


@dataclass(frozen=True)
class ControlBounds:
    """Thrust-norm and per-axis torque limits.

    With ``thrust_bound_mode="literal"`` the squared thrust norm is bounded by
    ``u_max`` itself; ``"squared"`` bounds it by ``u_max**2`` instead.
    """

    u_max: float
    m_max: float
    thrust_bound_mode: str = "literal"

    def __post_init__(self):
        if not (self.u_max > 0 and self.m_max > 0):
            raise ConfigError(f"control bounds must be positive, got u_max={self.u_max}, "
                              f"m_max={self.m_max}")
        if self.thrust_bound_mode not in ("literal", "squared"):
            raise ConfigError(f"unknown thrust bound mode {self.thrust_bound_mode!r}",
                              field="thrust_bound_mode")

    @property
    def thrust_sq_limit(self):
        return self.u_max if self.thrust_bound_mode == "literal" else self.u_max**2


class CostBreakdown(NamedTuple):
    J: float
    u_total: float
    m_total: float


def docking_position_residual(s, g, norm_tol=NORM_TOL):
    s = np.asarray(s, dtype=float)
    r = rotation_matrix_unchecked(check_unit(s[Q_S], norm_tol))
    return r.T @ g.offset - s[POS]


def docking_velocity_residual(s, g, n, norm_tol=NORM_TOL):
    s = np.asarray(s, dtype=float)
    r = rotation_matrix_unchecked(check_unit(s[Q_S], norm_tol))
    w_e = r.T @ s[W_S] - np.array([0.0, 0.0, n])
    return np.cross(w_e, r.T @ g.offset) - s[VEL]


def attitude_match_residual(s):
    s = np.asarray(s, dtype=float)
    return np.concatenate([s[Q_T] - s[Q_S], s[W_T] - s[W_S]])


def collision_margin(s, g, margin=0.0):
    """``|r|^2 - (rS + rT + margin)^2``; nonnegative when the spheres are clear."""
    r = np.asarray(s, dtype=float)[..., POS]
    return np.sum(r * r, axis=-1) - (g.r_s + g.r_t + margin) ** 2


def thrust_margin(c, b):
    u = np.asarray(c, dtype=float)[..., THRUST]
    return b.thrust_sq_limit - np.sum(u * u, axis=-1)


def running_cost(c, w):
    c = np.asarray(c, dtype=float)
    u, m = c[..., THRUST], c[..., TORQUE]
    return w.l_u * np.sum(u * u, axis=-1) + w.l_m * np.sum(m * m, axis=-1)


def total_cost(times, controls, w, rtol=1e-9):
    """Cost of a discrete trajectory on a uniform grid.

    The integral is the left-endpoint sum over nodes ``0..N-1``; controls at
    the final node do not contribute.
    """
    times = np.asarray(times, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise DomainError("a trajectory needs at least two nodes")
    steps = np.diff(times)
    dt = (times[-1] - times[0]) / (times.size - 1)
    if not dt > 0 or np.max(np.abs(steps - dt)) > rtol * max(abs(dt), 1.0):
        raise DomainError("cost quadrature requires a uniform, increasing time grid")
    t_f = float(times[-1] - times[0])
    u, m = controls[:-1, THRUST], controls[:-1, TORQUE]
    u_total = float(dt * np.sum(u * u))
    m_total = float(dt * np.sum(m * m))
    return CostBreakdown(w.l_tf * t_f + w.l_u * u_total + w.l_m * m_total, u_total, m_total)


# -- terminal block used by the transcription --------------------------------

def _scaled_rotation(q, with_derivative=False):
    """``R(q) / |q|^2``: equal to ``R(q)`` on unit quaternions and a proper
    rotation for any nonzero ``q``.

    Solver iterates are not exactly unit norm.  The literal ``R(q)`` grows with
    ``|q|^2``, which would let small defect violations that accumulate into norm
    drift shorten the docking offset; the scaled form removes that coupling.
    """
    nq = q @ q
    r = rotation_matrix_unchecked(q) / nq
    if not with_derivative:
        return r
    dr = rotation_matrix_derivative(q) / nq
    dr = dr - 2.0 * q[:, None, None] * r[None, :, :] / nq
    return r, dr


def terminal_residuals(s, g, n):
    """Stacked terminal equalities: attitude match (7), position (3), velocity (3).

    No norm check; evaluated at solver iterates with the rotation scaled by
    ``1 / |qS|^2`` (see ``_scaled_rotation``).  Complex input is supported.
    """
    s = np.asarray(s)
    r = _scaled_rotation(s[Q_S])
    p = r.T @ g.offset
    w_e = r.T @ s[W_S] - np.array([0.0, 0.0, n])
    return np.concatenate([
        s[Q_T] - s[Q_S],
        s[W_T] - s[W_S],
        p - s[POS],
        np.cross(w_e, p) - s[VEL],
    ])


def terminal_jacobian(s, g, n):
    """Jacobian of ``terminal_residuals`` w.r.t. the 20-state, ``(13, 20)``."""
    s = np.asarray(s)
    q, w = s[Q_S], s[W_S]
    d = g.offset
    r, dr = _scaled_rotation(q, with_derivative=True)
    p = r.T @ d
    w_e = r.T @ w - np.array([0.0, 0.0, n])
    jac = np.zeros((N_TERMINAL, NX), dtype=s.dtype)
    eye3 = np.eye(3)
    jac[0:4, Q_T] = np.eye(4)
    jac[0:4, Q_S] = -np.eye(4)
    jac[4:7, W_T] = eye3
    jac[4:7, W_S] = -eye3
    jac[7:10, POS] = -eye3
    jac[10:13, VEL] = -eye3
    for i in range(4):
        dp = dr[i].T @ d
        jac[7:10, Q_S.start + i] = dp
        jac[10:13, Q_S.start + i] = np.cross(dr[i].T @ w, p) + np.cross(w_e, dp)
    # d(a x p)/da = -[p]x
    px = np.array([[0, -p[2], p[1]], [p[2], 0, -p[0]], [-p[1], p[0], 0]])
    jac[10:13, W_S] = -px @ r.T
    return jac


def terminal_hessian(s, g, n, weights, h=1e-20):
    """``sum_i weights[i] * d^2 residual_i / ds^2`` by complex-step on the Jacobian."""
    s = np.asarray(s, dtype=float)
    weights = np.asarray(weights, dtype=float)
    hess = np.zeros((NX, NX))
    for j in list(range(Q_S.start, Q_S.stop)) + list(range(W_S.start, W_S.stop)):
        sc = s.astype(complex)
        sc[j] += 1j * h
        hess[:, j] = weights @ terminal_jacobian(sc, g, n).imag / h
    return 0.5 * (hess + hess.T)
