"""Equations of motion for the coupled servicer/target system.

State vectors are plain ``(20,)`` arrays ordered as

    [x, y, z, vx, vy, vz, wS(3), wT(3), qS(4), qT(4)]

and controls are ``(6,)`` arrays ``[ux, uy, uz, mx, my, mz]``.  Quaternions are
vector-first, scalar-last.  The slice constants below name the blocks.

Every function here is pure.  The ``*_batch`` helpers operate on stacks of
nodes along the leading axis and are what the transcription layer calls.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PhysicalityWarning

NX = 20
NU = 6

POS = slice(0, 3)
VEL = slice(3, 6)
TRANS = slice(0, 6)
W_S = slice(6, 9)
W_T = slice(9, 12)
Q_S = slice(12, 16)
Q_T = slice(16, 20)

THRUST = slice(0, 3)
TORQUE = slice(3, 6)

#: degree -> radian factor used by the scenario tables
DEG = 0.017453

#: quaternion norm tolerance used inside the optimizer
NORM_TOL = 1e-6
#: quaternion norm tolerance for constructed/oracle values
STRICT_NORM_TOL = 1e-9

IDENTITY_QUATERNION = np.array([0.0, 0.0, 0.0, 1.0])

# d Omega / d w_l for the kinematics matrix Omega(w)
_OMEGA_BASIS = np.array(
    [
        [[0, 0, 0, 1], [0, 0, 1, 0], [0, -1, 0, 0], [-1, 0, 0, 0]],
        [[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]],
        [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]],
    ],
    dtype=float,
)


@dataclass(frozen=True)
class InertiaTensor:
    """Principal moments of inertia [kg m^2].

    Moments that break the triangle inequality cannot belong to a rigid body.
    They raise with ``strict=True``; otherwise a warning is issued, since the
    shipped flyaround servicer (2000, 5000, 2000) is such a case and the
    equations of motion remain well defined for it.
    """

    jxx: float
    jyy: float
    jzz: float
    strict: bool = False

    def __post_init__(self):
        j = self.as_array()
        if not np.all(np.isfinite(j)) or np.any(j <= 0):
            raise DomainError(f"principal moments must be positive, got {tuple(j)}")
        if not self.is_physical():
            msg = f"principal moments violate the triangle inequality: {tuple(j.tolist())}"
            if self.strict:
                raise DomainError(msg)
            warnings.warn(msg, PhysicalityWarning, stacklevel=3)

    def is_physical(self):
        a, b, c = self.as_array()
        return a + b >= c and b + c >= a and a + c >= b

    def as_array(self):
        return np.array([self.jxx, self.jyy, self.jzz], dtype=float)


@dataclass(frozen=True)
class BodyParams:
    """Servicer mass, both inertia tensors and the reference mean motion."""

    mass: float
    inertia_s: InertiaTensor
    inertia_t: InertiaTensor
    mean_motion: float

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError(f"mass must be positive, got {self.mass}")
        if not self.mean_motion > 0:
            raise DomainError(f"mean motion must be positive, got {self.mean_motion}")


def mean_motion(gm, a):
    """Angular rate ``sqrt(GM / a^3)`` of a circular reference orbit."""
    if not (gm > 0 and a > 0):
        raise DomainError(f"GM and a must be positive, got GM={gm}, a={a}")
    return float(np.sqrt(gm / a**3))


def make_state(r=(0, 0, 0), v=(0, 0, 0), w_s=(0, 0, 0), w_t=(0, 0, 0),
               q_s=IDENTITY_QUATERNION, q_t=IDENTITY_QUATERNION):
    """Assemble a 20-state from its blocks."""
    s = np.empty(NX)
    s[POS] = r
    s[VEL] = v
    s[W_S] = w_s
    s[W_T] = w_t
    s[Q_S] = q_s
    s[Q_T] = q_t
    return s


def check_unit(q, norm_tol=NORM_TOL):
    q = np.asarray(q, dtype=float)
    drift = abs(float(q @ q) - 1.0)
    if not drift <= norm_tol:
        raise DomainError(f"quaternion {q} is not unit norm (|q|^2 - 1 = {drift:.3e})")
    return q


# -- translational motion ---------------------------------------------------

def cw_derivative(s, u, n, m):
    """Right-hand side of the Clohessy-Wiltshire equations with thrust ``u``."""
    if not m > 0:
        raise DomainError(f"mass must be positive, got {m}")
    x, y, z, vx, vy, vz = np.asarray(s, dtype=float)
    ux, uy, uz = np.asarray(u, dtype=float)
    return np.array([
        vx,
        vy,
        vz,
        2 * n * vy + 3 * n**2 * x + ux / m,
        -2 * n * vx + uy / m,
        -(n**2) * z + uz / m,
    ])


def cw_transition(n, t):
    """6x6 state transition matrix of the unforced CW equations."""
    c, s = np.cos(n * t), np.sin(n * t)
    nt = n * t
    return np.array([
        [4 - 3 * c, 0, 0, s / n, 2 * (1 - c) / n, 0],
        [6 * (s - nt), 1, 0, 2 * (c - 1) / n, (4 * s - 3 * nt) / n, 0],
        [0, 0, c, 0, 0, s / n],
        [3 * n * s, 0, 0, c, 2 * s, 0],
        [6 * n * (c - 1), 0, 0, -2 * s, 4 * c - 3, 0],
        [0, 0, -n * s, 0, 0, c],
    ])


def cw_analytic(s0, n, t):
    """Closed-form zero-thrust CW solution at time ``t``."""
    if not n > 0:
        raise DomainError(f"mean motion must be positive, got {n}")
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    return cw_transition(n, t) @ np.asarray(s0, dtype=float)


# -- rotational motion ------------------------------------------------------

def omega_matrix(w):
    """Kinematics matrix ``Omega(w)`` so that ``dq/dt = Omega(w) q / 2``."""
    return np.tensordot(np.asarray(w, dtype=float), _OMEGA_BASIS, axes=(0, 0))


def quaternion_derivative(q, w):
    return 0.5 * omega_matrix(w) @ np.asarray(q, dtype=float)


def gyro_derivative(w, inertia, m=(0.0, 0.0, 0.0)):
    """Euler's equations in principal axes driven by body torque ``m``."""
    j = inertia.as_array() if isinstance(inertia, InertiaTensor) else np.asarray(inertia, float)
    wx, wy, wz = np.asarray(w, dtype=float)
    mx, my, mz = np.asarray(m, dtype=float)
    return np.array([
        (wy * wz * (j[1] - j[2]) + mx) / j[0],
        (wx * wz * (j[2] - j[0]) + my) / j[1],
        (wx * wy * (j[0] - j[1]) + mz) / j[2],
    ])


def rotation_matrix(q, norm_tol=NORM_TOL):
    """Matrix mapping reference-frame vectors into the body frame of ``q``.

    Raises DomainError if ``q`` is further than ``norm_tol`` from unit norm.
    """
    return rotation_matrix_unchecked(check_unit(q, norm_tol))


def rotation_matrix_unchecked(q):
    """Rotation matrix formula evaluated without a norm check.

    Accepts stacks ``(..., 4)`` and complex input (used for complex-step
    differentiation).
    """
    q = np.asarray(q)
    q1, q2, q3, q4 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3), dtype=q.dtype)
    r[..., 0, 0] = q1 * q1 - q2 * q2 - q3 * q3 + q4 * q4
    r[..., 0, 1] = 2 * (q1 * q2 + q3 * q4)
    r[..., 0, 2] = 2 * (q1 * q3 - q2 * q4)
    r[..., 1, 0] = 2 * (q1 * q2 - q3 * q4)
    r[..., 1, 1] = -q1 * q1 + q2 * q2 - q3 * q3 + q4 * q4
    r[..., 1, 2] = 2 * (q2 * q3 + q1 * q4)
    r[..., 2, 0] = 2 * (q1 * q3 + q2 * q4)
    r[..., 2, 1] = 2 * (q2 * q3 - q1 * q4)
    r[..., 2, 2] = -q1 * q1 - q2 * q2 + q3 * q3 + q4 * q4
    return r


def rotation_matrix_derivative(q):
    """Partial derivatives ``dR/dq_i`` stacked as a ``(4, 3, 3)`` array."""
    q1, q2, q3, q4 = np.asarray(q)
    return 2 * np.array([
        [[q1, q2, q3], [q2, -q1, q4], [q3, -q4, -q1]],
        [[-q2, q1, -q4], [q1, q2, q3], [q4, q3, -q2]],
        [[-q3, q4, q1], [-q4, -q3, q2], [q1, q2, q3]],
        [[q4, q3, -q2], [-q3, q4, q1], [q2, -q1, q4]],
    ])


def inertial_angular_velocity(q, w, n, norm_tol=NORM_TOL):
    """Body rate expressed in the inertial frame, ``R^T w - (0, 0, n)``."""
    r = rotation_matrix(q, norm_tol)
    return r.T @ np.asarray(w, dtype=float) - np.array([0.0, 0.0, n])


def thrust_to_body(q, u, norm_tol=NORM_TOL):
    """Reference-frame thrust expressed in the body frame of ``q``."""
    return rotation_matrix(q, norm_tol) @ np.asarray(u, dtype=float)


# -- coupled system ---------------------------------------------------------

def full_derivative(s, c, p, norm_tol=None):
    """Time derivative of the 20-state under control ``c``.

    ``norm_tol`` enables the unit-quaternion precondition check; the
    optimizer leaves it off.
    """
    s = np.asarray(s, dtype=float)
    if norm_tol is not None:
        check_unit(s[Q_S], norm_tol)
        check_unit(s[Q_T], norm_tol)
    return derivative_batch(s[None, :], np.asarray(c, dtype=float)[None, :], p)[0]


def derivative_batch(X, U, p):
    """Row-wise ``full_derivative`` for stacks ``X (K, 20)``, ``U (K, 6)``."""
    n, m = p.mean_motion, p.mass
    js, jt = p.inertia_s.as_array(), p.inertia_t.as_array()
    F = np.empty_like(X)
    F[:, POS] = X[:, VEL]
    F[:, 3] = 2 * n * X[:, 4] + 3 * n**2 * X[:, 0] + U[:, 0] / m
    F[:, 4] = -2 * n * X[:, 3] + U[:, 1] / m
    F[:, 5] = -(n**2) * X[:, 2] + U[:, 2] / m
    F[:, W_S] = _gyro_batch(X[:, W_S], js, U[:, TORQUE])
    F[:, W_T] = _gyro_batch(X[:, W_T], jt, 0.0)
    F[:, Q_S] = 0.5 * np.einsum("kl,lij,kj->ki", X[:, W_S], _OMEGA_BASIS, X[:, Q_S])
    F[:, Q_T] = 0.5 * np.einsum("kl,lij,kj->ki", X[:, W_T], _OMEGA_BASIS, X[:, Q_T])
    return F


def _gyro_batch(w, j, m):
    wx, wy, wz = w[:, 0], w[:, 1], w[:, 2]
    return np.stack([wy * wz * (j[1] - j[2]), wx * wz * (j[2] - j[0]),
                     wx * wy * (j[0] - j[1])], axis=1) / j + np.asarray(m) / j


def _gyro_jacobian_batch(w, j):
    wx, wy, wz = w[:, 0], w[:, 1], w[:, 2]
    k = w.shape[0]
    out = np.zeros((k, 3, 3))
    a, b, c = (j[1] - j[2]) / j[0], (j[2] - j[0]) / j[1], (j[0] - j[1]) / j[2]
    out[:, 0, 1], out[:, 0, 2] = a * wz, a * wy
    out[:, 1, 0], out[:, 1, 2] = b * wz, b * wx
    out[:, 2, 0], out[:, 2, 1] = c * wy, c * wx
    return out


def _xi_batch(q):
    """Matrix ``Xi(q)`` with ``Omega(w) q = Xi(q) w``."""
    return np.einsum("lij,kj->kil", _OMEGA_BASIS, q)


def jacobian_batch(X, p):
    """State and control Jacobians ``A (K, 20, 20)`` and ``B (20, 6)``.

    ``B`` is constant so a single matrix is returned for it.
    """
    n = p.mean_motion
    js, jt = p.inertia_s.as_array(), p.inertia_t.as_array()
    k = X.shape[0]
    A = np.zeros((k, NX, NX))
    A[:, 0, 3] = A[:, 1, 4] = A[:, 2, 5] = 1.0
    A[:, 3, 0] = 3 * n**2
    A[:, 3, 4] = 2 * n
    A[:, 4, 3] = -2 * n
    A[:, 5, 2] = -(n**2)
    A[:, W_S, W_S] = _gyro_jacobian_batch(X[:, W_S], js)
    A[:, W_T, W_T] = _gyro_jacobian_batch(X[:, W_T], jt)
    A[:, Q_S, Q_S] = 0.5 * np.einsum("kl,lij->kij", X[:, W_S], _OMEGA_BASIS)
    A[:, Q_S, W_S] = 0.5 * _xi_batch(X[:, Q_S])
    A[:, Q_T, Q_T] = 0.5 * np.einsum("kl,lij->kij", X[:, W_T], _OMEGA_BASIS)
    A[:, Q_T, W_T] = 0.5 * _xi_batch(X[:, Q_T])
    B = np.zeros((NX, NU))
    B[3:6, 0:3] = np.eye(3) / p.mass
    B[W_S, TORQUE] = np.diag(1.0 / js)
    return A, B


def weighted_hessian_batch(Y, p):
    """Second derivatives of ``Y[k] . f(x_k, u_k)`` w.r.t. the node state.

    The dynamics are bilinear, so the result depends only on the weights.
    Controls enter affinely and contribute nothing.  Returns ``(K, 20, 20)``.
    """
    js, jt = p.inertia_s.as_array(), p.inertia_t.as_array()
    k = Y.shape[0]
    H = np.zeros((k, NX, NX))
    for w_blk, y_off, j in ((W_S, 6, js), (W_T, 9, jt)):
        o = w_blk.start
        coef = ((j[1] - j[2]) / j[0], (j[2] - j[0]) / j[1], (j[0] - j[1]) / j[2])
        for row, (a, b) in enumerate(((1, 2), (0, 2), (0, 1))):
            v = coef[row] * Y[:, y_off + row]
            H[:, o + a, o + b] += v
            H[:, o + b, o + a] += v
    for w_blk, q_blk in ((W_S, Q_S), (W_T, Q_T)):
        # d^2/dw_l dq_j of y.(Omega(w) q)/2 = (E_l^T y)_j / 2
        cross = 0.5 * np.einsum("lij,ki->klj", _OMEGA_BASIS, Y[:, q_blk])
        H[:, w_blk, q_blk] += cross
        H[:, q_blk, w_blk] += np.transpose(cross, (0, 2, 1))
    return H


def dynamics_sparsity():
    """Structural nonzero masks of ``A`` and ``B``."""
    rng = np.random.default_rng(0)
    X = rng.standard_normal((3, NX))
    p = BodyParams(1.0, InertiaTensor(1.0, 1.5, 2.0), InertiaTensor(1.1, 1.6, 1.9), 0.5)
    A, B = jacobian_batch(X, p)
    return np.any(A != 0, axis=0), B != 0


def hessian_sparsity():
    """Structural nonzero mask of ``weighted_hessian_batch``."""
    p = BodyParams(1.0, InertiaTensor(1.0, 1.5, 2.0), InertiaTensor(1.1, 1.6, 1.9), 0.5)
    H = weighted_hessian_batch(np.ones((1, NX)), p)
    return H[0] != 0


# -- attitude representations ----------------------------------------------

def quaternion_from_rotation_matrix(r):
    """Inverse of ``rotation_matrix`` (Shepperd's method); sign is arbitrary."""
    r = np.asarray(r, dtype=float)
    tr = np.trace(r)
    d = np.array([r[0, 0], r[1, 1], r[2, 2], tr])
    i = int(np.argmax(d))
    if i == 3:
        q4 = 0.5 * np.sqrt(1 + tr)
        q = np.array([(r[1, 2] - r[2, 1]) / (4 * q4), (r[2, 0] - r[0, 2]) / (4 * q4),
                      (r[0, 1] - r[1, 0]) / (4 * q4), q4])
    elif i == 0:
        q1 = 0.5 * np.sqrt(1 + 2 * r[0, 0] - tr)
        q = np.array([q1, (r[0, 1] + r[1, 0]) / (4 * q1), (r[0, 2] + r[2, 0]) / (4 * q1),
                      (r[1, 2] - r[2, 1]) / (4 * q1)])
    elif i == 1:
        q2 = 0.5 * np.sqrt(1 + 2 * r[1, 1] - tr)
        q = np.array([(r[0, 1] + r[1, 0]) / (4 * q2), q2, (r[1, 2] + r[2, 1]) / (4 * q2),
                      (r[2, 0] - r[0, 2]) / (4 * q2)])
    else:
        q3 = 0.5 * np.sqrt(1 + 2 * r[2, 2] - tr)
        q = np.array([(r[0, 2] + r[2, 0]) / (4 * q3), (r[1, 2] + r[2, 1]) / (4 * q3), q3,
                      (r[0, 1] - r[1, 0]) / (4 * q3)])
    return q / np.linalg.norm(q)


def _frame_rotation(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, s], [0, -s, c]])
    if axis == "y":
        return np.array([[c, 0, -s], [0, 1, 0], [s, 0, c]])
    return np.array([[c, s, 0], [-s, c, 0], [0, 0, 1]])


def euler_yxz(q, gimbal_tol=1e-9):
    """Euler angles ``(phi, theta, psi)`` for the y-x-z rotation sequence.

    ``R(q) = Rz(psi) Rx(theta) Ry(phi)`` with frame rotations matching the
    quaternion convention.  Near gimbal lock ``psi`` is set to zero.  Returns
    ``(phi, theta, psi, degenerate)``.
    """
    q = np.asarray(q, dtype=float)
    r = rotation_matrix_unchecked(q / np.linalg.norm(q))
    st = float(np.clip(-r[2, 1], -1.0, 1.0))
    theta = float(np.arcsin(st))
    if abs(abs(st) - 1.0) <= gimbal_tol:
        return float(np.arctan2(-r[0, 2], r[0, 0])), theta, 0.0, True
    phi = float(np.arctan2(r[2, 0], r[2, 2]))
    psi = float(np.arctan2(r[0, 1], r[1, 1]))
    return phi, theta, psi, False


def quaternion_from_euler_yxz(phi, theta, psi):
    r = _frame_rotation("z", psi) @ _frame_rotation("x", theta) @ _frame_rotation("y", phi)
    return quaternion_from_rotation_matrix(r)
