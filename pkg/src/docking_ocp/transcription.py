"""Full discretization of the docking problem into a sparse NLP.

Decision vector layout, for ``N`` steps (``N + 1`` nodes)::

    [ states (N+1) x 20 | controls (N+1) x 6 | t_f / TF_SCALE ]

States and controls are stored node-major.  The final time is carried scaled
by ``1 / TF_SCALE`` so that its magnitude matches the other unknowns.

Two rules are available for the quaternion rows of the collocation defect:
``"trapezoidal"`` applies the implicit trapezoidal rule literally, and
``"cayley"`` (the default) uses ``Omega(mean w) (q_k + q_k+1) / 4``, which
agrees with the trapezoid when the rate is constant and conserves the
quaternion norm exactly.  The literal rule conserves
``|q|^2 (1 + (dt/4)^2 |w|^2)`` instead, which makes the component-wise
terminal attitude match unsatisfiable whenever the servicer starts at rest.
"""

import numpy as np
import scipy.sparse as sp

from .constraints_cost import (N_TERMINAL, collision_margin, running_cost, terminal_hessian,
                               terminal_jacobian, terminal_residuals, thrust_margin)
from .dynamics import (_OMEGA_BASIS, NU, NX, POS, Q_S, Q_T, THRUST, TORQUE, VEL, W_S, W_T,
                       derivative_batch, jacobian_batch, rotation_matrix_unchecked,
                       weighted_hessian_batch)
from .errors import DomainError
from .propagation import propagate_reference

TF_SCALE = 100.0
QUATERNION_RULES = ("cayley", "trapezoidal")

_BODIES = ((W_S, Q_S), (W_T, Q_T))
_GYRO_ROWS = np.r_[6:12]


def n_variables(steps):
    return (NX + NU) * (steps + 1) + 1


def steps_from_size(size):
    nodes, rem = divmod(size - 1, NX + NU)
    if rem or nodes < 2:
        raise DomainError(f"length {size} is not a valid decision-vector size")
    return nodes - 1


def pack(states, controls, t_f):
    """Flatten node states, node controls and the final time."""
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if states.ndim != 2 or states.shape[1] != NX or controls.shape != (states.shape[0], NU):
        raise DomainError(f"expected states (K, {NX}) and controls (K, {NU}), got "
                          f"{states.shape} and {controls.shape}")
    return np.concatenate([states.ravel(), controls.ravel(), [t_f / TF_SCALE]])


def unpack(z):
    """Inverse of ``pack``: returns ``(states, controls, t_f)``."""
    z = np.asarray(z, dtype=float)
    steps = steps_from_size(z.size)
    ns = NX * (steps + 1)
    states = z[:ns].reshape(steps + 1, NX).copy()
    controls = z[ns:-1].reshape(steps + 1, NU).copy()
    return states, controls, float(z[-1] * TF_SCALE)


# -- one collocation interval -------------------------------------------------

def interval_rate(X0, X1, U0, U1, p, rule="cayley"):
    """Averaged rate ``Phi`` with ``x1 - x0 = dt * Phi`` on a consistent step."""
    phi = 0.5 * (derivative_batch(X0, U0, p) + derivative_batch(X1, U1, p))
    if rule == "cayley":
        for wb, qb in _BODIES:
            wbar = 0.5 * (X0[:, wb] + X1[:, wb])
            phi[:, qb] = 0.25 * np.einsum("kl,lij,kj->ki", wbar, _OMEGA_BASIS,
                                          X0[:, qb] + X1[:, qb])
    elif rule != "trapezoidal":
        raise DomainError(f"unknown quaternion rule {rule!r}")
    return phi


def interval_jacobians(X0, X1, p, rule="cayley"):
    """``dPhi/dx0``, ``dPhi/dx1`` (each ``(K, 20, 20)``) and ``dPhi/du`` (``(20, 6)``)."""
    A0, B = jacobian_batch(X0, p)
    A1, _ = jacobian_batch(X1, p)
    P0, P1 = 0.5 * A0, 0.5 * A1
    if rule == "cayley":
        for wb, qb in _BODIES:
            wbar = 0.5 * (X0[:, wb] + X1[:, wb])
            om = 0.25 * np.einsum("kl,lij->kij", wbar, _OMEGA_BASIS)
            xi = 0.125 * np.einsum("lij,kj->kil", _OMEGA_BASIS, X0[:, qb] + X1[:, qb])
            P0[:, qb, qb] = P1[:, qb, qb] = om
            P0[:, qb, wb] = P1[:, qb, wb] = xi
    return P0, P1, 0.5 * B


def interval_hessian(Y, p, rule="cayley"):
    """Second derivatives of ``Y[k] . Phi_k`` over the stacked pair ``(x0, x1)``.

    Returns ``(K, 40, 40)``; controls enter linearly and are omitted.
    """
    k = Y.shape[0]
    H = np.zeros((k, 2 * NX, 2 * NX))
    Yg = np.zeros_like(Y)
    Yg[:, _GYRO_ROWS] = Y[:, _GYRO_ROWS]
    if rule == "trapezoidal":
        Yg = Y
    node = 0.5 * weighted_hessian_batch(Yg, p)
    H[:, :NX, :NX] = node
    H[:, NX:, NX:] = node
    if rule == "cayley":
        for wb, qb in _BODIES:
            c = 0.125 * np.einsum("lij,ki->klj", _OMEGA_BASIS, Y[:, qb])
            for a in (0, NX):
                for b in (0, NX):
                    wa = slice(wb.start + a, wb.stop + a)
                    qb_ = slice(qb.start + b, qb.stop + b)
                    H[:, wa, qb_] += c
                    H[:, qb_, wa] += np.transpose(c, (0, 2, 1))
    return H


def trapezoidal_defect(x_k, x_k1, u_k, u_k1, dt, p, rule="cayley"):
    """Collocation residual of one step; zero iff the step is consistent."""
    if not dt > 0:
        raise DomainError(f"step must be positive, got {dt}")
    X0, X1 = np.atleast_2d(np.asarray(x_k, float)), np.atleast_2d(np.asarray(x_k1, float))
    U0, U1 = np.atleast_2d(np.asarray(u_k, float)), np.atleast_2d(np.asarray(u_k1, float))
    return (X1 - X0 - dt * interval_rate(X0, X1, U0, U1, p, rule))[0]


# -- the NLP --------------------------------------------------------------------

def _local_mask(p, rule):
    rng = np.random.default_rng(1)
    X0, X1 = rng.standard_normal((2, 2, NX))
    P0, P1, Bh = interval_jacobians(X0, X1, p, rule)
    eye = np.eye(NX, dtype=bool)
    m0 = np.any(P0 != 0, axis=0) | eye
    m1 = np.any(P1 != 0, axis=0) | eye
    return m0, m1, Bh != 0


class TranscribedNLP:
    """Sparse NLP for one scenario and grid size.

    Equalities are ordered ``[defects (20 N) | initial state (20) | terminal (13)]``,
    terminal rows being quaternion match (4), rate match (3), docking
    position (3) and docking velocity (3).  Inequalities are ``c(z) >= 0``:
    collision margins at every node (when enabled) followed by thrust
    margins at every node.
    """

    def __init__(self, scenario, steps=None, rule="cayley"):
        steps = scenario.steps if steps is None else steps
        if int(steps) != steps or steps < 2:
            raise DomainError(f"need at least two steps, got {steps}")
        if rule not in QUATERNION_RULES:
            raise DomainError(f"unknown quaternion rule {rule!r}")
        self.scenario = scenario
        self.steps = N = int(steps)
        self.rule = rule
        self.params = scenario.body_params
        self.geometry = scenario.geometry
        self.bounds = scenario.bounds
        self.weights = scenario.weights
        self.x0 = scenario.initial_state()
        self.collision = bool(scenario.collision_constraint)
        self.margin = scenario.safety_margin
        self.n = n_variables(N)
        self.n_state = NX * (N + 1)
        self.tau = self.n - 1
        self.n_defect = NX * N
        self.n_eq = self.n_defect + NX + N_TERMINAL
        self.n_ineq = (N + 1) * (2 if self.collision else 1)
        self.scenario_hash = scenario.digest()
        self._build_structure()

    # layout helpers
    def state_cols(self, k):
        return NX * k + np.arange(NX)

    def control_cols(self, k):
        return self.n_state + NU * k + np.arange(NU)

    def split(self, z):
        N = self.steps
        X = z[:self.n_state].reshape(N + 1, NX)
        U = z[self.n_state:-1].reshape(N + 1, NU)
        return X, U, z[-1]

    @property
    def lb(self):
        lb = np.full(self.n, -np.inf)
        U = lb[self.n_state:-1].reshape(-1, NU)
        U[:, TORQUE] = -self.bounds.m_max
        lb[-1] = self.scenario.t_f_min / TF_SCALE
        return lb

    @property
    def ub(self):
        ub = np.full(self.n, np.inf)
        U = ub[self.n_state:-1].reshape(-1, NU)
        U[:, TORQUE] = self.bounds.m_max
        ub[-1] = self.scenario.t_f_max / TF_SCALE
        return ub

    def _build_structure(self):
        N = self.steps
        k = np.arange(N)
        m0, m1, mb = _local_mask(self.params, self.rule)
        self._m0, self._m1, self._mb = np.nonzero(m0), np.nonzero(m1), np.nonzero(mb)
        rows, cols = [], []
        for (ri, ci), node_off, width, base in (
                (self._m0, 0, NX, 0), (self._m1, 1, NX, 0),
                (self._mb, 0, NU, self.n_state), (self._mb, 1, NU, self.n_state)):
            rows.append((NX * k[:, None] + ri[None, :]).ravel())
            cols.append((base + width * (k[:, None] + node_off) + ci[None, :]).ravel())
        rows.append(np.arange(self.n_defect))
        cols.append(np.full(self.n_defect, self.tau))
        rows.append(self.n_defect + np.arange(NX))
        cols.append(np.arange(NX))
        rng = np.random.default_rng(2)
        tmask = terminal_jacobian(rng.standard_normal(NX), self.geometry, 0.3) != 0
        self._tm = np.nonzero(tmask)
        rows.append(self.n_defect + NX + self._tm[0])
        cols.append(NX * N + self._tm[1])
        self.eq_structure = (np.concatenate(rows), np.concatenate(cols))

        nodes = np.arange(N + 1)
        irows, icols = [], []
        off = 0
        if self.collision:
            irows.append(np.repeat(nodes, 3))
            icols.append((NX * nodes[:, None] + np.arange(3)).ravel())
            off = N + 1
        irows.append(off + np.repeat(nodes, 3))
        icols.append((self.n_state + NU * nodes[:, None] + np.arange(3)).ravel())
        self.ineq_structure = (np.concatenate(irows), np.concatenate(icols))

        # Hessian: interval (x0, x1) blocks, node diagonals, terminal block, dense t_f row
        probe = interval_hessian(np.ones((1, NX)), self.params, self.rule)[0] != 0
        probe |= interval_hessian(rng.standard_normal((1, NX)), self.params, self.rule)[0] != 0
        self._hm = np.nonzero(probe)
        li = np.where(self._hm[0] < NX, NX * k[:, None] + self._hm[0],
                      NX * (k[:, None] + 1) + self._hm[0] - NX)
        lj = np.where(self._hm[1] < NX, NX * k[:, None] + self._hm[1],
                      NX * (k[:, None] + 1) + self._hm[1] - NX)
        term = np.r_[Q_S.start:Q_S.stop, W_S.start:W_S.stop] + NX * N
        ti, tj = np.meshgrid(term, term, indexing="ij")
        diag = np.arange(self.n)
        other = np.arange(self.n - 1)
        self._hess_rows = np.concatenate([li.ravel(), ti.ravel(), diag, other,
                                          np.full(self.n - 1, self.tau)])
        self._hess_cols = np.concatenate([lj.ravel(), tj.ravel(), diag,
                                          np.full(self.n - 1, self.tau), other])
        self._term_idx = term

    # objective
    def objective(self, z):
        X, U, tau = self.split(z)
        N = self.steps
        w = self.weights
        run = float(np.sum(running_cost(U[:-1], w)))
        return w.l_tf * TF_SCALE * tau + TF_SCALE * tau / N * run

    def gradient(self, z):
        X, U, tau = self.split(z)
        N, w = self.steps, self.weights
        h = TF_SCALE * tau / N
        g = np.zeros(self.n)
        G = g[self.n_state:-1].reshape(N + 1, NU)
        G[:-1, THRUST] = 2 * h * w.l_u * U[:-1, THRUST]
        G[:-1, TORQUE] = 2 * h * w.l_m * U[:-1, TORQUE]
        g[-1] = TF_SCALE * w.l_tf + TF_SCALE / N * float(np.sum(running_cost(U[:-1], w)))
        return g

    # equalities
    def eq_constraints(self, z):
        X, U, tau = self.split(z)
        h = TF_SCALE * tau / self.steps
        phi = interval_rate(X[:-1], X[1:], U[:-1], U[1:], self.params, self.rule)
        defects = X[1:] - X[:-1] - h * phi
        term = terminal_residuals(X[-1], self.geometry, self.params.mean_motion)
        return np.concatenate([defects.ravel(), X[0] - self.x0, term])

    def eq_jacobian(self, z):
        X, U, tau = self.split(z)
        N = self.steps
        h = TF_SCALE * tau / N
        P0, P1, Bh = interval_jacobians(X[:-1], X[1:], self.params, self.rule)
        eye = np.eye(NX)
        J0 = -eye - h * P0
        J1 = eye - h * P1
        JB = -h * Bh
        phi = interval_rate(X[:-1], X[1:], U[:-1], U[1:], self.params, self.rule)
        tj = terminal_jacobian(X[-1], self.geometry, self.params.mean_motion)
        vals = np.concatenate([
            J0[:, self._m0[0], self._m0[1]].ravel(),
            J1[:, self._m1[0], self._m1[1]].ravel(),
            np.tile(JB[self._mb], N),
            np.tile(JB[self._mb], N),
            (-TF_SCALE / N * phi).ravel(),
            np.ones(NX),
            tj[self._tm],
        ])
        return sp.csr_matrix((vals, self.eq_structure), shape=(self.n_eq, self.n))

    # inequalities
    def ineq_constraints(self, z):
        X, U, _ = self.split(z)
        parts = []
        if self.collision:
            parts.append(collision_margin(X, self.geometry, self.margin))
        parts.append(thrust_margin(U, self.bounds))
        return np.concatenate(parts)

    def ineq_jacobian(self, z):
        X, U, _ = self.split(z)
        parts = []
        if self.collision:
            parts.append(2 * X[:, 0:3].ravel())
        parts.append(-2 * U[:, THRUST].ravel())
        return sp.csr_matrix((np.concatenate(parts), self.ineq_structure),
                             shape=(self.n_ineq, self.n))

    # second derivatives
    def hessian(self, z, obj_factor, y_eq, y_ineq):
        """Full symmetric Hessian of ``obj_factor f + y_eq . c_E + y_ineq . c_I``."""
        X, U, tau = self.split(z)
        N, w, p = self.steps, self.weights, self.params
        h = TF_SCALE * tau / N
        y_def = np.asarray(y_eq[:self.n_defect]).reshape(N, NX)
        y_term = np.asarray(y_eq[self.n_defect + NX:])

        Hint = -h * interval_hessian(y_def, p, self.rule)
        vals_int = Hint[:, self._hm[0], self._hm[1]].ravel()
        vals_term = terminal_hessian(X[-1], self.geometry, p.mean_motion, y_term)
        vals_term = vals_term[np.ix_(self._term_idx - NX * N, self._term_idx - NX * N)].ravel()

        diag = np.zeros(self.n)
        D = diag[self.n_state:-1].reshape(N + 1, NU)
        D[:-1, THRUST] = obj_factor * 2 * h * w.l_u
        D[:-1, TORQUE] = obj_factor * 2 * h * w.l_m
        y_ineq = np.asarray(y_ineq)
        off = 0
        if self.collision:
            S = diag[:self.n_state].reshape(N + 1, NX)
            S[:, 0:3] += 2 * y_ineq[:N + 1, None]
            off = N + 1
        D[:, THRUST] += -2 * y_ineq[off:off + N + 1, None]

        # mixed t_f derivatives
        P0, P1, Bh = interval_jacobians(X[:-1], X[1:], p, self.rule)
        cross = np.zeros(self.n - 1)
        Cs = cross[:self.n_state].reshape(N + 1, NX)
        Cu = cross[self.n_state:].reshape(N + 1, NU)
        Cs[:-1] += -TF_SCALE / N * np.einsum("ki,kij->kj", y_def, P0)
        Cs[1:] += -TF_SCALE / N * np.einsum("ki,kij->kj", y_def, P1)
        yb = y_def @ Bh
        Cu[:-1] += -TF_SCALE / N * yb
        Cu[1:] += -TF_SCALE / N * yb
        Cu[:-1, THRUST] += obj_factor * TF_SCALE / N * 2 * w.l_u * U[:-1, THRUST]
        Cu[:-1, TORQUE] += obj_factor * TF_SCALE / N * 2 * w.l_m * U[:-1, TORQUE]

        vals = np.concatenate([vals_int, vals_term, diag, cross, cross])
        return sp.csr_matrix((vals, (self._hess_rows, self._hess_cols)), shape=(self.n, self.n))

    def as_problem(self):
        from .solver import NlpProblem

        return NlpProblem(
            n=self.n, objective=self.objective, gradient=self.gradient,
            lb=self.lb, ub=self.ub,
            n_eq=self.n_eq, eq=self.eq_constraints, eq_jacobian=self.eq_jacobian,
            n_ineq=self.n_ineq, ineq=self.ineq_constraints, ineq_jacobian=self.ineq_jacobian,
            hessian=self.hessian,
            eq_structure=self.eq_structure, ineq_structure=self.ineq_structure,
            eq_names=self.eq_name, ineq_names=self.ineq_name,
        )

    def eq_name(self, i):
        if i < self.n_defect:
            return f"defect[interval {i // NX}, state {i % NX}]"
        i -= self.n_defect
        if i < NX:
            return f"initial_state[{i}]"
        i -= NX
        labels = ["qT-qS"] * 4 + ["wT-wS"] * 3 + ["dock_pos"] * 3 + ["dock_vel"] * 3
        return f"terminal {labels[i]}[{i}]"

    def ineq_name(self, i):
        N = self.steps
        if self.collision and i <= N:
            return f"collision_margin[node {i}]"
        return f"thrust_margin[node {i - (N + 1 if self.collision else 0)}]"


def transcribe(scenario, steps=None, rule="cayley"):
    return TranscribedNLP(scenario, steps, rule)


def _slerp(u0, u1, s):
    ang = np.arccos(np.clip(u0 @ u1, -1.0, 1.0))
    if ang < 1e-9:
        return np.repeat(u0[None], s.size, axis=0)
    return (np.sin((1 - s) * ang)[:, None] * u0 + np.sin(s * ang)[:, None] * u1) / np.sin(ang)


def _bend_around_keep_out(X, s, tf, g, clearance=1.25):
    """Replace a straight position path that crosses the keep-out sphere by an
    arc around it, passing on the +x side when the ends are nearly opposite.
    The radius is interpolated between the end radii and raised to
    ``clearance * (rS + rT)`` mid-path; velocities are differentiated from the
    new positions."""
    r0, r1 = X[0, POS], X[-1, POS]
    keep = g.r_s + g.r_t
    fine = np.linspace(0.0, 1.0, 401)[:, None]
    if np.min(np.linalg.norm((1 - fine) * r0 + fine * r1, axis=1)) >= keep:
        return
    n0, n1 = np.linalg.norm(r0), np.linalg.norm(r1)
    if min(n0, n1) == 0.0:
        return
    u0, u1 = r0 / n0, r1 / n1
    if np.linalg.norm(u0 + u1) > 0.5:
        dirs = _slerp(u0, u1, s)
    else:
        e = np.array([1.0, 0.0, 0.0])
        e = e - (e @ u0) * u0
        if np.linalg.norm(e) < 1e-8:
            e = np.array([0.0, 1.0, 0.0]) - u0[1] * u0
        e /= np.linalg.norm(e)
        first = s <= 0.5
        dirs = np.empty((s.size, 3))
        dirs[first] = _slerp(u0, e, 2 * s[first])
        dirs[~first] = _slerp(e, u1, 2 * s[~first] - 1)
    rho = (1 - s) * n0 + s * n1
    rho = rho + np.sin(np.pi * s) * max(0.0, clearance * keep - min(n0, n1))
    X[:, POS] = rho[:, None] * dirs
    ends = X[[0, -1], VEL].copy()
    X[:, VEL] = np.gradient(X[:, POS], s * tf, axis=0)
    X[[0, -1], VEL] = ends


def initial_guess(scenario, steps=None, tf_guess=400.0, detour=False):
    """Initial guess ending in a docking-consistent state.

    The target block follows its torque-free motion; the servicer's states
    are interpolated linearly from the initial state to the docked state at
    ``tf_guess``, with quaternions renormalized node by node.  With
    ``detour`` the position path is bowed around the keep-out sphere when the
    straight segment would cross it.
    """
    N = scenario.steps if steps is None else int(steps)
    p = scenario.body_params
    x0 = scenario.initial_state()
    times = np.linspace(0.0, tf_guess, N + 1)
    ref = propagate_reference(x0, p, times)
    q_end, w_end = ref[-1, Q_T] / np.linalg.norm(ref[-1, Q_T]), ref[-1, W_T]
    r = rotation_matrix_unchecked(q_end)
    pos = r.T @ scenario.geometry.offset
    w_e = r.T @ w_end - np.array([0.0, 0.0, p.mean_motion])
    x_end = x0.copy()
    x_end[0:3] = pos
    x_end[3:6] = np.cross(w_e, pos)
    x_end[W_S] = w_end
    x_end[Q_S] = q_end
    s = np.linspace(0.0, 1.0, N + 1)[:, None]
    X = (1 - s) * x0 + s * x_end
    if detour:
        _bend_around_keep_out(X, s[:, 0], tf_guess, scenario.geometry)
    X[:, W_T] = ref[:, W_T]
    X[:, Q_T] = ref[:, Q_T]
    for qb in (Q_S, Q_T):
        X[:, qb] /= np.linalg.norm(X[:, qb], axis=1, keepdims=True)
    return pack(X, np.zeros((N + 1, NU)), tf_guess)


def resample(z, steps):
    """Interpolate a decision vector onto a uniform grid with ``steps`` steps.

    States and controls are interpolated linearly in normalized time and the
    quaternion blocks renormalized; ``t_f`` is kept.  Used to warm-start a fine
    grid from a coarse solution.
    """
    X, U, tf = unpack(z)
    old = np.linspace(0.0, 1.0, X.shape[0])
    new = np.linspace(0.0, 1.0, int(steps) + 1)
    Xn = np.column_stack([np.interp(new, old, X[:, j]) for j in range(NX)])
    Un = np.column_stack([np.interp(new, old, U[:, j]) for j in range(NU)])
    for qb in (Q_S, Q_T):
        Xn[:, qb] /= np.linalg.norm(Xn[:, qb], axis=1, keepdims=True)
    return pack(Xn, Un, tf)


def perturb(z, magnitude, seed=None):
    """Add uniform noise in ``[-magnitude, magnitude]`` to states and controls."""
    rng = np.random.default_rng(seed)
    out = np.array(z, dtype=float)
    out[:-1] += rng.uniform(-magnitude, magnitude, size=out.size - 1)
    return out
