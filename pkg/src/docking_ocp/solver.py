"""Primal-dual interior-point solver for sparse nonlinear programs.

Problems have the form::

    minimize f(x)  subject to  c_E(x) = 0,  c_I(x) >= 0,  lb <= x <= ub

Inequalities get slack variables ``c_I(x) - s = 0, s >= 0``.  Each iteration
solves the regularized primal-dual Newton system with a sparse LDL^T
factorization and corrects its inertia.  Steps are globalized by a backtracking
filter line search on the pair (infeasibility, barrier objective) with
second-order corrections, falling back to a minimum-norm feasibility
restoration phase.  The barrier parameter follows the monotone
Fiacco-McCormick strategy.

A filter tolerates constraint Jacobians that lose rank at feasible points,
which the docking problem's terminal attitude match does.

Multipliers reported to callers follow ``L = f - lam_E . c_E - lam_I . c_I
- z_L . (x - lb) - z_U . (ub - x)`` so ``lam_I``, ``z_L`` and ``z_U`` are
nonnegative at a KKT point.
"""

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import qdldl
import scipy.sparse as sp

logger = logging.getLogger(__name__)


@dataclass
class NlpProblem:
    n: int
    objective: Callable
    gradient: Callable
    lb: np.ndarray = None
    ub: np.ndarray = None
    n_eq: int = 0
    eq: Optional[Callable] = None
    eq_jacobian: Optional[Callable] = None
    n_ineq: int = 0
    ineq: Optional[Callable] = None
    ineq_jacobian: Optional[Callable] = None
    #: ``hessian(x, obj_factor, y_eq, y_ineq)`` returning the symmetric Hessian
    #: of ``obj_factor f + y_eq . c_E + y_ineq . c_I``; ``None`` means finite
    #: differences of the Lagrangian gradient (small problems only)
    hessian: Optional[Callable] = None
    eq_structure: Optional[tuple] = None
    ineq_structure: Optional[tuple] = None
    eq_names: Optional[Callable] = None
    ineq_names: Optional[Callable] = None

    def __post_init__(self):
        self.lb = np.full(self.n, -np.inf) if self.lb is None else np.asarray(self.lb, float)
        self.ub = np.full(self.n, np.inf) if self.ub is None else np.asarray(self.ub, float)
        if self.lb.shape != (self.n,) or self.ub.shape != (self.n,):
            raise ValueError("bounds must have length n")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bounds exceed upper bounds")
        if self.n_eq and (self.eq is None or self.eq_jacobian is None):
            raise ValueError("equality constraints need values and a Jacobian")
        if self.n_ineq and (self.ineq is None or self.ineq_jacobian is None):
            raise ValueError("inequality constraints need values and a Jacobian")

    def c_eq(self, x):
        return np.asarray(self.eq(x), float) if self.n_eq else np.zeros(0)

    def c_ineq(self, x):
        return np.asarray(self.ineq(x), float) if self.n_ineq else np.zeros(0)

    def jac_eq(self, x):
        if not self.n_eq:
            return sp.csr_matrix((0, self.n))
        return sp.csr_matrix(self.eq_jacobian(x))

    def jac_ineq(self, x):
        if not self.n_ineq:
            return sp.csr_matrix((0, self.n))
        return sp.csr_matrix(self.ineq_jacobian(x))

    def lagrangian_hessian(self, x, obj_factor, y_eq, y_ineq):
        if self.hessian is not None:
            return sp.csr_matrix(self.hessian(x, obj_factor, y_eq, y_ineq))
        return sp.csr_matrix(_fd_hessian(self, x, obj_factor, y_eq, y_ineq))


def _fd_hessian(p, x, sigma, y_eq, y_ineq, h=1e-6):
    def grad(v):
        g = sigma * np.asarray(p.gradient(v), float)
        if p.n_eq:
            g = g + p.jac_eq(v).T @ y_eq
        if p.n_ineq:
            g = g + p.jac_ineq(v).T @ y_ineq
        return g

    H = np.zeros((p.n, p.n))
    for j in range(p.n):
        step = h * max(1.0, abs(x[j]))
        e = np.zeros(p.n)
        e[j] = step
        H[:, j] = (grad(x + e) - grad(x - e)) / (2 * step)
    return 0.5 * (H + H.T)


class Status(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolverOptions:
    kkt_tol: float = 1e-6
    max_iterations: int = 3000
    #: also the tolerance applied to complementarity
    feasibility_tol: float = 1e-8
    derivative_check: bool = False
    mu_init: float = 0.1
    mu_factor: float = 0.2
    seed: Optional[int] = None
    verbose: bool = False

    def __post_init__(self):
        if not (self.kkt_tol > 0 and self.feasibility_tol > 0 and self.mu_init > 0):
            raise ValueError("tolerances and the initial barrier parameter must be positive")
        if not 0 < self.mu_factor < 1:
            raise ValueError("mu_factor must lie in (0, 1)")


@dataclass
class Multipliers:
    eq: np.ndarray
    ineq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def max_abs(self):
        parts = [np.abs(a) for a in (self.eq, self.ineq, self.lower, self.upper) if a.size]
        return float(max((np.max(a) for a in parts), default=0.0))


class KKTResidual(NamedTuple):
    """Infinity-norm optimality residuals.

    ``stationarity`` is divided by ``1 + max |multiplier|``.
    ``complementarity`` also absorbs sign violations of the multipliers.
    """

    stationarity: float
    feasibility_eq: float
    feasibility_ineq: float
    complementarity: float


@dataclass
class SolveReport:
    status: Status
    x: np.ndarray
    objective: float
    max_eq_violation: float
    min_ineq_margin: float
    kkt: KKTResidual
    iterations: int
    wall_time: float
    multipliers: Multipliers
    message: str = ""
    clipped: bool = False
    failed_index: Optional[int] = None
    derivative_error: Optional[float] = None
    #: one ``StepRecord`` per accepted step
    merit_trace: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status is Status.CONVERGED

    def summary(self):
        k = self.kkt
        return (f"status={self.status.value} iterations={self.iterations} "
                f"objective={self.objective:.10g} stationarity={k.stationarity:.2e} "
                f"eq={k.feasibility_eq:.2e} ineq={k.feasibility_ineq:.2e} "
                f"compl={k.complementarity:.2e} time={self.wall_time:.1f}s")


def kkt_residual(p, x, mult):
    """First-order optimality residuals of ``x`` with multipliers ``mult``."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(p.gradient(x), float).copy()
    ce, ci = p.c_eq(x), p.c_ineq(x)
    if p.n_eq:
        g -= p.jac_eq(x).T @ mult.eq
    if p.n_ineq:
        g -= p.jac_ineq(x).T @ mult.ineq
    g -= mult.lower
    g += mult.upper
    stat = float(np.max(np.abs(g), initial=0.0)) / (1.0 + mult.max_abs())
    feq = float(np.max(np.abs(ce), initial=0.0))
    bound_viol = max(float(np.max(p.lb - x, initial=0.0)), float(np.max(x - p.ub, initial=0.0)))
    fin = max(float(np.max(-ci, initial=0.0)), bound_viol)
    hasl, hasu = np.isfinite(p.lb), np.isfinite(p.ub)
    comp = [np.abs(mult.ineq * ci),
            np.abs(mult.lower[hasl] * (x[hasl] - p.lb[hasl])),
            np.abs(mult.upper[hasu] * (p.ub[hasu] - x[hasu])),
            -mult.ineq, -mult.lower, -mult.upper,
            np.abs(mult.lower[~hasl]), np.abs(mult.upper[~hasu])]
    compl = max((float(np.max(c, initial=0.0)) for c in comp), default=0.0)
    return KKTResidual(stat, feq, fin, compl)


# -- derivative verification ----------------------------------------------------

class DerivativeCheck(NamedTuple):
    max_error: float
    location: str
    analytic: float
    finite_difference: float


def _color_columns(rows, cols, n):
    """Greedy coloring: columns sharing no structural row get the same color."""
    by_col = [[] for _ in range(n)]
    for r, c in zip(rows.tolist(), cols.tolist()):
        by_col[c].append(r)
    color = np.full(n, -1)
    row_colors = {}
    order = np.argsort([-len(r) for r in by_col], kind="stable")
    for c in order:
        if not by_col[c]:
            # undeclared columns are probed alone so any response shows up as a leak
            color[c] = -1
            continue
        used = set()
        for r in by_col[c]:
            used.update(row_colors.get(r, ()))
        k = 0
        while k in used:
            k += 1
        color[c] = k
        for r in by_col[c]:
            row_colors.setdefault(r, set()).add(k)
    empty = np.nonzero(color < 0)[0]
    color[empty] = color.max(initial=-1) + 1 + np.arange(empty.size)
    return color


def derivative_check(p, x, h=1e-6, dense=False):
    """Compare analytic first derivatives with central finite differences.

    The error of an entry is ``|a - d| / max(|a|, |d|, 1)``.  Constraint
    Jacobians are differenced column-group-wise using the declared sparsity
    (or column by column with ``dense=True``); any finite-difference
    response outside the declared structure is reported as an error.
    """
    x = np.asarray(x, dtype=float)
    steps = h * np.maximum(1.0, np.abs(x))
    worst = DerivativeCheck(0.0, "", 0.0, 0.0)

    def consider(err, loc, a, d):
        nonlocal worst
        if err > worst.max_error:
            worst = DerivativeCheck(float(err), loc, float(a), float(d))

    g = np.asarray(p.gradient(x), float)
    for j in range(p.n):
        e = np.zeros(p.n)
        e[j] = steps[j]
        d = (p.objective(x + e) - p.objective(x - e)) / (2 * steps[j])
        consider(abs(g[j] - d) / max(abs(g[j]), abs(d), 1.0), f"gradient[{j}]", g[j], d)

    for kind, m, fun, jac, names in (
            ("eq", p.n_eq, p.c_eq, p.jac_eq, p.eq_names),
            ("ineq", p.n_ineq, p.c_ineq, p.jac_ineq, p.ineq_names)):
        if not m:
            continue
        J = jac(x).tocsc()
        Jc = J.tocoo()
        structure = (Jc.row, Jc.col) if dense else (
            p.eq_structure if kind == "eq" else p.ineq_structure) or (Jc.row, Jc.col)
        colors = np.arange(p.n) if dense else _color_columns(
            np.asarray(structure[0]), np.asarray(structure[1]), p.n)
        srows, scols = np.asarray(structure[0]), np.asarray(structure[1])
        for k in range(colors.max() + 1):
            group = np.nonzero(colors == k)[0]
            e = np.zeros(p.n)
            e[group] = steps[group]
            fd_sum = (fun(x + e) - fun(x - e)) / 2
            if dense:
                j = group[0]
                fd = fd_sum / steps[j]
                a = J[:, j].toarray().ravel()
                err = np.abs(a - fd) / np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1.0)
                i = int(np.argmax(err))
                label = names(i) if names else str(i)
                consider(err[i], f"{kind} jacobian[{label}, {j}]", a[i], fd[i])
                continue
            sel = np.isin(scols, group)
            r_in, c_in = srows[sel], scols[sel]
            fd = fd_sum[r_in] / steps[c_in]
            a = np.asarray(J[r_in, c_in]).ravel()
            err = np.abs(a - fd) / np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1.0)
            if err.size:
                i = int(np.argmax(err))
                label = names(int(r_in[i])) if names else str(r_in[i])
                consider(err[i], f"{kind} jacobian[{label}, {c_in[i]}]", a[i], fd[i])
            stray = np.ones(m, dtype=bool)
            stray[r_in] = False
            leak = np.abs(fd_sum[stray]) / np.min(steps[group])
            if leak.size and leak.max() > 0:
                i = int(np.nonzero(stray)[0][np.argmax(leak)])
                label = names(i) if names else str(i)
                consider(min(leak.max(), 1.0) if leak.max() < 1e-9 else 2.0,
                         f"{kind} row {label} responds outside declared sparsity", 0.0,
                         leak.max())
    return worst


# -- the interior-point method -------------------------------------------------

class _NonFinite(Exception):
    def __init__(self, what, index):
        super().__init__(f"non-finite value in {what} at index {index}")
        self.what = what
        self.index = index


def _finite(v, what):
    v = np.asarray(v, dtype=float)
    bad = ~np.isfinite(v)
    if np.any(bad):
        raise _NonFinite(what, int(np.nonzero(bad)[0][0]))
    return v


class StepRecord(NamedTuple):
    """Line-search outcome of one accepted iteration.

    ``theta`` is the l1 norm of the equality residuals (slacks included) and
    ``phi`` the barrier objective at the barrier parameter ``mu`` of that step.
    ``kind`` is ``"f"`` (Armijo decrease of ``phi`` on a nearly feasible
    iterate), ``"h"`` (sufficient decrease of ``theta`` or ``phi``) or
    ``"restoration"``.
    """

    theta_before: float
    phi_before: float
    theta_after: float
    phi_after: float
    kind: str
    mu: float
    alpha: float
    slope: float


class _Filter:
    def __init__(self):
        self.entries = []

    def acceptable(self, theta, phi):
        return all(theta < t or phi < p for t, p in self.entries)

    def add(self, theta, phi):
        self.entries = [(t, p) for t, p in self.entries if t < theta or p < phi]
        self.entries.append((theta, phi))


class InteriorPointSolver:
    """Primal-dual barrier method; see the module docstring."""

    kappa_eps = 10.0
    theta_mu = 1.5
    tau_min = 0.99
    kappa_sigma = 1e10
    # filter line search
    gamma_theta = 1e-5
    gamma_phi = 1e-8
    gamma_alpha = 0.05
    delta_switch = 1.0
    s_theta = 1.1
    s_phi = 2.3
    eta_phi = 1e-8
    max_soc = 4
    kappa_soc = 0.99
    # restoration
    restoration_zeta = 1e-4
    max_restoration = 200
    # linear algebra and initialization
    bound_push = 1e-2
    delta_w_init = 1e-4
    delta_w_min = 1e-20
    delta_w_max = 1e40
    delta_c_base = 1e-8

    def __init__(self, problem, options=None):
        self.p = problem
        self.opt = options or SolverOptions()
        p = problem
        self.n, self.me, self.mi = p.n, p.n_eq, p.n_ineq
        self.nw = self.n + self.mi
        self.m = self.me + self.mi
        self.wl = np.concatenate([p.lb, np.zeros(self.mi)])
        self.wu = np.concatenate([p.ub, np.full(self.mi, np.inf)])
        self.hasl = np.isfinite(self.wl)
        self.hasu = np.isfinite(self.wu)
        self.mu_min = min(self.opt.kkt_tol, self.opt.feasibility_tol) / 10.0

    # evaluations
    def _values(self, w):
        x, s = w[:self.n], w[self.n:]
        f = float(_finite([self.p.objective(x)], "objective")[0])
        ce = _finite(self.p.c_eq(x), "equality")
        ci = _finite(self.p.c_ineq(x), "inequality")
        return f, np.concatenate([ce, ci - s])

    def _derivs(self, w):
        x = w[:self.n]
        g = _finite(self.p.gradient(x), "gradient")
        je = self.p.jac_eq(x)
        ji = self.p.jac_ineq(x)
        _finite(je.data, "equality jacobian")
        _finite(ji.data, "inequality jacobian")
        return g, je, ji

    def _barrier(self, w, f, mu):
        val = f
        if np.any(self.hasl):
            val -= mu * np.sum(np.log(w[self.hasl] - self.wl[self.hasl]))
        if np.any(self.hasu):
            val -= mu * np.sum(np.log(self.wu[self.hasu] - w[self.hasu]))
        return val

    def _barrier_grad(self, w, g, mu):
        gw = np.concatenate([g, np.zeros(self.mi)])
        gw[self.hasl] -= mu / (w[self.hasl] - self.wl[self.hasl])
        gw[self.hasu] += mu / (self.wu[self.hasu] - w[self.hasu])
        return gw

    def _jt_y(self, je, ji, y):
        ye, yi = y[:self.me], y[self.me:]
        out = np.zeros(self.nw)
        if self.me:
            out[:self.n] += je.T @ ye
        if self.mi:
            out[:self.n] += ji.T @ yi
            out[self.n:] -= yi
        return out

    def _sigma(self, w, zl, zu):
        sig = np.zeros(self.nw)
        sig[self.hasl] += zl[self.hasl] / (w[self.hasl] - self.wl[self.hasl])
        sig[self.hasu] += zu[self.hasu] / (self.wu[self.hasu] - w[self.hasu])
        return sig

    # linear algebra
    def _kkt_parts(self, H, je, ji):
        n, mi, me, nw = self.n, self.mi, self.me, self.nw
        Hu = sp.triu(H, format="coo") if H is not None else sp.coo_matrix((nw, nw))
        Je, Ji = je.tocoo(), ji.tocoo()
        rows = [Hu.row, Je.col, Ji.col, n + np.arange(mi)]
        cols = [Hu.col, nw + Je.row, nw + me + Ji.row, nw + me + np.arange(mi)]
        vals = [Hu.data, Je.data, Ji.data, -np.ones(mi)]
        dim = nw + self.m
        return (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                np.arange(dim), dim)

    def _factor(self, parts, sigma, dw, dc):
        rows, cols, vals, diag_idx, dim = parts
        dvals = np.concatenate([sigma + dw, np.full(self.m, -dc)])
        K = sp.csc_matrix((np.concatenate([vals, dvals]),
                           (np.concatenate([rows, diag_idx]), np.concatenate([cols, diag_idx]))),
                          shape=(dim, dim))
        try:
            solver = qdldl.Solver(K, upper=True)
        except RuntimeError:
            return None, K, None
        d = solver.factors()[1]
        inertia = (int(np.sum(d > 0)), int(np.sum(d < 0)), int(np.sum(d == 0)))
        return solver, K, inertia

    def _solve(self, solver, K, rhs):
        sol = solver.solve(rhs)
        Kfull = K + K.T - sp.diags(K.diagonal())
        scale = max(1.0, np.max(np.abs(rhs)))
        for _ in range(5):
            res = rhs - Kfull @ sol
            if np.max(np.abs(res)) <= 1e-12 * scale:
                break
            sol = sol + solver.solve(res)
        return sol

    def _factor_with_inertia(self, parts, sigma, mu):
        """Inertia correction: regularize until the matrix has ``nw`` positive
        and ``m`` negative eigenvalues."""
        dc = self._dc_next
        dw = 0.0
        solver, K, inertia = self._factor(parts, sigma, dw, dc)
        if self._inertia_ok(inertia):
            return solver, K, dw, dc
        if inertia is None or inertia[2] > 0:
            dc = self._dc_next = self.delta_c_base * mu ** 0.25
            solver, K, inertia = self._factor(parts, sigma, dw, dc)
            if self._inertia_ok(inertia):
                return solver, K, dw, dc
        dw = self.delta_w_init if self._dw_last == 0 else max(self.delta_w_min,
                                                               self._dw_last / 3)
        grow = 100.0 if self._dw_last == 0 else 8.0
        while dw <= self.delta_w_max:
            solver, K, inertia = self._factor(parts, sigma, dw, dc)
            if self._inertia_ok(inertia):
                self._dw_last = dw
                return solver, K, dw, dc
            dw *= grow
        raise _NonFinite("KKT factorization", -1)

    def _inertia_ok(self, inertia):
        return inertia is not None and inertia[0] == self.nw and inertia[1] == self.m

    # main loop
    def solve(self, x0):
        opt = self.opt
        t0 = time.perf_counter()
        n, nw = self.n, self.nw
        p = self.p
        x = np.array(x0, dtype=float)
        if x.shape != (n,):
            raise ValueError(f"initial point must have length {n}")
        clipped = bool(np.any(x < p.lb) or np.any(x > p.ub))
        x = self._push_inside(x, p.lb, p.ub)
        self._dw_last = 0.0
        self._dc_next = 0.0
        trace = []
        mu = opt.mu_init
        it = 0
        status, message, failed = Status.MAX_ITERATIONS, "iteration limit reached", None
        y = np.zeros(self.m)
        zl = np.where(self.hasl, 1.0, 0.0)
        zu = np.where(self.hasu, 1.0, 0.0)
        w = np.concatenate([x, np.zeros(self.mi)])
        try:
            ci0 = _finite(p.c_ineq(x), "inequality")
            w[n:] = np.maximum(ci0, self.bound_push)
            f, c = self._values(w)
            g, je, ji = self._derivs(w)
            theta_init = float(np.sum(np.abs(c)))
            self.theta_max = 1e4 * max(1.0, theta_init)
            self.theta_min = 1e-4 * max(1.0, theta_init)
            filt = _Filter()
            while True:
                mult = self._external_multipliers(y, zl, zu)
                res = kkt_residual(p, w[:n], mult)
                if self._converged(res):
                    status, message = Status.CONVERGED, "optimal solution found"
                    break
                if it >= opt.max_iterations:
                    break
                mu_old = mu
                # once only complementarity is missing, go straight to the smallest mu
                done = (res.stationarity <= opt.kkt_tol
                        and max(res.feasibility_eq, res.feasibility_ineq) <= opt.feasibility_tol)
                while mu > self.mu_min and (done or self._barrier_error(
                        w, g, je, ji, c, y, zl, zu, mu) <= self.kappa_eps * mu):
                    mu = max(self.mu_min, min(opt.mu_factor * mu, mu ** self.theta_mu))
                if mu != mu_old:
                    filt = _Filter()
                tau = max(self.tau_min, 1.0 - mu)

                H = p.lagrangian_hessian(w[:n], 1.0, y[:self.me], y[self.me:])
                _finite(H.data, "hessian")
                parts = self._kkt_parts(H, je, ji)
                sigma = self._sigma(w, zl, zu)
                solver, K, dw, dc = self._factor_with_inertia(parts, sigma, mu)
                gphi = self._barrier_grad(w, g, mu)
                rhs = -np.concatenate([gphi + self._jt_y(je, ji, y), c])
                sol = self._solve(solver, K, rhs)
                d, dy = sol[:nw], sol[nw:]

                step = self._filter_line_search(w, f, c, d, mu, tau, filt, solver, K, gphi,
                                                je, ji, y)
                if step is None:
                    step = self._restoration(w, f, c, mu, tau, filt, zl, zu, je, ji)
                    if step is None:
                        status, message = self._classify_failure(w, je, ji, c)
                        break
                    dy = -y
                w_new, alpha, f_new, c_new, record = step
                trace.append(record)

                dzl = np.zeros(nw)
                dzu = np.zeros(nw)
                L, U = self.hasl, self.hasu
                dw_ = w_new - w
                dzl[L] = mu / (w[L] - self.wl[L]) - zl[L] - (zl[L] / (w[L] - self.wl[L])) * dw_[L]
                dzu[U] = mu / (self.wu[U] - w[U]) - zu[U] + (zu[U] / (self.wu[U] - w[U])) * dw_[U]
                alpha_z = self._max_dual_step(zl, zu, dzl, dzu, tau)
                y = y + alpha * dy
                zl = zl + alpha_z * dzl
                zu = zu + alpha_z * dzu
                w, f, c = w_new, f_new, c_new
                zl, zu = self._safeguard_duals(w, zl, zu, mu)
                g, je, ji = self._derivs(w)
                it += 1
                if opt.verbose and (it % 10 == 0 or it < 10):
                    logger.info("iter %4d  f=%.8g  |c|=%.2e  mu=%.1e  alpha=%.2e  dw=%.1e  %s",
                                it, f, np.max(np.abs(c), initial=0.0), mu, alpha, dw,
                                record.kind)
        except _NonFinite as exc:
            status, message, failed = Status.NUMERICAL_FAILURE, str(exc), exc.index

        x = w[:n]
        mult = self._external_multipliers(y, zl, zu)
        try:
            res = kkt_residual(p, x, mult)
            fval = float(p.objective(x))
            ce, ci = p.c_eq(x), p.c_ineq(x)
        except Exception:  # evaluation failed at the final point
            res = KKTResidual(np.inf, np.inf, np.inf, np.inf)
            fval, ce, ci = np.nan, np.zeros(0), np.zeros(0)
        if status is Status.CONVERGED and not self._converged(res):
            status = Status.NUMERICAL_FAILURE
        return SolveReport(
            status=status, x=x.copy(), objective=fval,
            max_eq_violation=float(np.max(np.abs(ce), initial=0.0)),
            min_ineq_margin=float(np.min(ci, initial=np.inf)),
            kkt=res, iterations=it, wall_time=time.perf_counter() - t0,
            multipliers=mult, message=message, clipped=clipped, failed_index=failed,
            merit_trace=trace)

    def _converged(self, res):
        o = self.opt
        return (res.stationarity <= o.kkt_tol and res.feasibility_eq <= o.feasibility_tol
                and res.feasibility_ineq <= o.feasibility_tol
                and res.complementarity <= o.feasibility_tol)

    def _external_multipliers(self, y, zl, zu):
        n = self.n
        return Multipliers(eq=-y[:self.me].copy(), ineq=-y[self.me:].copy(),
                           lower=zl[:n].copy(), upper=zu[:n].copy())

    def _barrier_error(self, w, g, je, ji, c, y, zl, zu, mu):
        grad = np.concatenate([g, np.zeros(self.mi)]) + self._jt_y(je, ji, y) - zl + zu
        smax = 100.0
        nb = int(np.sum(self.hasl) + np.sum(self.hasu))
        sd = max(smax, (np.sum(np.abs(y)) + np.sum(zl) + np.sum(zu)) / max(1, self.m + nb)) / smax
        sc = max(smax, (np.sum(zl) + np.sum(zu)) / max(1, nb)) / smax
        comp = 0.0
        if np.any(self.hasl):
            comp = max(comp, np.max(np.abs((w - self.wl)[self.hasl] * zl[self.hasl] - mu)))
        if np.any(self.hasu):
            comp = max(comp, np.max(np.abs((self.wu - w)[self.hasu] * zu[self.hasu] - mu)))
        return max(np.max(np.abs(grad)) / sd, np.max(np.abs(c), initial=0.0), comp / sc)

    def _push_inside(self, x, lb, ub):
        x = x.copy()
        k1 = k2 = self.bound_push
        fl, fu = np.isfinite(lb), np.isfinite(ub)
        both = fl & fu
        pl = np.where(fl, k1 * np.maximum(1.0, np.abs(lb)), 0.0)
        pu = np.where(fu, k1 * np.maximum(1.0, np.abs(ub)), 0.0)
        pl[both] = np.minimum(pl[both], k2 * (ub[both] - lb[both]))
        pu[both] = np.minimum(pu[both], k2 * (ub[both] - lb[both]))
        x[fl] = np.maximum(x[fl], lb[fl] + pl[fl])
        x[fu] = np.minimum(x[fu], ub[fu] - pu[fu])
        return x

    def _max_step(self, w, d, tau):
        alpha = 1.0
        L, U = self.hasl, self.hasu
        neg = L & (d < 0)
        if np.any(neg):
            alpha = min(alpha, np.min(-tau * (w[neg] - self.wl[neg]) / d[neg]))
        pos = U & (d > 0)
        if np.any(pos):
            alpha = min(alpha, np.min(tau * (self.wu[pos] - w[pos]) / d[pos]))
        return float(alpha)

    def _max_dual_step(self, zl, zu, dzl, dzu, tau):
        alpha = 1.0
        for z, dz, mask in ((zl, dzl, self.hasl), (zu, dzu, self.hasu)):
            neg = mask & (dz < 0)
            if np.any(neg):
                alpha = min(alpha, np.min(-tau * z[neg] / dz[neg]))
        return float(alpha)

    def _safeguard_duals(self, w, zl, zu, mu):
        k = self.kappa_sigma
        L, U = self.hasl, self.hasu
        sl = w[L] - self.wl[L]
        zl[L] = np.clip(zl[L], mu / (k * sl), k * mu / sl)
        su = self.wu[U] - w[U]
        zu[U] = np.clip(zu[U], mu / (k * su), k * mu / su)
        return zl, zu

    # globalization
    def _trial(self, w_try, mu):
        try:
            f_try, c_try = self._values(w_try)
        except _NonFinite:
            return None
        return f_try, c_try, float(np.sum(np.abs(c_try))), self._barrier(w_try, f_try, mu)

    def _accept(self, theta0, phi0, slope, alpha, theta, phi, filt):
        """Filter acceptance test; returns the step kind or ``None``."""
        if theta > self.theta_max or not filt.acceptable(theta, phi):
            return None
        # barrier values near convergence differ by less than their rounding error
        phi0 = phi0 + 10 * np.finfo(float).eps * abs(phi0)
        switching = slope < 0 and alpha * (-slope) ** self.s_phi > \
            self.delta_switch * theta0 ** self.s_theta
        if switching and theta0 <= self.theta_min:
            return "f" if phi <= phi0 + self.eta_phi * alpha * slope else None
        if theta <= (1 - self.gamma_theta) * theta0 or phi <= phi0 - self.gamma_phi * theta0:
            return "h"
        return None

    def _alpha_min(self, theta0, slope):
        g = self.gamma_alpha
        if slope < 0:
            a = min(self.gamma_theta, -self.gamma_phi * theta0 / slope)
            if theta0 <= self.theta_min:
                a = min(a, self.delta_switch * theta0 ** self.s_theta / (-slope) ** self.s_phi)
            return g * a
        return g * self.gamma_theta

    def _filter_line_search(self, w, f, c, d, mu, tau, filt, solver, K, gphi, je, ji, y):
        theta0 = float(np.sum(np.abs(c)))
        phi0 = self._barrier(w, f, mu)
        slope = float(gphi @ d)
        alpha_max = self._max_step(w, d, tau)
        alpha_min = self._alpha_min(theta0, slope)
        alpha = alpha_max
        first = True
        while alpha >= alpha_min:
            w_try = w + alpha * d
            trial = self._trial(w_try, mu)
            if trial is not None:
                f_try, c_try, theta, phi = trial
                kind = self._accept(theta0, phi0, slope, alpha, theta, phi, filt)
                if kind is not None:
                    return self._finish(w_try, f_try, c_try, alpha, kind, theta0, phi0,
                                        theta, phi, slope, mu, filt)
                if first and theta >= theta0:
                    soc = self._second_order_correction(w, alpha, c, c_try, theta, mu, tau,
                                                        solver, K, gphi, je, ji, y, theta0,
                                                        phi0, slope, filt)
                    if soc is not None:
                        return soc
            first = False
            alpha *= 0.5
        return None

    def _finish(self, w_try, f_try, c_try, alpha, kind, theta0, phi0, theta, phi, slope, mu,
                filt):
        if kind != "f":
            filt.add((1 - self.gamma_theta) * theta0, phi0 - self.gamma_phi * theta0)
        record = StepRecord(theta0, phi0, theta, phi, kind, mu, alpha, slope)
        return w_try, alpha, f_try, c_try, record

    def _second_order_correction(self, w, alpha, c, c_try, theta_try, mu, tau, solver, K,
                                 gphi, je, ji, y, theta0, phi0, slope, filt):
        c_soc = alpha * c + c_try
        theta_old = theta_try
        for _ in range(self.max_soc):
            rhs = -np.concatenate([gphi + self._jt_y(je, ji, y), c_soc])
            d_soc = self._solve(solver, K, rhs)[:self.nw]
            a_soc = self._max_step(w, d_soc, tau)
            w_try = w + a_soc * d_soc
            trial = self._trial(w_try, mu)
            if trial is None:
                return None
            f_try, c_new, theta, phi = trial
            kind = self._accept(theta0, phi0, slope, alpha, theta, phi, filt)
            if kind is not None:
                return self._finish(w_try, f_try, c_new, alpha, kind, theta0, phi0, theta,
                                    phi, slope, mu, filt)
            if theta > self.kappa_soc * theta_old:
                return None
            theta_old = theta
            c_soc = a_soc * c_soc + c_new
        return None

    def _restoration(self, w, f, c, mu, tau, filt, zl, zu, je, ji):
        """Reduce the infeasibility with regularized minimum-norm Gauss-Newton
        steps until the iterate is acceptable to the filter."""
        theta0 = float(np.sum(np.abs(c)))
        phi0 = self._barrier(w, f, mu)
        filt.add((1 - self.gamma_theta) * theta0, phi0 - self.gamma_phi * theta0)
        w_r, c_r, theta_r = w.copy(), c, theta0
        for _ in range(self.max_restoration):
            _, je_r, ji_r = self._derivs(w_r)
            parts = self._kkt_parts(None, je_r, ji_r)
            sigma = self._sigma(w_r, zl, zu) + self.restoration_zeta
            solver, K, inertia = self._factor(parts, sigma, 0.0, self.delta_c_base)
            if solver is None:
                return None
            d = self._solve(solver, K, -np.concatenate([np.zeros(self.nw), c_r]))[:self.nw]
            alpha = self._max_step(w_r, d, tau)
            while alpha > 1e-10:
                trial = self._trial(w_r + alpha * d, mu)
                if trial is not None and trial[2] <= (1 - 1e-4 * alpha) * theta_r:
                    break
                alpha *= 0.5
            else:
                return None
            w_r = w_r + alpha * d
            f_r, c_r, theta_r, phi_r = trial
            if theta_r <= 0.9 * theta0 and filt.acceptable(theta_r, phi_r):
                record = StepRecord(theta0, phi0, theta_r, phi_r, "restoration", mu, 1.0, 0.0)
                return w_r, 1.0, f_r, c_r, record
        return None

    def _classify_failure(self, w, je, ji, c):
        theta = float(np.max(np.abs(c), initial=0.0))
        if theta > self.opt.feasibility_tol:
            grad_theta = self._jt_y(je, ji, np.sign(c))
            if np.max(np.abs(grad_theta)) <= 1e-6 * max(1.0, np.sum(np.abs(c))):
                return Status.INFEASIBLE, "converged to a stationary point of infeasibility"
            return Status.INFEASIBLE, "feasibility restoration failed"
        return Status.NUMERICAL_FAILURE, "line search failed"


def solve(problem, z0, options=None):
    """Solve ``problem`` from ``z0``; see ``InteriorPointSolver``."""
    options = options or SolverOptions()
    check = None
    if options.derivative_check:
        inner = InteriorPointSolver(problem, options)._push_inside(
            np.asarray(z0, float), problem.lb, problem.ub)
        check = derivative_check(problem, inner)
    report = InteriorPointSolver(problem, options).solve(z0)
    if check is not None:
        report.derivative_error = check.max_error
        if check.max_error > 1e-5:
            logger.warning("derivative check failed: %s", check)
    return report
