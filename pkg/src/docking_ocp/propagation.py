"""Open-loop propagation of the 20-state system.

Three propagators are provided for cross-checking one another:

* ``reference``: adaptive embedded Runge-Kutta (DOP853, rtol 1e-10)
* ``analytic``: closed-form CW solution, translational block only
* ``trapezoidal``: fixed-step implicit trapezoidal rule solved by Newton,
  using the same quaternion rule as the collocation defects
"""

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import NU, NX, TRANS, cw_analytic, derivative_batch
from .errors import DomainError

REFERENCE_RTOL = 1e-10
REFERENCE_ATOL = 1e-13

MODES = ("analytic-cw", "reference-rk", "trapezoidal")


def reference_propagate(rhs, x0, times, rtol=REFERENCE_RTOL, atol=REFERENCE_ATOL):
    """Integrate ``dx/dt = rhs(t, x)`` and sample at ``times`` (shape ``(T, n)``)."""
    times = np.asarray(times, dtype=float)
    sol = solve_ivp(rhs, (times[0], times[-1]), np.asarray(x0, dtype=float), method="DOP853",
                    t_eval=times, rtol=rtol, atol=atol, dense_output=False)
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    return sol.y.T


def _zero_control_rhs(p):
    zero = np.zeros((1, NU))

    def rhs(t, x):
        return derivative_batch(x[None, :], zero, p)[0]

    return rhs


def propagate_reference(x0, p, times, controls=None):
    """Reference propagation of the full state with piecewise-constant controls.

    ``controls`` may be ``None`` (zero) or a callable ``t -> (6,)``.
    """
    if controls is None:
        return reference_propagate(_zero_control_rhs(p), x0, times)

    def rhs(t, x):
        return derivative_batch(x[None, :], np.asarray(controls(t), float)[None, :], p)[0]

    return reference_propagate(rhs, x0, times)


def propagate_analytic(x0, p, times):
    x0 = np.asarray(x0, dtype=float)
    s0 = x0[TRANS] if x0.size == NX else x0
    return np.array([cw_analytic(s0, p.mean_motion, t - times[0]) for t in times])


def trapezoidal_step(x0, u0, u1, dt, p, rule="cayley", tol=1e-14, max_iter=50):
    """Solve one implicit trapezoidal step by Newton's method."""
    from .transcription import interval_jacobians, interval_rate

    X0, U0, U1 = x0[None, :], u0[None, :], u1[None, :]
    x1 = x0 + dt * derivative_batch(X0, U0, p)[0]
    eye = np.eye(NX)
    for _ in range(max_iter):
        res = x1 - x0 - dt * interval_rate(X0, x1[None, :], U0, U1, p, rule)[0]
        if np.max(np.abs(res)) <= tol * max(1.0, np.max(np.abs(x1))):
            return x1
        _, P1, _ = interval_jacobians(X0, x1[None, :], p, rule)
        x1 = x1 - np.linalg.solve(eye - dt * P1[0], res)
    return x1


def propagate_trapezoidal(x0, p, times, controls=None, rule="cayley"):
    times = np.asarray(times, dtype=float)
    if controls is None:
        controls = np.zeros((times.size, NU))
    controls = np.asarray(controls, dtype=float)
    out = np.empty((times.size, NX))
    out[0] = x0
    for k in range(times.size - 1):
        out[k + 1] = trapezoidal_step(out[k], controls[k], controls[k + 1],
                                      times[k + 1] - times[k], p, rule)
    return out


def propagate(x0, p, times, mode="reference-rk", controls=None):
    """Dispatch to one of the propagators in ``MODES``.

    The analytic mode only covers the translational block and refuses
    nonzero controls.
    """
    if mode not in MODES:
        raise DomainError(f"unknown propagation mode {mode!r}; choose from {MODES}")
    if mode == "analytic-cw":
        if controls is not None and np.any(np.asarray(controls) != 0):
            raise DomainError("the analytic CW solution only exists for zero controls")
        return propagate_analytic(x0, p, times)
    if mode == "trapezoidal":
        return propagate_trapezoidal(np.asarray(x0, float), p, times, controls)
    if controls is not None:
        ctrl = np.asarray(controls, dtype=float)
        times = np.asarray(times, dtype=float)
        return propagate_reference(
            x0, p, times,
            lambda t: ctrl[min(np.searchsorted(times, t, side="right") - 1, len(ctrl) - 1)])
    return propagate_reference(x0, p, times)
