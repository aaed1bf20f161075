import numpy as np
import pytest
import scipy.sparse as sp

from docking_ocp.solver import (Multipliers, NlpProblem, SolverOptions, Status, derivative_check,
                                kkt_residual, solve)

GAMMA_THETA, GAMMA_PHI, ETA_PHI = 1e-5, 1e-8, 1e-8


def bound_problem():
    return NlpProblem(n=1, objective=lambda z: float(z[0] ** 2), gradient=lambda z: 2 * z,
                      lb=np.array([1.0]))


def ineq_problem():
    return NlpProblem(n=1, objective=lambda z: float(z[0] ** 2), gradient=lambda z: 2 * z,
                      n_ineq=1, ineq=lambda z: z - 1.0,
                      ineq_jacobian=lambda z: sp.csr_matrix(np.ones((1, 1))))


def eq_qp():
    return NlpProblem(
        n=2, objective=lambda z: float((z[0] - 1) ** 2 + (z[1] - 2) ** 2),
        gradient=lambda z: np.array([2 * (z[0] - 1), 2 * (z[1] - 2)]),
        n_eq=1, eq=lambda z: np.array([z[0] + z[1] - 1]),
        eq_jacobian=lambda z: sp.csr_matrix(np.ones((1, 2))),
        hessian=lambda z, s, ye, yi: sp.csr_matrix(2 * s * np.eye(2)))


def rosenbrock_disk():
    # minimize Rosenbrock inside the disk |z|^2 <= 1.5; optimum on the boundary
    f = lambda z: float(100 * (z[1] - z[0] ** 2) ** 2 + (1 - z[0]) ** 2)
    g = lambda z: np.array([-400 * z[0] * (z[1] - z[0] ** 2) - 2 * (1 - z[0]),
                            200 * (z[1] - z[0] ** 2)])
    return NlpProblem(n=2, objective=f, gradient=g, n_ineq=1,
                      ineq=lambda z: np.array([1.5 - z @ z]),
                      ineq_jacobian=lambda z: sp.csr_matrix(-2 * z[None, :]))


def assert_kkt(p, rep, opts=SolverOptions()):
    k = kkt_residual(p, rep.x, rep.multipliers)
    assert k.stationarity <= opts.kkt_tol
    assert k.feasibility_eq <= opts.feasibility_tol
    assert k.feasibility_ineq <= opts.feasibility_tol
    assert k.complementarity <= opts.kkt_tol
    assert np.all(rep.x >= p.lb) and np.all(rep.x <= p.ub)


@pytest.mark.parametrize("make", [bound_problem, ineq_problem])
def test_toy_active_bound(make):
    p = make()
    rep = solve(p, np.array([3.0]))
    assert rep.status is Status.CONVERGED
    assert rep.x[0] == pytest.approx(1.0, abs=1e-8)
    assert rep.objective == pytest.approx(1.0, abs=1e-8)
    assert_kkt(p, rep)
    m = rep.multipliers
    assert max(m.lower.max(initial=0), m.ineq.max(initial=0)) == pytest.approx(2.0, rel=1e-6)


def test_toy_equality_qp():
    p = eq_qp()
    rep = solve(p, np.array([5.0, -3.0]))
    assert rep.status is Status.CONVERGED
    np.testing.assert_allclose(rep.x, [0.0, 1.0], atol=1e-8)
    assert rep.objective == pytest.approx(2.0, abs=1e-8)
    assert rep.multipliers.eq[0] == pytest.approx(-2.0, rel=1e-8)
    assert_kkt(p, rep)


def test_rosenbrock_disk():
    p = rosenbrock_disk()
    rep = solve(p, np.array([-1.0, 0.5]))
    assert rep.converged
    assert rep.x @ rep.x == pytest.approx(1.5, abs=1e-7)
    assert rep.x[0] == pytest.approx(0.9072339, abs=1e-6)
    assert_kkt(p, rep)


def test_initial_point_outside_bounds_is_clipped():
    rep = solve(bound_problem(), np.array([-4.0]))
    assert rep.clipped and rep.converged


def test_nonfinite_evaluation_reports_index():
    p = NlpProblem(n=2, objective=lambda z: float(z @ z), gradient=lambda z: 2 * z, n_eq=2,
                   eq=lambda z: np.array([z[0] - 1, np.nan]),
                   eq_jacobian=lambda z: sp.csr_matrix(np.eye(2)))
    rep = solve(p, np.array([0.5, 0.5]))
    assert rep.status is Status.NUMERICAL_FAILURE
    assert rep.failed_index == 1


def test_infeasible_problem():
    p = NlpProblem(n=1, objective=lambda z: float(z[0] ** 2), gradient=lambda z: 2 * z, n_eq=2,
                   eq=lambda z: np.array([z[0] - 1, z[0] - 2]),
                   eq_jacobian=lambda z: sp.csr_matrix(np.ones((2, 1))))
    rep = solve(p, np.array([0.0]), SolverOptions(max_iterations=200))
    assert rep.status in (Status.INFEASIBLE, Status.MAX_ITERATIONS)
    assert not rep.converged


def test_iteration_limit():
    rep = solve(rosenbrock_disk(), np.array([-1.0, 0.5]), SolverOptions(max_iterations=2))
    assert rep.status is Status.MAX_ITERATIONS and rep.iterations == 2


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(kkt_tol=0)
    with pytest.raises(ValueError):
        SolverOptions(mu_factor=1.5)


def test_kkt_residual_examples():
    quad = NlpProblem(n=2, objective=lambda z: float(z @ z), gradient=lambda z: 2 * z)
    zero = Multipliers(np.zeros(0), np.zeros(0), np.zeros(2), np.zeros(2))
    assert tuple(kkt_residual(quad, np.zeros(2), zero)) == (0.0, 0.0, 0.0, 0.0)
    p = ineq_problem()
    k = kkt_residual(p, np.array([1.0]), Multipliers(np.zeros(0), np.array([2.0]),
                                                     np.zeros(1), np.zeros(1)))
    assert k.stationarity == 0.0 and k.complementarity == 0.0
    k = kkt_residual(eq_qp(), np.array([0.25, 1.0]),
                     Multipliers(np.array([-2.0]), np.zeros(0), np.zeros(2), np.zeros(2)))
    assert k.feasibility_eq == pytest.approx(0.25)


def test_derivative_check_examples():
    a = np.array([[3.0, 1.0], [1.0, 2.0]])
    quad = NlpProblem(n=2, objective=lambda z: float(z @ a @ z), gradient=lambda z: 2 * a @ z)
    assert derivative_check(quad, np.array([0.3, -1.2])).max_error <= 1e-10

    def bad_jac(z):
        j = np.array([[2 * z[0], 1.0], [0.0, 3.0]])
        j[0, 0] = -j[0, 0]
        return sp.csr_matrix(j)

    bad = NlpProblem(n=2, objective=lambda z: 0.0, gradient=lambda z: np.zeros(2), n_eq=2,
                     eq=lambda z: np.array([z[0] ** 2 + z[1], 3 * z[1]]), eq_jacobian=bad_jac,
                     eq_structure=(np.array([0, 0, 1]), np.array([0, 1, 1])))
    for dense in (False, True):
        chk = derivative_check(bad, np.array([1.3, 0.4]), dense=dense)
        assert chk.max_error == pytest.approx(2.0, rel=1e-6)
        assert "jacobian[0, 0]" in chk.location


def test_derivative_check_catches_missing_structure():
    p = NlpProblem(n=2, objective=lambda z: 0.0, gradient=lambda z: np.zeros(2), n_eq=1,
                   eq=lambda z: np.array([z[0] * z[1]]),
                   eq_jacobian=lambda z: sp.csr_matrix(([z[1]], ([0], [0])), shape=(1, 2)),
                   eq_structure=(np.array([0]), np.array([0])))
    chk = derivative_check(p, np.array([0.5, 2.0]))
    assert chk.max_error >= 1.0 and "outside declared sparsity" in chk.location


def _step_progress_ok(rec):
    if rec.kind == "f":
        return rec.phi_after <= rec.phi_before + ETA_PHI * rec.alpha * rec.slope + 1e-12
    if rec.kind == "h":
        return (rec.theta_after <= (1 - GAMMA_THETA) * rec.theta_before
                or rec.phi_after <= rec.phi_before - GAMMA_PHI * rec.theta_before)
    return rec.kind == "restoration"


@pytest.mark.parametrize("make,z0", [(rosenbrock_disk, [-1.0, 0.5]), (eq_qp, [5.0, -3.0]),
                                     (ineq_problem, [3.0])])
def test_accepted_steps_make_filter_progress(make, z0):
    rep = solve(make(), np.array(z0))
    assert rep.converged and len(rep.merit_trace) == rep.iterations
    for rec in rep.merit_trace:
        assert _step_progress_ok(rec), rec
        if rec.kind == "f":
            assert rec.phi_after <= rec.phi_before


def test_deterministic(scenario):
    from docking_ocp.transcription import initial_guess, transcribe

    nlp = transcribe(scenario, 12)
    z0 = initial_guess(scenario, 12, detour=True)
    a = solve(nlp.as_problem(), z0)
    b = solve(nlp.as_problem(), z0)
    assert a.converged
    np.testing.assert_array_equal(a.x, b.x)
    assert_kkt(nlp.as_problem(), a)
