import numpy as np
import pytest

from conftest import random_unit_quaternion
from docking_ocp.dynamics import (BodyParams, InertiaTensor, cw_analytic, cw_derivative,
                                  euler_yxz, full_derivative, gyro_derivative,
                                  inertial_angular_velocity, make_state, mean_motion,
                                  quaternion_derivative, quaternion_from_euler_yxz,
                                  rotation_matrix, thrust_to_body)
from docking_ocp.errors import DomainError, PhysicalityWarning
from docking_ocp.propagation import propagate_reference

N_TABLE = np.sqrt(398e12 / 7071000.0**3)


def test_mean_motion_examples():
    assert mean_motion(1.0, 1.0) == 1.0
    assert mean_motion(8.0, 2.0) == 1.0
    assert mean_motion(398e12, 7071000.0) == pytest.approx(1.0610e-3, rel=1e-4)
    with pytest.raises(DomainError):
        mean_motion(0.0, 1.0)
    with pytest.raises(DomainError):
        mean_motion(1.0, -1.0)


def test_cw_derivative_examples():
    n = N_TABLE
    assert np.all(cw_derivative([0, 3, 0, 0, 0, 0], [0, 0, 0], n, 200) == 0)
    np.testing.assert_allclose(cw_derivative([1, 0, 0, 0, 0, 0], [0, 0, 0], 0.7, 1),
                               [0, 0, 0, 3 * 0.49, 0, 0], atol=1e-15)
    np.testing.assert_allclose(cw_derivative(np.zeros(6), [0.15, 0, 0], n, 200),
                               [0, 0, 0, 7.5e-4, 0, 0], atol=1e-18)
    with pytest.raises(DomainError):
        cw_derivative(np.zeros(6), np.zeros(3), n, 0.0)


def test_cw_analytic_examples(rng):
    n = N_TABLE
    s0 = rng.standard_normal(6)
    np.testing.assert_allclose(cw_analytic(s0, n, 0.0), s0, atol=1e-15)
    for t in (1.0, 123.0, 4000.0):
        np.testing.assert_allclose(cw_analytic([0, 7.0, 0, 0, 0, 0], n, t), [0, 7.0, 0, 0, 0, 0],
                                   atol=1e-12)
    out = cw_analytic([0, 0, 1, 0, 0, 0], n, np.pi / (2 * n))
    assert out[2] == pytest.approx(0.0, abs=1e-12)
    assert out[5] == pytest.approx(-n, rel=1e-12)


def test_cw_analytic_against_integrator(rng):
    # numerical integration of the raw ODE is the independent route
    from scipy.integrate import solve_ivp

    n = N_TABLE
    for _ in range(5):
        s0 = rng.uniform(-10, 10, 6)
        sol = solve_ivp(lambda t, s: cw_derivative(s, np.zeros(3), n, 200.0), (0, 400), s0,
                        method="DOP853", rtol=1e-12, atol=1e-12)
        ref = sol.y[:, -1]
        np.testing.assert_allclose(cw_analytic(s0, n, 400.0), ref, rtol=1e-8,
                                   atol=1e-8 * np.max(np.abs(ref)))


def test_quaternion_derivative_examples(rng):
    q = random_unit_quaternion(rng)
    assert np.all(quaternion_derivative(q, [0, 0, 0]) == 0)
    np.testing.assert_allclose(quaternion_derivative([0, 0, 0, 1], [0, 0.052359, 0]),
                               [0, 0.0261795, 0, 0], atol=1e-16)
    for _ in range(100):
        q = random_unit_quaternion(rng)
        w = rng.standard_normal(3)
        assert abs(quaternion_derivative(q, w) @ q) <= 1e-14


def test_gyro_derivative_examples():
    jt = InertiaTensor(1000, 2000, 1000)
    assert np.all(gyro_derivative([0, 0.052359, 0], jt) == 0)
    np.testing.assert_allclose(gyro_derivative([0.1, 0.2, 0.3], jt), [0.06, 0, -0.02],
                               atol=1e-15)
    np.testing.assert_allclose(gyro_derivative([0, 0, 0], InertiaTensor(2000, 5000, 2000),
                                               [1, 0, 0]), [5e-4, 0, 0])


def test_inertia_validation():
    with pytest.raises(DomainError):
        InertiaTensor(0, 1, 1)
    with pytest.warns(PhysicalityWarning):
        j = InertiaTensor(2000, 5000, 2000)
    assert not j.is_physical()
    with pytest.raises(DomainError):
        InertiaTensor(2000, 5000, 2000, strict=True)
    assert InertiaTensor(1000, 2000, 1000).is_physical()


def test_rotation_matrix_examples(rng):
    np.testing.assert_array_equal(rotation_matrix([0, 0, 0, 1]), np.eye(3))
    np.testing.assert_allclose(rotation_matrix([0, 0, 1, 0]), np.diag([-1.0, -1.0, 1.0]),
                               atol=1e-15)
    for _ in range(100):
        q = random_unit_quaternion(rng)
        r = rotation_matrix(q)
        assert np.max(np.abs(r.T @ r - np.eye(3))) <= 1e-12
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)
        v = rng.standard_normal(3)
        np.testing.assert_allclose(r.T @ (r @ v), v, atol=1e-12)
    with pytest.raises(DomainError):
        rotation_matrix([0, 0, 0, 1.1])


def test_rotation_matrix_is_passive():
    # a quaternion for +90 deg about z maps the reference x axis to body -y
    a = np.pi / 2
    q = np.array([0, 0, np.sin(a / 2), np.cos(a / 2)])
    np.testing.assert_allclose(rotation_matrix(q) @ [1, 0, 0], [0, -1, 0], atol=1e-15)


def test_inertial_angular_velocity_examples():
    n = 1.0610e-3
    np.testing.assert_allclose(inertial_angular_velocity([0, 0, 0, 1], [0, 0, 0], n),
                               [0, 0, -n])
    np.testing.assert_allclose(inertial_angular_velocity([0, 0, 0, 1], [0, 0, n], n), 0,
                               atol=1e-18)
    a, b, c = 0.1, -0.2, 0.3
    np.testing.assert_allclose(inertial_angular_velocity([0, 0, 1, 0], [a, b, c], n),
                               [-a, -b, c - n], atol=1e-15)


def test_thrust_to_body_examples(rng):
    np.testing.assert_array_equal(thrust_to_body([0, 0, 0, 1], [1, 2, 3]), [1, 2, 3])
    np.testing.assert_allclose(thrust_to_body([0, 0, 1, 0], [1, 0, 0]), [-1, 0, 0],
                               atol=1e-15)
    for _ in range(50):
        u = rng.standard_normal(3)
        out = thrust_to_body(random_unit_quaternion(rng), u)
        assert abs(np.linalg.norm(out) - np.linalg.norm(u)) <= 1e-12


def test_full_derivative_examples(scenario, rng):
    p = scenario.body_params
    d = full_derivative(scenario.initial_state(), np.zeros(6), p)
    expected = np.zeros(20)
    expected[16:20] = [0, 0.0261795, 0, 0]
    np.testing.assert_allclose(d, expected, atol=1e-15)
    assert np.all(full_derivative(make_state(), np.zeros(6), p) == 0)
    s = make_state(rng.standard_normal(3), rng.standard_normal(3), rng.standard_normal(3),
                   rng.standard_normal(3), random_unit_quaternion(rng),
                   random_unit_quaternion(rng))
    c = rng.standard_normal(6)
    lhs = full_derivative(s, 2 * c, p) - full_derivative(s, c, p)
    rhs = full_derivative(s, c, p) - full_derivative(s, np.zeros(6), p)
    np.testing.assert_allclose(lhs, rhs, atol=1e-14)


def test_out_of_plane_decoupling(scenario):
    p = scenario.body_params
    x0 = make_state([1.0, -2.0, 0.0], [0.01, 0.02, 0.0])
    X = propagate_reference(x0, p, np.linspace(0, 400, 9))
    assert np.all(X[:, 2] == 0) and np.all(X[:, 5] == 0)


def test_torque_free_conservation(scenario):
    p = BodyParams(200.0, InertiaTensor(1000, 2000, 1000), InertiaTensor(1200, 2000, 1500),
                   N_TABLE)
    x0 = make_state(w_s=[0.03, -0.02, 0.05], w_t=[0.01, 0.052359, -0.02])
    X = propagate_reference(x0, p, np.linspace(0, 400, 101))
    for w_blk, j in ((slice(6, 9), p.inertia_s.as_array()), (slice(9, 12), p.inertia_t.as_array())):
        w = X[:, w_blk]
        e = 0.5 * np.sum(j * w * w, axis=1)
        h = np.linalg.norm(j * w, axis=1)
        assert np.max(np.abs(e / e[0] - 1)) <= 1e-8
        assert np.max(np.abs(h / h[0] - 1)) <= 1e-8


def test_euler_roundtrip(rng):
    for _ in range(100):
        q = random_unit_quaternion(rng)
        phi, theta, psi, degenerate = euler_yxz(q)
        assert not degenerate
        back = quaternion_from_euler_yxz(phi, theta, psi)
        assert min(np.max(np.abs(back - q)), np.max(np.abs(back + q))) <= 1e-9


def test_euler_gimbal_flag():
    q = quaternion_from_euler_yxz(0.3, np.pi / 2, 0.0)
    phi, theta, psi, degenerate = euler_yxz(q)
    assert degenerate and psi == 0.0
    assert theta == pytest.approx(np.pi / 2)
