import numpy as np
import pytest

from conftest import random_unit_quaternion
from docking_ocp.constraints_cost import (ControlBounds, CostWeights, DockingGeometry,
                                          attitude_match_residual, collision_margin,
                                          docking_position_residual, docking_velocity_residual,
                                          running_cost, terminal_hessian, terminal_jacobian,
                                          terminal_residuals, thrust_margin, total_cost)
from docking_ocp.dynamics import make_state, rotation_matrix
from docking_ocp.errors import ConfigError, DomainError

G = DockingGeometry((0, 1, 0), (0, -1, 0), 1.0, 1.0)
N_TABLE = 1.0610e-3


def test_docking_position_examples():
    s = make_state(r=[0, -2, 0])
    np.testing.assert_array_equal(docking_position_residual(s, G), 0)
    np.testing.assert_array_equal(docking_position_residual(make_state(), G), [0, -2, 0])
    flip = [0, 0, 1, 0]
    s = make_state(r=[0, 2, 0], q_s=flip, q_t=flip)
    np.testing.assert_allclose(docking_position_residual(s, G), 0, atol=1e-15)
    with pytest.raises(DomainError):
        docking_position_residual(make_state(q_s=[0, 0, 0, 1.01]), G)


def test_docking_velocity_examples(rng):
    n = N_TABLE
    s = make_state(v=[-2 * n, 0, 0])
    np.testing.assert_allclose(docking_velocity_residual(s, G, n), 0, atol=1e-18)
    assert -2 * n == pytest.approx(-2.1220e-3, rel=1e-4)
    g = DockingGeometry((0.3, 0.1, -2), (1, 2, 3), 0.1, 0.1)
    s = make_state(w_s=[0, 0, n])
    np.testing.assert_allclose(docking_velocity_residual(s, g, n), 0, atol=1e-18)
    same = DockingGeometry((1, 2, 3), (1, 2, 3), 0.1, 0.1)
    s = make_state(w_s=rng.standard_normal(3), q_s=random_unit_quaternion(rng))
    np.testing.assert_allclose(docking_velocity_residual(s, same, n), 0, atol=1e-18)


def test_attitude_match_examples():
    s = make_state(w_s=[1, 2, 3], w_t=[1, 2, 3])
    np.testing.assert_array_equal(attitude_match_residual(s), 0)
    s = make_state(q_s=[0, 0, 1, 0], q_t=[0, 0, 0, 1])
    np.testing.assert_array_equal(attitude_match_residual(s), [0, 0, -1, 1, 0, 0, 0])
    s = make_state(w_t=[0, 0.052359, 0])
    np.testing.assert_array_equal(attitude_match_residual(s), [0, 0, 0, 0, 0, 0.052359, 0])


def test_collision_margin_examples():
    assert collision_margin(make_state(r=[0, 3, 0]), G) == 5.0
    assert collision_margin(make_state(r=[0, 2, 0]), G) == 0.0
    assert collision_margin(make_state(r=[1, 1, 1]), G) == -1.0


def test_thrust_margin_examples():
    b = ControlBounds(0.15, 1.0)
    assert thrust_margin(np.zeros(6), b) == 0.15
    u = np.sqrt(0.15)
    assert thrust_margin([u, 0, 0, 0, 0, 0], b) == pytest.approx(0.0, abs=1e-16)
    assert thrust_margin([0.3, 0, 0, 0, 0, 0], b) == pytest.approx(0.06)
    sq = ControlBounds(0.15, 1.0, "squared")
    assert thrust_margin([0.3, 0, 0, 0, 0, 0], sq) == pytest.approx(0.0225 - 0.09)


def test_bounds_and_weights_validation():
    with pytest.raises(ConfigError):
        ControlBounds(0.0, 1.0)
    with pytest.raises(ConfigError):
        ControlBounds(0.1, 1.0, "cubic")
    with pytest.raises(ConfigError):
        CostWeights(0, 0, 0)
    with pytest.raises(ConfigError):
        CostWeights(-1, 1, 1)
    with pytest.raises(ConfigError):
        DockingGeometry((0, 0, 0), (0, 0, 0), 1, 1).check_feasible()
    DockingGeometry((0, 1, 0), (0, -1, 0), 0.5, 0.5).check_feasible()


def test_running_cost_examples(rng):
    w = CostWeights()
    assert running_cost(np.zeros(6), w) == 0
    assert running_cost([1, 1, 1, 0, 0, 0], w) == 3
    for _ in range(20):
        c = rng.standard_normal(6)
        r = rotation_matrix(random_unit_quaternion(rng))
        rotated = np.concatenate([r @ c[:3], c[3:]])
        assert running_cost(rotated, w) == pytest.approx(running_cost(c, w), rel=1e-14)


def test_total_cost_examples():
    w = CostWeights()
    times = np.linspace(0, 100, 11)
    assert total_cost(times, np.zeros((11, 6)), w) == (100.0, 0.0, 0.0)
    U = np.zeros((11, 6))
    U[:, 0] = 1.0
    # the last node carries no weight in the left Riemann sum
    U[-1, 0] = 50.0
    J, u_total, m_total = total_cost(times, U, w)
    assert u_total == pytest.approx(100.0) and m_total == 0 and J == pytest.approx(200.0)
    with pytest.raises(DomainError):
        total_cost(np.array([0, 1, 3.0]), np.zeros((3, 6)), w)


def test_cost_monotone_in_weights(rng):
    times = np.linspace(0, 50, 6)
    U = rng.standard_normal((6, 6))
    base = total_cost(times, U, CostWeights(1, 1, 1)).J
    for w in (CostWeights(2, 1, 1), CostWeights(1, 2, 1), CostWeights(1, 1, 2)):
        assert total_cost(times, U, w).J >= base


def test_terminal_consistency():
    # docking with matched attitude puts the spheres exactly in contact
    for q in ([0, 0, 0, 1], [0, 0, 1, 0], [0, np.sin(0.4), 0, np.cos(0.4)]):
        r = rotation_matrix(q).T @ G.offset
        s = make_state(r=r, q_s=q, q_t=q)
        np.testing.assert_allclose(docking_position_residual(s, G), 0, atol=1e-15)
        assert collision_margin(s, G) == pytest.approx(0.0, abs=1e-14)


def _rand_state(rng, scale=1.0):
    return make_state(rng.standard_normal(3), rng.standard_normal(3), 0.1 * rng.standard_normal(3),
                      0.1 * rng.standard_normal(3), scale * random_unit_quaternion(rng),
                      random_unit_quaternion(rng))


def test_terminal_block_matches_checked_residuals(rng):
    s = _rand_state(rng)
    t = terminal_residuals(s, G, N_TABLE)
    np.testing.assert_allclose(t[:7], attitude_match_residual(s), atol=1e-15)
    np.testing.assert_allclose(t[7:10], docking_position_residual(s, G), atol=1e-14)
    np.testing.assert_allclose(t[10:13], docking_velocity_residual(s, G, N_TABLE), atol=1e-14)


def test_terminal_derivatives_by_finite_differences(rng):
    for scale in (1.0, 1.05):
        s = _rand_state(rng, scale)
        jac = terminal_jacobian(s, G, N_TABLE)
        h = 1e-6
        fd = np.column_stack([(terminal_residuals(s + h * e, G, N_TABLE)
                               - terminal_residuals(s - h * e, G, N_TABLE)) / (2 * h)
                              for e in np.eye(20)])
        np.testing.assert_allclose(jac, fd, atol=1e-8)
        y = rng.standard_normal(13)
        hess = terminal_hessian(s, G, N_TABLE, y)
        fdh = np.column_stack([(y @ terminal_jacobian(s + h * e, G, N_TABLE)
                                - y @ terminal_jacobian(s - h * e, G, N_TABLE)) / (2 * h)
                               for e in np.eye(20)])
        np.testing.assert_allclose(hess, fdh, atol=1e-7)
