import math

import numpy as np
import pytest

from jumpmesh.problems import (
    PROBLEMS,
    arm_inertia_phi,
    get_problem,
    make_min_energy_double_integrator,
    make_min_time_double_integrator,
    make_robot_arm,
)


def test_registry():
    for name in PROBLEMS:
        p = get_problem(name)
        assert p.name == name
        p.check_dimensions()
    with pytest.raises(KeyError, match="unknown problem"):
        get_problem("shuttle")


def test_robot_arm_rest_state_is_equilibrium():
    p = make_robot_arm()
    y = np.array([[4.5, 0, 0, 0, math.pi / 4, 0]])
    assert np.array_equal(p.dynamics(y, np.zeros((1, 3)), np.zeros(1)), np.zeros((1, 6)))


def test_robot_arm_inertia():
    assert arm_inertia_phi(4.5, 5.0) == pytest.approx((0.125 + 91.125) / 3, rel=1e-15)


def test_robot_arm_boundary_values():
    p = make_robot_arm()
    lo, hi = p.initial_state_bounds
    assert np.array_equal(lo, hi)
    np.testing.assert_allclose(lo, [4.5, 0, 0, 0, math.pi / 4, 0])
    lo, hi = p.final_state_bounds
    np.testing.assert_allclose(lo, [4.5, 0, 2 * math.pi / 3, 0, math.pi / 4, 0])
    assert p.t0_bounds == (0.0, 0.0) and p.tf_bounds[0] > 0
    # Boundary values sit strictly inside the state box.
    assert np.all(p.state_bounds[0] < lo) and np.all(lo < p.state_bounds[1])
    assert p.mayer(None, 0.0, None, 9.14) == 9.14


def test_robot_arm_torques_accelerate():
    p = make_robot_arm()
    y = np.array([[4.5, 0, 0, 0, math.pi / 4, 0]])
    a = p.dynamics(y, np.ones((1, 3)), np.zeros(1))[0]
    i_phi = arm_inertia_phi(4.5)
    np.testing.assert_allclose(a[[1, 3, 5]], [1 / 5, 1 / (i_phi * 0.5), 1 / i_phi], rtol=1e-14)


@pytest.mark.parametrize("d,tf", [(1.0, 2.0), (4.0, 4.0)])
def test_min_time_reference(d, tf):
    p = make_min_time_double_integrator(d)
    assert p.reference["tf"] == pytest.approx(tf)
    assert p.tf_bounds[0] < tf < p.tf_bounds[1]
    # u = +1 then -1, switching at tf/2: rest at tf with x = d.
    ts = tf / 2
    x_f = 0.5 * ts**2 + ts * ts - 0.5 * ts**2
    assert x_f == pytest.approx(d)
    with pytest.raises(ValueError):
        make_min_time_double_integrator(0.0)


def test_min_energy_reference():
    p = make_min_energy_double_integrator()
    t = np.linspace(0.0, 1.0, 2001)
    u = 6 - 12 * t
    from scipy.integrate import simpson

    cost = simpson(0.5 * u**2, x=t)
    assert cost == pytest.approx(p.reference["cost"], rel=1e-5)
    assert p.final_state_bounds[0][0] == 1.0
    lag = p.lagrange(np.zeros((3, 2)), np.array([[0.0], [2.0], [-2.0]]), np.zeros(3))
    np.testing.assert_array_equal(lag, [0.0, 2.0, 2.0])


def test_bad_dimensions_rejected():
    from jumpmesh.problems import OcpProblem

    p = OcpProblem("bad", 2, 1, lambda y, u, t: y[:, :1], ([-1, -1], [1, 1]), (-1, 1), (0, 0), (1, 1))
    with pytest.raises(ValueError, match="dynamics"):
        p.check_dimensions()
