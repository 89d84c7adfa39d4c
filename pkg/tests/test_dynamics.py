import numpy as np
import pytest

from platoon_dmpc import dynamics as dy


@pytest.mark.parametrize("t, v", [(0.0, 0.0), (12.5, 12.5), (30.0, 25.0), (55.0, 19.0), (80.0, 13.0)])
def test_leader_velocity(t, v):
    assert dy.leader_velocity(t) == pytest.approx(v, abs=1e-12)
    assert dy.DEFAULT_LEADER.velocity(t) == pytest.approx(v, abs=1e-12)


def test_leader_velocity_rejects_negative_time():
    with pytest.raises(ValueError):
        dy.leader_velocity(-0.1)
    with pytest.raises(ValueError):
        dy.DEFAULT_LEADER.state(-1.0)


def test_leader_position_is_exact_integral():
    assert dy.DEFAULT_LEADER.state(25.0)[0] == pytest.approx(312.5, abs=1e-12)
    # 312.5 + 25*25 + (25*10 - 0.6*100) + 13*40
    assert dy.DEFAULT_LEADER.state(100.0)[0] == pytest.approx(312.5 + 625 + 190 + 520, abs=1e-9)
    np.testing.assert_allclose(dy.DEFAULT_LEADER.state(55.0), [312.5 + 625 + 125 - 15, 19.0, -1.2])


def test_leader_trajectory_against_trapezoid_integral():
    traj = dy.leader_trajectory(0.0, 1000, 0.1)
    v = np.array([dy.leader_velocity(t) for t in np.arange(1001) * 0.1])
    # velocity is piecewise linear on the 0.1 s grid, so the trapezoid rule is exact
    p = np.concatenate([[0.0], np.cumsum(0.05 * (v[1:] + v[:-1]))])
    np.testing.assert_allclose(traj[:, 0], p, atol=1e-9)
    np.testing.assert_allclose(traj[:, 1], v, atol=1e-12)


def test_discretize():
    A_d, B_d = dy.discretize(0.1)
    np.testing.assert_array_equal(A_d, [[1, 0.1, 0], [0, 1, 0.1], [0, 0, 1]])
    np.testing.assert_array_equal(B_d, [0, 0, 0.1])
    np.testing.assert_allclose(A_d @ [0, 0, 1], [0, 0.1, 1])
    np.testing.assert_allclose(dy.discretize(1e-12)[0], np.eye(3), atol=1e-11)
    with pytest.raises(ValueError):
        dy.discretize(0.0)


@pytest.mark.parametrize("x, u, expected", [
    ([0, 0, 0], 0.0, [0, 0, 0]),
    ([0, 10, 0], 0.0, [1, 10, 0]),
    ([0, 0, 0], 3.0, [0, 0, 0.3]),
])
def test_linear_step(x, u, expected):
    A_d, B_d = dy.discretize(0.1)
    np.testing.assert_allclose(dy.linear_step(x, u, A_d, B_d), expected, atol=1e-15)


def test_feedback_linearization_torque():
    p = dy.PlantParams()
    assert dy.feedback_linearization_torque(0, 0, 0, p) == pytest.approx(0.3 / 0.9 * 1500 * 9.8 * 0.01)
    free = dy.PlantParams(C_A=0.0, f=0.0)
    assert dy.feedback_linearization_torque(20, 1, 0.7, free) == pytest.approx(0.3 / 0.9 * 1500 * 0.7)
    # v=20, a=1, u=0.5: (1/3) * (750 + 147 + 0.5*20*(0.8 + 20)) = (1/3) * 1105
    assert dy.feedback_linearization_torque(20, 1, 0.5, p) == pytest.approx(1105 / 3, rel=1e-12)


def test_torque_and_acceleration_are_inverse():
    p = dy.PlantParams()
    for v, a in [(0, 0), (13, -1.2), (25, 0.8)]:
        assert dy.acceleration_from_torque(v, dy.torque_from_acceleration(v, a, p), p) == pytest.approx(a)


def test_nonlinear_plant_equilibrium():
    p = dy.PlantParams()
    v = 20.0
    T = dy.torque_from_acceleration(v, 0.0, p)
    x = np.array([0.0, v, 0.0])
    for _ in range(100):
        x, T = dy.nonlinear_step(x, T, T, p, 0.01)
    np.testing.assert_allclose(x, [20.0, v, 0.0], atol=1e-9)


def test_frozen_torque_with_huge_lag():
    p = dy.PlantParams(delta=1e9)
    T = 500.0
    x, T2 = dy.nonlinear_step([0.0, 10.0, 0.0], T, 0.0, p, 0.01)
    assert T2 == pytest.approx(T, rel=1e-9)
    assert x[2] == pytest.approx(dy.acceleration_from_torque(x[1], T, p))


def test_lag_step_matches_closed_form():
    delta, u, a0 = 0.4, 2.0, -1.0
    x = dy.lag_step([0.0, 5.0, a0], u, delta, 0.1, 0.01)
    decay = np.exp(-0.1 / delta)
    c = a0 - u
    exact = [5 * 0.1 + 0.5 * u * 0.01 + c * delta * (0.1 - delta * (1 - decay)),
             5 + u * 0.1 + c * delta * (1 - decay), u + c * decay]
    np.testing.assert_allclose(x, exact, atol=1e-9)


def test_substep_must_divide_step():
    with pytest.raises(ValueError):
        dy.lag_step([0, 0, 0], 0.0, 0.4, 0.1, 0.03)


def test_plant_params_validation():
    with pytest.raises(ValueError):
        dy.PlantParams(m=0)
    with pytest.raises(ValueError):
        dy.PlantParams(f=-0.1)
