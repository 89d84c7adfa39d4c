"""
Longitudinal vehicle models and the leader reference profile.

State vectors are ``[p, v, a]`` (m, m/s, m/s^2) and the control input is a
jerk-like command ``u`` (m/s^3) for the linear models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# continuous triple integrator
A_CT = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
B_CT = np.array([0.0, 0.0, 1.0])

PLANT_LEVELS = ("ideal", "lag", "nonlinear")


@dataclass(frozen=True)
class PlantParams:
    m: float = 1500.0
    eta: float = 0.9
    r_w: float = 0.3
    C_A: float = 0.5
    g: float = 9.8
    f: float = 0.01
    delta: float = 0.4

    def __post_init__(self):
        for name in ("m", "eta", "r_w", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"plant parameter {name} must be positive")
        for name in ("C_A", "g", "f"):
            if getattr(self, name) < 0:
                raise ValueError(f"plant parameter {name} must be non-negative")


# ---------------------------------------------------------------- leader

# (start time, acceleration) of each piece; velocity is continuous.
_PIECES = ((0.0, 1.0), (25.0, 0.0), (50.0, -1.2), (60.0, 0.0))


@dataclass(frozen=True)
class LeaderProfile:
    """Piecewise-constant-acceleration leader.

    ``pieces`` holds (start time, acceleration) pairs in increasing time;
    the profile starts at ``p0``/``v0`` at the first start time.
    """

    pieces: tuple = _PIECES
    p0: float = 0.0
    v0: float = 0.0

    def _knots(self):
        knots = []
        p, v = self.p0, self.v0
        for k, (ts, acc) in enumerate(self.pieces):
            knots.append((ts, p, v, acc))
            if k + 1 < len(self.pieces):
                dt = self.pieces[k + 1][0] - ts
                p += v * dt + 0.5 * acc * dt * dt
                v += acc * dt
        return knots

    def state(self, t: float) -> np.ndarray:
        if t < self.pieces[0][0]:
            raise ValueError(f"leader profile is undefined for t={t} < {self.pieces[0][0]}")
        knots = self._knots()
        ts, p, v, acc = knots[0]
        for knot in knots:
            if knot[0] <= t:
                ts, p, v, acc = knot
            else:
                break
        dt = t - ts
        return np.array([p + v * dt + 0.5 * acc * dt * dt, v + acc * dt, acc])

    def velocity(self, t: float) -> float:
        return float(self.state(t)[1])


DEFAULT_LEADER = LeaderProfile()


def constant_speed_leader(speed: float, p0: float = 0.0) -> LeaderProfile:
    return LeaderProfile(pieces=((0.0, 0.0),), p0=p0, v0=speed)


def leader_velocity(t: float) -> float:
    """Four-piece reference speed: ramp, hold 25, decelerate, hold 13."""
    if t < 0:
        raise ValueError("leader velocity is defined for t >= 0")
    if t < 25:
        return float(t)
    if t < 50:
        return 25.0
    if t < 60:
        return 25.0 - 1.2 * (t - 50.0)
    return 13.0


def leader_trajectory(t0: float, n_steps: int, dt: float, profile: LeaderProfile = DEFAULT_LEADER):
    """Exact leader states at t0, t0+dt, ..., t0+n_steps*dt, shape (n_steps+1, 3)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return np.array([profile.state(t0 + k * dt) for k in range(n_steps + 1)])


# ---------------------------------------------------------------- linear models

def discretize(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Forward-Euler discretization of the triple integrator."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    A_d = np.array([[1.0, dt, 0.0], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    B_d = np.array([0.0, 0.0, dt])
    return A_d, B_d


def linear_step(x, u: float, A_d: np.ndarray, B_d: np.ndarray) -> np.ndarray:
    return A_d @ np.asarray(x, dtype=float) + B_d * u


def rk4_step(f, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def lag_step(x, u: float, delta: float, dt: float, dt_sub: float) -> np.ndarray:
    """Integrate delta*a' + a = u (the exactly linearized plant) over dt."""

    def rhs(_t, y):
        return np.array([y[1], y[2], (u - y[2]) / delta])

    y = np.asarray(x, dtype=float)
    n = _n_sub(dt, dt_sub)
    h = dt / n
    for k in range(n):
        y = rk4_step(rhs, k * h, y, h)
    return y


def _n_sub(dt, dt_sub):
    n = int(round(dt / dt_sub))
    if n < 1 or abs(n * dt_sub - dt) > 1e-9 * max(dt, 1.0):
        raise ValueError(f"dt_sub={dt_sub} does not divide dt={dt}")
    return n


# ---------------------------------------------------------------- nonlinear plant

def feedback_linearization_torque(v: float, a: float, u: float, params: PlantParams) -> float:
    """Desired wheel torque that cancels drag and rolling resistance."""
    pr = params
    return (pr.r_w / pr.eta) * (pr.m * u + pr.m * pr.g * pr.f + pr.C_A * v * (2 * pr.delta * a + v))


def acceleration_from_torque(v: float, T: float, params: PlantParams) -> float:
    pr = params
    return ((pr.eta / pr.r_w) * T - pr.C_A * v * v - pr.m * pr.g * pr.f) / pr.m


def torque_from_acceleration(v: float, a: float, params: PlantParams) -> float:
    pr = params
    return (pr.r_w / pr.eta) * (pr.m * a + pr.C_A * v * v + pr.m * pr.g * pr.f)


def nonlinear_step(x, T: float, T_des, params: PlantParams, dt_sub: float):
    """One RK4 step of the torque-lag plant.

    ``T_des`` is either a constant torque or a callable ``T_des(p, v, a)``
    evaluated at every stage (closed-loop torque law). The acceleration is
    algebraic in (v, T), so the integrated state is (p, v, T).
    Returns ``(new_x, new_T)``.
    """
    pr = params
    law = T_des if callable(T_des) else (lambda _p, _v, _a: T_des)

    def rhs(_t, y):
        p, v, tq = y
        a = acceleration_from_torque(v, tq, pr)
        return np.array([v, a, (law(p, v, a) - tq) / pr.delta])

    x = np.asarray(x, dtype=float)
    y = rk4_step(rhs, 0.0, np.array([x[0], x[1], T]), dt_sub)
    a = acceleration_from_torque(y[1], y[2], pr)
    return np.array([y[0], y[1], a]), float(y[2])


def nonlinear_closed_loop(x, T: float, u: float, params: PlantParams, dt: float, dt_sub: float):
    """Hold ``u`` for ``dt`` with the feedback-linearizing torque law active."""
    law = lambda _p, v, a: feedback_linearization_torque(v, a, u, params)  # noqa: E731
    for _ in range(_n_sub(dt, dt_sub)):
        x, T = nonlinear_step(x, T, law, params, dt_sub)
    return x, T
