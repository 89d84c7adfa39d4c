"""
Per-vehicle distributed MPC with an observer-based string-stability bound.

Vehicle i optimizes its jerk sequence over N_p steps. The objective penalizes
input effort, deviation from its own assumed trajectory (F), spacing to the
predecessor's assumed trajectory (S) and deviation from the propagated,
neighbour-averaged leader observation (G). The predicted terminal state must
equal the assumed terminal state, and for i >= 2 the predicted spacing error
against the averaged observation is bounded by beta * D_{i-1}, softened by a
single non-negative slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import qp as qpmod
from .riccati import ScheduledGain

GAMMA = np.array([1.0, 0.0, 0.0])


class InfeasibleStep(RuntimeError):
    def __init__(self, vehicle: int, time: float, status: str):
        super().__init__(f"QP for vehicle {vehicle} at t={time:.2f}s is {status}")
        self.vehicle = vehicle
        self.time = time
        self.status = status


@dataclass
class Trajectory:
    states: np.ndarray  # (N_p+1, 3)
    inputs: np.ndarray  # (N_p,)

    def consistency_error(self, A_d, B_d) -> float:
        pred = self.states[:-1] @ A_d.T + np.outer(self.inputs, B_d)
        return float(np.abs(pred - self.states[1:]).max(initial=0.0))


@dataclass
class AssumedBundle:
    """What a vehicle shares with its followers at one controller step."""

    self_assumed: Trajectory
    obs_assumed: np.ndarray  # (N_p+1, 3) own estimate rolled out
    avg_obs_assumed: np.ndarray  # (N_p+1, 3) averaged estimate rolled out
    max_assumed_spacing_error: float
    hist_max_spacing_error: float = 0.0

    def aged(self, A_d) -> "AssumedBundle":
        """Shift one step; the tail is extended with zero input."""
        st = self.self_assumed.states
        states = np.vstack([st[1:], A_d @ st[-1]])
        inputs = np.append(self.self_assumed.inputs[1:], 0.0)
        return replace(
            self,
            self_assumed=Trajectory(states, inputs),
            obs_assumed=_shift_rollout(self.obs_assumed, A_d),
            avg_obs_assumed=_shift_rollout(self.avg_obs_assumed, A_d),
        )


def _shift_rollout(seq, A_d):
    return np.vstack([seq[1:], A_d @ seq[-1]])


TERMINAL_LAWS = ("linear", "clipped", "scheduled")


@dataclass
class ControllerParams:
    R: float = 0.1
    F: np.ndarray = field(default_factory=lambda: np.diag([5.0, 2.5, 1.0]))
    S: np.ndarray = field(default_factory=lambda: np.diag([5.0, 2.5, 1.0]))
    G: np.ndarray = field(default_factory=lambda: np.diag([50.0, 25.0, 10.0]))
    d0: float = 20.0
    beta: float = 0.6
    u_min: float = -3.0
    u_max: float = 3.0
    N_p: int = 10
    eps_floor: float = 0.01
    slack_weight: float = 1e6
    slack_linear_weight: float = 0.0
    max_stale: int = 5
    terminal_law: str = "scheduled"  # "linear" | "clipped" | "scheduled"
    terminal_margin: float = 20.0
    terminal_penalty: float = 1.0e4  # weight used only when the terminal equality is infeasible

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")
        if self.u_min > self.u_max:
            raise ValueError("input bounds are reversed")
        if self.terminal_law not in TERMINAL_LAWS:
            raise ValueError(f"terminal_law must be one of {TERMINAL_LAWS}")


@dataclass
class VehicleController:
    index: int
    params: ControllerParams
    A_d: np.ndarray
    B_d: np.ndarray
    K: np.ndarray
    bundle: AssumedBundle | None = None
    hist_max_spacing_error: float = 0.0
    pred_cache: AssumedBundle | None = None
    pred_age: int = 0
    last_solution: np.ndarray | None = None
    last_dual: np.ndarray | None = None
    _scheduled: ScheduledGain | None = field(default=None, repr=False)

    @property
    def offset(self) -> np.ndarray:
        """d~_{i0} = [i*d0, 0, 0]."""
        return np.array([self.index * self.params.d0, 0.0, 0.0])

    def publish(self, x_now, avg_obs_now, t: float) -> AssumedBundle:
        """Refresh the observation part of the bundle for time t and return it."""
        p = self.params
        spacing_now = abs(GAMMA @ (np.asarray(x_now) - avg_obs_now + self.offset))
        if t > 0:
            self.hist_max_spacing_error = max(self.hist_max_spacing_error, spacing_now)
        avg_seq = propagate_observation(avg_obs_now, p.N_p, self.A_d)
        own = self.bundle.self_assumed
        ehat = (own.states - avg_seq + self.offset) @ GAMMA
        self.bundle = replace(
            self.bundle,
            avg_obs_assumed=avg_seq,
            max_assumed_spacing_error=float(np.abs(ehat).max()),
            hist_max_spacing_error=self.hist_max_spacing_error,
        )
        return self.bundle


def propagate_observation(vartheta, N_p: int, A_d) -> np.ndarray:
    """Rows A_d^k vartheta for k = 0..N_p."""
    out = np.empty((N_p + 1, len(vartheta)))
    out[0] = vartheta
    for k in range(N_p):
        out[k + 1] = A_d @ out[k]
    return out


def compute_D(pred_hist_max: float, pred_assumed_max: float, eps_floor: float = 0.01) -> float:
    return max(pred_hist_max, pred_assumed_max, eps_floor)


def prediction_matrices(A_d, B_d, N_p: int):
    """Phi (N_p+1, 3, 3) and Gam (N_p+1, 3, N_p) with x(k) = Phi[k] x0 + Gam[k] u."""
    n = A_d.shape[0]
    Phi = np.empty((N_p + 1, n, n))
    Gam = np.zeros((N_p + 1, n, N_p))
    Phi[0] = np.eye(n)
    for k in range(N_p):
        Phi[k + 1] = A_d @ Phi[k]
        Gam[k + 1] = A_d @ Gam[k]
        Gam[k + 1][:, k] += B_d
    return Phi, Gam


def rollout(x0, inputs, A_d, B_d) -> np.ndarray:
    states = [np.asarray(x0, dtype=float)]
    for u in inputs:
        states.append(A_d @ states[-1] + B_d * u)
    return np.array(states)


def init_assumed(ctrl: VehicleController, x0, vartheta0, avg0=None) -> AssumedBundle:
    """Zero-input rollout of x0 plus rolled-out observations."""
    p = ctrl.params
    inputs = np.zeros(p.N_p)
    traj = Trajectory(rollout(x0, inputs, ctrl.A_d, ctrl.B_d), inputs)
    obs = propagate_observation(vartheta0, p.N_p, ctrl.A_d)
    avg = obs if avg0 is None else propagate_observation(avg0, p.N_p, ctrl.A_d)
    ehat = (traj.states - avg + ctrl.offset) @ GAMMA
    ctrl.bundle = AssumedBundle(traj, obs, avg, float(np.abs(ehat).max()), 0.0)
    return ctrl.bundle


@dataclass
class BuiltProblem:
    qp: qpmod.QpProblem
    Phi: np.ndarray
    Gam: np.ndarray
    has_slack: bool
    n_string_rows: int
    bound: float


def build_problem(ctrl: VehicleController, x_now, pred_traj, D_pred: float | None,
                  use_string: bool, soft_terminal: bool = False) -> BuiltProblem:
    """Condensed QP over u(0..N_p-1) [and the slack when the bound applies].

    ``pred_traj`` is the (N_p+1, 3) predecessor assumed trajectory, or None
    to drop the spacing term. ``soft_terminal`` swaps the terminal equality
    for a quadratic penalty of weight ``terminal_penalty``.
    """
    p = ctrl.params
    N = p.N_p
    x_now = np.asarray(x_now, dtype=float)
    bundle = ctrl.bundle
    xa = bundle.self_assumed.states
    avg = bundle.avg_obs_assumed
    if xa.shape != (N + 1, 3) or avg.shape != (N + 1, 3):
        raise ValueError("bundle sequences must have N_p+1 rows")
    if pred_traj is not None and np.shape(pred_traj) != (N + 1, 3):
        raise ValueError("predecessor trajectory must have N_p+1 rows")
    Phi, Gam = prediction_matrices(ctrl.A_d, ctrl.B_d, N)
    d_gap = np.array([p.d0, 0.0, 0.0])

    H = 2.0 * p.R * np.eye(N)
    f = np.zeros(N)
    terms = [(p.F, xa)]
    if pred_traj is not None:
        terms.append((p.S, np.asarray(pred_traj) - d_gap))
    terms.append((p.G, avg - ctrl.offset))
    # x(0) is fixed, so state terms start at k = 1; the k = N_p term is a
    # constant under the terminal equality and only matters once it is relaxed
    for k in range(1, N + 1):
        free = Phi[k] @ x_now
        for W, target in terms:
            H += 2.0 * Gam[k].T @ W @ Gam[k]
            f += 2.0 * Gam[k].T @ W @ (free - target[k])

    Aeq = Gam[N]
    beq = xa[N] - Phi[N] @ x_now
    if soft_terminal:
        H += 2.0 * p.terminal_penalty * Aeq.T @ Aeq
        f -= 2.0 * p.terminal_penalty * Aeq.T @ beq
        Aeq, beq = np.zeros((0, N)), np.zeros(0)
    lb = np.full(N, p.u_min)
    ub = np.full(N, p.u_max)

    has_slack = use_string and D_pred is not None
    bound = np.nan
    if not has_slack:
        qp = qpmod.QpProblem(H, f, Aeq=Aeq, beq=beq, lb=lb, ub=ub)
        return BuiltProblem(qp, Phi, Gam, False, 0, bound)

    bound = p.beta * D_pred
    rows, rhs = [], []
    for k in range(N + 1):
        g_row = GAMMA @ Gam[k]
        c_k = GAMMA @ (Phi[k] @ x_now - avg[k] + ctrl.offset)
        rows.append(np.append(g_row, -1.0))
        rhs.append(bound - c_k)
        rows.append(np.append(-g_row, -1.0))
        rhs.append(bound + c_k)
    Hs = np.zeros((N + 1, N + 1))
    Hs[:N, :N] = H
    Hs[N, N] = 2.0 * p.slack_weight
    fs = np.append(f, p.slack_linear_weight)
    qp = qpmod.QpProblem(
        Hs, fs,
        Aeq=np.hstack([Aeq, np.zeros((len(beq), 1))]), beq=beq,
        Ain=np.array(rows), bin=np.array(rhs),
        lb=np.append(lb, 0.0), ub=np.append(ub, np.inf),
    )
    return BuiltProblem(qp, Phi, Gam, True, 2 * (N + 1), bound)


@dataclass
class StepDiagnostics:
    iterations: int
    slack: float
    string_active: bool
    stale_age: int
    dropped_spacing: bool
    D_pred: float
    status: str
    kkt: float
    terminal_error: float
    terminal_relaxed: bool = False


def terminal_input(ctrl: VehicleController) -> float:
    """K . (avg observation - assumed state - offset) at the horizon end.

    ``linear`` is the bare law, ``clipped`` saturates it at the input
    bounds and ``scheduled`` uses the low-gain rescaling of
    :class:`~platoon_dmpc.riccati.ScheduledGain` outside its linear region.
    """
    b = ctrl.bundle
    p = ctrl.params
    err = b.avg_obs_assumed[-1] - b.self_assumed.states[-1] - ctrl.offset
    if p.terminal_law == "scheduled":
        if ctrl._scheduled is None:
            ctrl._scheduled = ScheduledGain.design(ctrl.K, min(-p.u_min, p.u_max),
                                                   p.terminal_margin)
        return ctrl._scheduled(err)
    u = float(ctrl.K @ err)
    if p.terminal_law == "clipped":
        u = float(np.clip(u, p.u_min, p.u_max))
    return u


def step_vehicle(ctrl: VehicleController, x_now, pred_traj, D_pred, use_string: bool,
                 t: float = 0.0, qp_tol: float = 1e-6, stale_age: int = 0,
                 dropped: bool = False):
    """Solve, apply the first input and shift the assumed trajectory.

    Returns ``(u0, new_bundle, diagnostics)``; the controller's bundle is
    replaced by the new one.
    """
    p = ctrl.params
    N = p.N_p
    built = build_problem(ctrl, x_now, pred_traj, D_pred, use_string)
    warm = None
    if ctrl.last_solution is not None:
        prev = ctrl.last_solution
        shifted = np.append(prev[1:N], ctrl.bundle.self_assumed.inputs[-1])
        warm = np.append(shifted, 0.0) if built.has_slack else shifted
        if len(warm) != built.qp.n:
            warm = None
    sol = qpmod.solve(built.qp, tol=qp_tol, warm_start=warm)
    relaxed = False
    if sol.status == qpmod.INFEASIBLE:
        # model mismatch (lag or nonlinear plant) can make the equality unreachable
        built = build_problem(ctrl, x_now, pred_traj, D_pred, use_string, soft_terminal=True)
        sol = qpmod.solve(built.qp, tol=qp_tol, warm_start=warm)
        relaxed = True
    if sol.status != qpmod.OPTIMAL:
        raise InfeasibleStep(ctrl.index, t, sol.status)
    z = sol.z
    u_opt = np.clip(z[:N], p.u_min, p.u_max)
    slack = float(max(z[N], 0.0)) if built.has_slack else 0.0
    ctrl.last_solution = u_opt.copy()

    x_star = rollout(x_now, u_opt, ctrl.A_d, ctrl.B_d)
    terminal_error = float(np.abs(x_star[-1] - ctrl.bundle.self_assumed.states[-1]).max())
    u_term = terminal_input(ctrl)
    new_inputs = np.append(u_opt[1:], u_term)
    new_states = rollout(x_star[1], new_inputs, ctrl.A_d, ctrl.B_d)
    new_traj = Trajectory(new_states, new_inputs)
    b = ctrl.bundle
    ctrl.bundle = AssumedBundle(
        self_assumed=new_traj,
        obs_assumed=_shift_rollout(b.obs_assumed, ctrl.A_d),
        avg_obs_assumed=_shift_rollout(b.avg_obs_assumed, ctrl.A_d),
        max_assumed_spacing_error=b.max_assumed_spacing_error,
        hist_max_spacing_error=ctrl.hist_max_spacing_error,
    )
    string_active = False
    if built.has_slack:
        pred_err = np.abs((x_star - b.avg_obs_assumed + ctrl.offset) @ GAMMA)
        string_active = bool(pred_err.max() >= built.bound - 1e-6)
    diag = StepDiagnostics(
        iterations=sol.iterations,
        slack=slack,
        string_active=string_active,
        stale_age=stale_age,
        dropped_spacing=dropped,
        D_pred=float(D_pred) if D_pred is not None else np.nan,
        status=sol.status,
        kkt=sol.kkt.max(),
        terminal_error=terminal_error,
        terminal_relaxed=relaxed,
    )
    return float(u_opt[0]), ctrl.bundle, diag
