"""
Scenario orchestration and platoon metrics.

Each controller period [t, t+dt] runs in a fixed order:

1. the Markov chain is advanced over [t, t+dt]; switch times are quantized
   to sub-step boundaries and the mode on the first sub-step is the graph
   seen by the controllers at time t;
2. every vehicle publishes its bundle from the time-t observer snapshot,
   reads its predecessor's bundle (if the link is up) and solves its QP;
3. the observer network is integrated over [t, t+dt] under the sub-step
   mode path;
4. the plants advance by dt at the configured fidelity.

Follower i starts at p_i(0) = p_0(0) - i*d0 with zero speed and
acceleration, so position and speed errors vanish at t = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import markov
from .config import ScenarioConfig
from .dmpc import (
    GAMMA, InfeasibleStep, VehicleController, compute_D, init_assumed,
    propagate_observation, step_vehicle,
)
from .dynamics import (
    discretize, feedback_linearization_torque, lag_step, nonlinear_closed_loop,
    torque_from_acceleration,
)
from .observer import ObserverDivergence, ObserverNetwork, average_observations

STATE_NAMES = ("p", "v", "a")


class SimulationError(RuntimeError):
    def __init__(self, message: str, time: float, vehicle: int | None = None):
        super().__init__(message)
        self.time = time
        self.vehicle = vehicle

    def describe(self) -> str:
        who = f" vehicle={self.vehicle}" if self.vehicle is not None else ""
        return f"error: t={self.time:.2f}{who}: {self}"


@dataclass
class SimResult:
    time: np.ndarray  # (K+1,)
    leader: np.ndarray  # (K+1, 3)
    states: np.ndarray  # (K+1, N, 3)
    errors: np.ndarray  # (K+1, N, 3)
    inputs: np.ndarray  # (K, N)
    theta: np.ndarray  # (K+1, N, 3) observer errors
    kappa: np.ndarray  # (K+1, N)
    varrho: np.ndarray  # (K+1, N)
    modes: np.ndarray  # (K+1,) mode seen at each grid time
    switches: list = field(default_factory=list)  # (time, mode) events incl. the start
    diagnostics: dict = field(default_factory=dict)  # name -> (K, N) array
    seed: int = 0
    config_hash: str = ""
    d0: float = 20.0

    @property
    def n_followers(self) -> int:
        return self.states.shape[1]


@dataclass
class MoeReport:
    MPE: float
    MVE: float
    APE: float
    AVE: float
    peak_position_errors: np.ndarray
    string_ratios: np.ndarray  # entry i-2 is the ratio for follower i
    collision: bool
    min_gap: float


def initial_states(cfg: ScenarioConfig, x0_leader) -> np.ndarray:
    """Followers start unaccelerated. ``zero-error`` also matches the leader's
    position (less the offset) and velocity; ``ahead-at-rest`` puts them at
    +i*d0 from the origin, at rest."""
    n, d0 = cfg.n, cfg.raw["d0"]
    x = np.zeros((n, 3))
    for i in range(1, n + 1):
        if cfg.raw["initial_positions"] == "ahead-at-rest":
            x[i - 1, 0] = i * d0
        else:
            x[i - 1, :2] = x0_leader[0] - i * d0, x0_leader[1]
    return x


def run(cfg: ScenarioConfig, seed: int | None = None) -> SimResult:
    seed = cfg.raw["seed"] if seed is None else seed
    r = cfg.raw
    n, dt, dt_sub, K, n_sub = cfg.n, r["dt"], r["dt_sub"], cfg.n_steps, cfg.n_sub
    A_d, B_d = discretize(dt)
    leader = cfg.leader()
    topo = cfg.topologies()
    mu = cfg.mu
    level = r["plant"]["level"]
    pparams = cfg.plant_params()
    K_gain = cfg.terminal_gain(A_d, B_d)
    offsets = np.array([[i * r["d0"], 0.0, 0.0] for i in range(1, n + 1)])

    x0_leader = leader.state(0.0)
    x = initial_states(cfg, x0_leader)
    torque = np.array([torque_from_acceleration(x[i, 1], x[i, 2], pparams) for i in range(n)])
    net = ObserverNetwork.start(x + offsets, cfg.observer_design(),
                                r["observer"]["psi_exponent"], r["observer"]["varrho0"])
    chain = markov.start_chain(mu, r["topology"]["initial_mode"], seed)

    ctrls = []
    for i in range(1, n + 1):
        c = VehicleController(i, cfg.controller_params(i), A_d, B_d, K_gain)
        init_assumed(c, x[i - 1], net.vartheta[i - 1])
        ctrls.append(c)

    times = np.round(np.arange(K + 1) * dt, 10)
    out_leader = np.zeros((K + 1, 3))
    out_states = np.zeros((K + 1, n, 3))
    out_inputs = np.zeros((K, n))
    out_theta = np.zeros((K + 1, n, 3))
    out_kappa = np.zeros((K + 1, n))
    out_varrho = np.zeros((K + 1, n))
    out_modes = np.zeros(K + 1, dtype=int)
    diag_names = ("qp_iterations", "slack", "string_active", "stale_age", "dropped_spacing",
                  "D_pred", "kkt", "terminal_error", "terminal_relaxed")
    diags = {k: np.zeros((K, n)) for k in diag_names}
    switches = [(0.0, chain.mode)]

    def record(k, g):
        x0 = leader.state(times[k])
        out_leader[k] = x0
        out_states[k] = x
        out_theta[k] = net.vartheta - x0
        out_kappa[k] = net.kappa(x0, g)
        out_varrho[k] = net.varrho

    for k in range(K + 1):
        t = times[k]
        if k == K:
            out_modes[k] = chain.mode
            record(k, topo.mode(chain.mode))
            break
        path, _ = markov.advance(chain, mu, t + dt)
        switches.extend(path[1:])
        sub_modes = markov.quantize_path(path, t, dt_sub, n_sub)
        g = topo.mode(sub_modes[0])
        out_modes[k] = sub_modes[0]
        record(k, g)

        # controllers: synchronous round on frozen time-t bundles
        avg_now = average_observations(net.vartheta, g)
        bundles = [c.publish(x[i], avg_now[i], t) for i, c in enumerate(ctrls)]
        x0_now = out_leader[k]
        u = np.zeros(n)
        for i, c in enumerate(ctrls):
            idx = i + 1
            pred_traj, D_pred, use_string = _predecessor_view(
                c, idx, g, bundles, x0_now, avg_now[i], A_d)
            try:
                u[i], _, d = step_vehicle(
                    c, x[i], pred_traj, D_pred, use_string, t=t, qp_tol=r["qp_tol"],
                    stale_age=c.pred_age, dropped=(idx > 1 and pred_traj is None))
            except InfeasibleStep as exc:
                raise SimulationError(str(exc), t, idx) from exc
            for name, val in (("qp_iterations", d.iterations), ("slack", d.slack),
                              ("string_active", d.string_active), ("stale_age", d.stale_age),
                              ("dropped_spacing", d.dropped_spacing), ("D_pred", d.D_pred),
                              ("kkt", d.kkt), ("terminal_error", d.terminal_error),
                              ("terminal_relaxed", d.terminal_relaxed)):
                diags[name][k, i] = val
        out_inputs[k] = u

        try:
            net.integrate(t, [topo.mode(m) for m in sub_modes], dt_sub, leader)
        except ObserverDivergence as exc:
            raise SimulationError(str(exc), exc.time, exc.follower) from exc

        if level == "ideal":
            x = x @ A_d.T + np.outer(u, B_d)
        elif level == "lag":
            x = np.array([lag_step(x[i], u[i], pparams.delta, dt, dt_sub) for i in range(n)])
        else:
            for i in range(n):
                x[i], torque[i] = nonlinear_closed_loop(x[i], torque[i], u[i], pparams, dt, dt_sub)
        if not np.isfinite(x).all():
            bad = int(np.flatnonzero(~np.isfinite(x).all(axis=1))[0]) + 1
            raise SimulationError("vehicle state is not finite", t + dt, bad)

    errors = out_states - out_leader[:, None, :] + offsets[None, :, :]
    return SimResult(
        time=times, leader=out_leader, states=out_states, errors=errors, inputs=out_inputs,
        theta=out_theta, kappa=out_kappa, varrho=out_varrho, modes=out_modes,
        switches=switches, diagnostics=diags, seed=int(seed), config_hash=cfg.hash(),
        d0=float(r["d0"]),
    )


def _predecessor_view(c: VehicleController, idx, g, bundles, x0_now, avg_i, A_d):
    """Return (predecessor trajectory or None, D_{i-1} or None, apply bound?)."""
    p = c.params
    if idx == 1:
        if g.leader_links[0]:
            return propagate_observation(x0_now, p.N_p, A_d), None, False
        return propagate_observation(avg_i, p.N_p, A_d), None, False
    if g.adjacency[idx - 1, idx - 2]:
        c.pred_cache = bundles[idx - 2]
        c.pred_age = 0
    elif c.pred_cache is not None:
        c.pred_cache = c.pred_cache.aged(A_d)
        c.pred_age += 1
    if c.pred_cache is None or c.pred_age > p.max_stale:
        return None, None, False
    pb = c.pred_cache
    D = compute_D(pb.hist_max_spacing_error, pb.max_assumed_spacing_error, p.eps_floor)
    return pb.self_assumed.states, D, True


# ---------------------------------------------------------------- metrics

def compute_moe(result: SimResult, eps_floor: float = 0.01) -> MoeReport:
    e = result.errors
    n = result.n_followers
    if e.size == 0:
        return MoeReport(0.0, 0.0, 0.0, 0.0, np.zeros(n), np.zeros(max(n - 1, 0)), False, np.inf)
    ep = np.abs(e[:, :, 0])
    ev = np.abs(e[:, :, 1])
    peaks = ep.max(axis=0)
    ratios = np.full(max(n - 1, 0), np.nan)
    for i in range(1, n):
        if peaks[i - 1] > eps_floor:
            ratios[i - 1] = peaks[i] / peaks[i - 1]
    pos = np.concatenate([result.leader[:, None, 0], result.states[:, :, 0]], axis=1)
    gaps = pos[:, :-1] - pos[:, 1:]
    min_gap = float(gaps.min()) if gaps.size else np.inf
    return MoeReport(
        MPE=float(ep.max()), MVE=float(ev.max()), APE=float(ep.mean()), AVE=float(ev.mean()),
        peak_position_errors=peaks, string_ratios=ratios,
        collision=bool(min_gap <= 0), min_gap=min_gap,
    )


@dataclass
class StringVerdict:
    follower: int
    ratio: float
    passed: bool
    within_beta: bool


def string_stability_check(result: SimResult, beta: float = 0.6) -> list[StringVerdict]:
    n = result.n_followers
    if n < 2:
        raise ValueError("string stability needs at least two followers")
    peaks = np.abs(result.errors[:, :, 0]).max(axis=0)
    out = []
    for i in range(2, n + 1):
        prev = peaks[i - 2]
        ratio = peaks[i - 1] / prev if prev > 0 else (0.0 if peaks[i - 1] == 0 else np.inf)
        out.append(StringVerdict(i, float(ratio), bool(peaks[i - 1] <= prev), bool(ratio <= beta)))
    return out


def slack_free_fraction(result: SimResult, tol: float = 1e-6) -> float:
    """Fraction of controller steps (over vehicles with the bound) with zero slack."""
    slack = result.diagnostics["slack"][:, 1:]
    if slack.size == 0:
        return 1.0
    return float(np.mean(slack <= tol))


def spacing_error(result: SimResult) -> np.ndarray:
    return result.errors[:, :, :] @ GAMMA
