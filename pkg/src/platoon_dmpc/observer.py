"""
Fully distributed adaptive observers of the leader state.

Each follower i keeps an estimate ``vartheta_i`` of the leader state and an
integrated gain ``varrho_i``; the quadratic gain ``varsigma_i`` and the
coupling ``kappa_i`` are algebraic in the relative error ``phi_i``::

    varsigma = phi' Upsilon phi
    kappa    = (varsigma + varrho) * Psi(varsigma)
    d vartheta / dt = A vartheta - kappa P phi
    d varrho / dt   = phi' Gamma phi
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import A_CT, DEFAULT_LEADER, LeaderProfile
from .riccati import ObserverDesign
from .topology import DirectedGraph, in_neighbors, information_matrix


class ObserverDivergence(FloatingPointError):
    def __init__(self, follower: int, time: float):
        super().__init__(f"observer state of follower {follower} is not finite at t={time:.4f}")
        self.follower = follower
        self.time = time


def psi(varsigma, exponent: float = 0.25):
    """Adaptive coupling amplifier (1 + varsigma)**exponent, always >= 1."""
    s = np.asarray(varsigma, dtype=float)
    if np.any(s < 0):
        raise ValueError("varsigma must be non-negative")
    out = (1.0 + s) ** exponent
    return float(out) if out.ndim == 0 else out


def relative_error(i: int, estimates, x0, g: DirectedGraph) -> np.ndarray:
    """phi_i in its distributed form; x0 is read only over a leader link.

    ``estimates`` is indexable by 0-based row (shape (N, 3)).
    """
    est = np.asarray(estimates, dtype=float)
    own = est[i - 1]
    phi = np.zeros_like(own)
    if g.leader_links[i - 1]:
        phi += own - np.asarray(x0, dtype=float)
    for j in in_neighbors(g, i):
        phi += own - est[j - 1]
    return phi


def relative_errors(estimates, x0, g: DirectedGraph) -> np.ndarray:
    """All phi_i at once: W (vartheta - x0) + L vartheta, shape (N, 3)."""
    est = np.asarray(estimates, dtype=float)
    lead = g.leader_links.astype(float)[:, None]
    adj = g.adjacency.astype(float)
    return lead * (est - x0) + adj.sum(axis=1)[:, None] * est - adj @ est


def observer_rates(phi, vartheta, varrho, design: ObserverDesign, psi_exponent=0.25, A=A_CT):
    """Return (d vartheta/dt, d varrho/dt) for one follower."""
    phi = np.asarray(phi, dtype=float)
    varsigma = float(phi @ design.Upsilon @ phi)
    kappa = (varsigma + varrho) * psi(varsigma, psi_exponent)
    dtheta = A @ vartheta - kappa * (design.P @ phi)
    drho = float(phi @ design.Gamma @ phi)
    return dtheta, drho


def average_observation(i: int, estimates, g: DirectedGraph) -> np.ndarray:
    est = np.asarray(estimates, dtype=float)
    members = [i] + sorted(in_neighbors(g, i))
    return est[[j - 1 for j in members]].mean(axis=0)


def average_observations(estimates, g: DirectedGraph) -> np.ndarray:
    est = np.asarray(estimates, dtype=float)
    w = g.adjacency.astype(float) + np.eye(g.n_followers)
    return (w @ est) / w.sum(axis=1)[:, None]


@dataclass
class ObserverNetwork:
    vartheta: np.ndarray  # (N, 3)
    varrho: np.ndarray  # (N,)
    design: ObserverDesign
    psi_exponent: float = 0.25
    A: np.ndarray = field(default_factory=lambda: A_CT.copy())

    def __post_init__(self):
        self.vartheta = np.array(self.vartheta, dtype=float)
        self.varrho = np.array(self.varrho, dtype=float).reshape(-1)
        if self.vartheta.shape != (self.varrho.shape[0], self.A.shape[0]):
            raise ValueError("vartheta must have shape (N, n0) matching varrho")
        if np.any(self.varrho < 1):
            raise ValueError("varrho(0) must be >= 1")
        if not 0 < self.psi_exponent <= 1:
            raise ValueError("psi exponent must lie in (0, 1]")
        self._Upsilon = self.design.Upsilon

    @classmethod
    def start(cls, estimates, design: ObserverDesign, psi_exponent=0.25, varrho0=1.0):
        est = np.asarray(estimates, dtype=float)
        return cls(est, np.full(est.shape[0], float(varrho0)), design, psi_exponent)

    @property
    def n(self) -> int:
        return self.vartheta.shape[0]

    def _gains(self, phi, varrho):
        varsigma = np.einsum("ij,jk,ik->i", phi, self._Upsilon, phi)
        varsigma = np.maximum(varsigma, 0.0)
        kappa = (varsigma + varrho) * (1.0 + varsigma) ** self.psi_exponent
        return varsigma, kappa

    def rates(self, vartheta, varrho, x0, g: DirectedGraph):
        phi = relative_errors(vartheta, x0, g)
        _, kappa = self._gains(phi, varrho)
        dtheta = vartheta @ self.A.T - kappa[:, None] * (phi @ self.design.P.T)
        drho = np.einsum("ij,ij->i", phi, phi)
        return dtheta, drho

    def kappa(self, x0, g: DirectedGraph) -> np.ndarray:
        phi = relative_errors(self.vartheta, x0, g)
        return self._gains(phi, self.varrho)[1]

    def observation_errors(self, x0) -> np.ndarray:
        return self.vartheta - np.asarray(x0, dtype=float)

    def integrate(self, t0: float, graphs, dt_sub: float, leader: LeaderProfile = DEFAULT_LEADER):
        """Advance by ``len(graphs)`` RK4 sub-steps; graphs[j] is active on sub-step j."""
        th, rho = self.vartheta, self.varrho
        for j, g in enumerate(graphs):
            t = t0 + j * dt_sub
            x_a = leader.state(t)
            x_m = leader.state(t + 0.5 * dt_sub)
            x_b = leader.state(t + dt_sub)
            k1 = self.rates(th, rho, x_a, g)
            k2 = self.rates(th + 0.5 * dt_sub * k1[0], rho + 0.5 * dt_sub * k1[1], x_m, g)
            k3 = self.rates(th + 0.5 * dt_sub * k2[0], rho + 0.5 * dt_sub * k2[1], x_m, g)
            k4 = self.rates(th + dt_sub * k3[0], rho + dt_sub * k3[1], x_b, g)
            th_new = th + (dt_sub / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            rho_new = rho + (dt_sub / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            bad = ~(np.isfinite(th_new).all(axis=1) & np.isfinite(rho_new))
            if bad.any():
                raise ObserverDivergence(int(np.flatnonzero(bad)[0]) + 1, t + dt_sub)
            # RK4 stages are non-negative, so varrho cannot decrease
            assert np.all(rho_new >= rho - 1e-12)
            th, rho = th_new, rho_new
        self.vartheta, self.varrho = th, rho
        return self


def integrate_network(net: ObserverNetwork, t0, graphs, dt_sub, leader=DEFAULT_LEADER):
    return net.integrate(t0, graphs, dt_sub, leader)


def matrix_relative_errors(estimates, x0, g: DirectedGraph) -> np.ndarray:
    """Reference form sum_j m_ij theta_j, used to check the distributed form."""
    theta = np.asarray(estimates, dtype=float) - np.asarray(x0, dtype=float)
    return information_matrix(g) @ theta
