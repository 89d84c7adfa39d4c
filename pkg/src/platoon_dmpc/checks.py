"""
Property and oracle suites behind ``platoon-dmpc verify``.

Each suite returns a list of :class:`Check`; the CLI prints one line per
check and exits nonzero if any failed. The same functions back parts of the
test suite.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import markov, observer, qp, riccati, topology
from .dynamics import A_CT, LeaderProfile


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


# ------------------------------------------------------------------ markov

def markov_suite(seed: int = 0, horizon: float = 1.0e4) -> list[Check]:
    mu = markov.DEFAULT_MU
    pi = markov.invariant_distribution(mu)
    res = float(np.abs(pi @ mu).max())
    dev = float(np.abs(pi - markov.DEFAULT_PI).max())
    chain = markov.start_chain(mu, 1, seed)
    path, _ = markov.advance(chain, mu, horizon)
    l1 = float(np.abs(markov.occupancy(path, horizon, 4) - pi).sum())
    return [
        Check("generator rows sum to zero, off-diagonals non-negative", not markov.generator_violations(mu)),
        Check("chain is ergodic", markov.is_ergodic(mu)),
        Check("pi mu = 0", res <= 1e-12, f"max |pi mu| = {res:.1e}"),
        Check("pi = [11/40, 1/5, 2/5, 1/8]", dev <= 1e-12, f"max deviation {dev:.1e}"),
        Check(f"occupancy over {horizon:g} s within L1 0.05 of pi", l1 <= 0.05, f"L1 = {l1:.4f}"),
    ]


# ---------------------------------------------------------------- riccati

def riccati_suite() -> list[Check]:
    P = riccati.solve_observer_care(A_CT, np.eye(3))
    rep = riccati.verify_care(P, A_CT, np.eye(3))
    lhs = riccati.care_lhs(riccati.DEFAULT_P, A_CT)
    top = float(np.linalg.eigvalsh(0.5 * (lhs + lhs.T)).max())
    return [
        Check("CARE with Q = I: P symmetric positive definite", rep.min_eig_P > 0, f"min eig {rep.min_eig_P:.4f}"),
        Check("CARE with Q = I: residual <= 1e-8", rep.residual <= 1e-8, f"residual {rep.residual:.1e}"),
        Check("default P gives negative definite PA + A'P - 2P^2", top < 0, f"max eig {top:.4f}"),
    ]


# --------------------------------------------------------------- observer

def observer_suite(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    graphs = topology.standard_topologies(5).graphs
    worst = 0.0
    for g in graphs:
        for _ in range(20):
            est = rng.normal(size=(5, 3)) * 10
            x0 = rng.normal(size=3) * 10
            dist = np.array([observer.relative_error(i, est, x0, g) for i in range(1, 6)])
            worst = max(worst, float(np.abs(dist - observer.matrix_relative_errors(est, x0, g)).max()))
            worst = max(worst, float(np.abs(observer.relative_errors(est, x0, g) - dist).max()))

    design = riccati.ObserverDesign.from_P(riccati.DEFAULT_P)
    leader = LeaderProfile()
    x0 = leader.state(3.0)
    net = observer.ObserverNetwork.start(np.tile(x0, (5, 1)), design)
    net.integrate(3.0, [graphs[2]] * 100, 0.01, leader)
    drift = float(np.abs(net.vartheta - leader.state(4.0)).max())

    # single follower with a leader link: step-halving self-convergence
    g1 = topology.DirectedGraph.from_in_neighbors([[]], [1])
    start = np.array([[2.0, -1.0, 0.5]])

    def final(h):
        n = observer.ObserverNetwork.start(start.copy(), design)
        n.integrate(0.0, [g1] * int(round(1.0 / h)), h, leader)
        return n.vartheta[0]

    ref = final(0.001)
    e1 = float(np.abs(final(0.01) - ref).max())
    e2 = float(np.abs(final(0.005) - ref).max())
    ratio = e1 / e2 if e2 > 0 else np.inf
    return [
        Check("distributed and matrix forms of phi agree on the four graphs", worst <= 1e-12,
              f"max diff {worst:.1e}"),
        Check("consensus manifold is invariant", drift <= 1e-9, f"max drift {drift:.1e}"),
        Check("RK4 step halving converges at fourth order", e1 <= 1e-6 and ratio > 8,
              f"err(0.01) = {e1:.1e}, ratio {ratio:.1f}"),
        Check("psi(15) = 2 with exponent 1/4", abs(observer.psi(15.0) - 2.0) <= 1e-15),
    ]


# --------------------------------------------------------------------- qp

def brute_force_qp(problem: qp.QpProblem, feas_tol: float = 1e-9):
    """Exact minimizer by enumerating faces of the feasible polyhedron.

    For every choice of active inequality rows (each at one of its finite
    bounds), minimize on the affine set and keep the best feasible point.
    With H positive definite the global minimizer is the minimizer on its
    own face, so the enumeration is exact. Returns ``(z, objective)`` or
    ``None`` when no face yields a feasible point.
    """
    C, lo, hi = problem.stacked()
    n = problem.n
    eq = np.isfinite(lo) & np.isfinite(hi) & (np.abs(hi - lo) < 1e-12)
    eq_idx = list(np.flatnonzero(eq))
    sides = []
    for j in np.flatnonzero(~eq):
        opts = []
        if np.isfinite(lo[j]):
            opts.append((j, lo[j]))
        if np.isfinite(hi[j]):
            opts.append((j, hi[j]))
        if opts:
            sides.append(opts)
    best = None
    room = n - len(eq_idx)
    for k in range(0, min(room, len(sides)) + 1):
        for rows in itertools.combinations(range(len(sides)), k):
            for pick in itertools.product(*(sides[r] for r in rows)):
                idx = eq_idx + [j for j, _ in pick]
                b = np.concatenate([hi[eq_idx], [v for _, v in pick]]) if idx else np.zeros(0)
                z = _face_min(problem, C[idx], b)
                if z is None:
                    continue
                v = C @ z
                scale = 1.0 + np.abs(v)
                if np.all(v >= lo - feas_tol * scale) and np.all(v <= hi + feas_tol * scale):
                    obj = problem.objective(z)
                    if best is None or obj < best[1]:
                        best = (z, obj)
    return best


def _face_min(problem, Ca, b):
    n, m = problem.n, Ca.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = problem.H
    kkt[:n, n:] = Ca.T
    kkt[n:, :n] = Ca
    rhs = np.concatenate([-problem.f, b])
    if np.linalg.matrix_rank(kkt) < n + m:
        return None
    return np.linalg.solve(kkt, rhs)[:n]


def random_qp(rng, max_dim: int = 8) -> qp.QpProblem:
    """Random strictly convex instance with d <= max_dim that is feasible by construction."""
    d = int(rng.integers(1, max_dim + 1))
    M = rng.normal(size=(d, d))
    H = M @ M.T + 0.1 * np.eye(d)
    f = rng.normal(size=d) * 3
    x_feas = rng.uniform(-1, 1, size=d)
    me = int(rng.integers(0, min(2, d - 1) + 1)) if d > 1 else 0
    mi = int(rng.integers(0, 3))
    Aeq = rng.normal(size=(me, d))
    Ain = rng.normal(size=(mi, d))
    bounded = rng.random(d) < 0.7
    lb = np.where(bounded, -1.5, -np.inf)
    ub = np.where(bounded, 1.5, np.inf)
    return qp.QpProblem(H, f, Aeq, Aeq @ x_feas, Ain, Ain @ x_feas + rng.uniform(0, 0.5, mi), lb, ub)


def qp_suite(n_instances: int = 100, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_rel, worst_kkt, failures = 0.0, 0.0, 0
    for _ in range(n_instances):
        prob = random_qp(rng)
        sol = qp.solve(prob)
        ref = brute_force_qp(prob)
        if sol.status != qp.OPTIMAL or ref is None:
            failures += 1
            continue
        worst_rel = max(worst_rel, abs(sol.objective - ref[1]) / max(1.0, abs(ref[1])))
        worst_kkt = max(worst_kkt, sol.kkt.max())
    return [
        Check(f"{n_instances} random instances solved to optimality", failures == 0, f"{failures} failed"),
        Check("objective matches the enumeration oracle within 1e-4 relative", worst_rel <= 1e-4,
              f"worst {worst_rel:.1e}"),
        Check("KKT residuals <= 1e-6", worst_kkt <= 1e-6, f"worst {worst_kkt:.1e}"),
    ]


SUITES = {
    "markov": markov_suite,
    "riccati": riccati_suite,
    "observer": observer_suite,
    "qp": qp_suite,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for s in SUITES.values() for c in s()]
    return SUITES[name]()
