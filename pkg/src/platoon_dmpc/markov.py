"""
Continuous-time Markov chain over topology modes.

Modes are 1-based. Sample paths are event driven: holding times are exact
exponential draws and jump targets are drawn from the embedded jump chain.
Draw order per switch is fixed (holding time, then jump target) so that a
seed fully determines a path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeneratorError(ValueError):
    pass


class ReducibleChainError(GeneratorError):
    pass


def _as_square(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 2 or mu.shape[0] != mu.shape[1]:
        raise GeneratorError(f"generator must be square, got shape {mu.shape}")
    return mu


def generator_violations(mu, tol: float = 1e-12) -> list[str]:
    """Return human readable violations, first violated cell first."""
    mu = _as_square(mu)
    out = []
    n = mu.shape[0]
    for r in range(n):
        for c in range(n):
            if not np.isfinite(mu[r, c]):
                out.append(f"mu[{r + 1},{c + 1}] = {mu[r, c]} is not finite")
            elif r != c and mu[r, c] < 0:
                out.append(f"mu[{r + 1},{c + 1}] = {mu[r, c]:g} is a negative off-diagonal rate")
        s = mu[r].sum()
        scale = max(1.0, np.abs(mu[r]).max(initial=0.0))
        if np.isfinite(s) and abs(s) > tol * scale:
            out.append(f"row {r + 1} sums to {s:g}, expected 0")
    return out


def validate_generator(mu, tol: float = 1e-12) -> np.ndarray:
    """Raise ``GeneratorError`` naming the first violated cell; return mu as an array."""
    bad = generator_violations(mu, tol)
    if bad:
        raise GeneratorError(bad[0])
    return _as_square(mu)


def is_ergodic(mu) -> bool:
    """Strong connectivity of the positive off-diagonal rates."""
    mu = _as_square(mu)
    n = mu.shape[0]
    if n == 1:
        return True
    adj = (mu > 0) & ~np.eye(n, dtype=bool)

    def reach(a):
        seen = {0}
        stack = [0]
        while stack:
            k = stack.pop()
            for j in np.flatnonzero(a[k]):
                if j not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        return len(seen) == n

    return reach(adj) and reach(adj.T)


def invariant_distribution(mu) -> np.ndarray:
    """Solve pi mu = 0, sum(pi) = 1 with the last balance row replaced by normalization."""
    mu = validate_generator(mu)
    if not is_ergodic(mu):
        raise ReducibleChainError("generator is reducible; invariant distribution is not unique")
    n = mu.shape[0]
    a = mu.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    # one refinement step keeps ||pi mu|| at round-off level
    pi += np.linalg.solve(a, b - a @ pi)
    return pi


@dataclass
class ChainState:
    mode: int
    time: float = 0.0
    next_switch_time: float = math.inf
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)


def _hold(state: ChainState, mu: np.ndarray) -> float:
    rate = -mu[state.mode - 1, state.mode - 1]
    if rate <= 0:
        return math.inf
    return state.rng.exponential(1.0 / rate)


def _jump_target(state: ChainState, mu: np.ndarray) -> int:
    row = mu[state.mode - 1].copy()
    row[state.mode - 1] = 0.0
    probs = row / row.sum()
    u = state.rng.random()
    k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(k, len(probs) - 1) + 1


def start_chain(mu, mode: int = 1, seed: int | None = 0, t0: float = 0.0) -> ChainState:
    mu = validate_generator(mu)
    if not 1 <= mode <= mu.shape[0]:
        raise GeneratorError(f"initial mode {mode} out of range 1..{mu.shape[0]}")
    state = ChainState(mode=mode, time=t0, rng=np.random.default_rng(seed))
    state.next_switch_time = t0 + _hold(state, mu)
    return state


def advance(state: ChainState, mu, until: float) -> tuple[list[tuple[float, int]], ChainState]:
    """Advance the chain to time ``until``.

    Returns the right-continuous path on [state.time, until] as a list of
    ``(time, mode)`` pairs; the first entry is the mode at the start time.
    The state is mutated in place and also returned.
    """
    mu = np.asarray(mu, dtype=float)
    if until < state.time:
        raise ValueError(f"cannot advance backwards from {state.time} to {until}")
    path = [(state.time, state.mode)]
    while state.next_switch_time <= until:
        t = state.next_switch_time
        state.mode = _jump_target(state, mu)
        state.time = t
        state.next_switch_time = t + _hold(state, mu)
        path.append((t, state.mode))
    state.time = until
    return path, state


def quantize_path(path, t0: float, dt_sub: float, n_sub: int) -> list[int]:
    """Mode on each sub-step of [t0, t0 + n_sub*dt_sub].

    A switch at time tau takes effect at the first sub-step boundary at or
    after tau.
    """
    modes = []
    k = 0
    current = path[0][1]
    for j in range(n_sub):
        boundary = t0 + j * dt_sub
        while k + 1 < len(path) and path[k + 1][0] <= boundary + 1e-12 * max(1.0, abs(boundary)):
            k += 1
            current = path[k][1]
        modes.append(current)
    return modes


def occupancy(path, t_end: float, n_modes: int) -> np.ndarray:
    """Fraction of [path[0].time, t_end] spent in each mode."""
    occ = np.zeros(n_modes)
    for (t, m), nxt in zip(path, path[1:] + [(t_end, None)]):
        occ[m - 1] += nxt[0] - t
    return occ / (t_end - path[0][0])


# Four-mode generator of the platoon scenario and its stated invariant law.
DEFAULT_MU = np.array(
    [
        [-2.0, 0.8, 0.8, 0.4],
        [1.2, -2.4, 0.8, 0.4],
        [0.4, 0.4, -1.2, 0.4],
        [1.2, 0.8, 0.8, -2.8],
    ]
)
DEFAULT_PI = np.array([11 / 40, 1 / 5, 2 / 5, 1 / 8])
