"""
Observer design equation and the terminal feedback gain.

The observer needs a symmetric positive definite P with

    P A + A' P - 2 P^2 + Q = 0,

a continuous algebraic Riccati equation with B = I and R = I/2. It is solved
here by Newton-Kleinman iteration on small dense systems (n <= 16).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import A_CT

# Printed observer solution of the platoon scenario (Q undisclosed).
DEFAULT_P = np.array(
    [
        [1.5602, 0.2230, 0.0159],
        [0.2230, 1.6081, 0.2275],
        [0.0159, 0.2275, 1.6246],
    ]
)
DEFAULT_K = np.array([1.66, 5.39, 2.42])

MAX_DIM = 16


class RiccatiError(RuntimeError):
    pass


@dataclass(frozen=True)
class CareReport:
    residual: float
    min_eig_P: float
    min_eig_Q: float

    def ok(self, tol: float = 1e-8) -> bool:
        return self.residual <= tol and self.min_eig_P > 0 and self.min_eig_Q > 0


@dataclass(frozen=True)
class ObserverDesign:
    """P, Q and the coefficient matrices Gamma = I, Upsilon = P^-1."""

    P: np.ndarray
    Q: np.ndarray

    @property
    def Gamma(self) -> np.ndarray:
        return np.eye(self.P.shape[0])

    @property
    def Upsilon(self) -> np.ndarray:
        return np.linalg.inv(self.P)

    @classmethod
    def from_Q(cls, Q=None, A=A_CT):
        Q = np.eye(A.shape[0]) if Q is None else np.asarray(Q, dtype=float)
        return cls(P=solve_observer_care(A, Q), Q=Q)

    @classmethod
    def from_P(cls, P, A=A_CT):
        """Wrap a given P; Q is taken as the matrix that makes the residual vanish."""
        P = np.asarray(P, dtype=float)
        return cls(P=P, Q=-care_lhs(P, A))


def care_lhs(P, A) -> np.ndarray:
    """P A + A' P - 2 P^2 (the Riccati expression without Q)."""
    return P @ A + A.T @ P - 2.0 * P @ P


def verify_care(P, A, Q) -> CareReport:
    P, A, Q = (np.asarray(m, dtype=float) for m in (P, A, Q))
    res = np.linalg.norm(care_lhs(P, A) + Q, "fro")
    return CareReport(
        residual=float(res),
        min_eig_P=float(np.linalg.eigvalsh(0.5 * (P + P.T)).min()),
        min_eig_Q=float(np.linalg.eigvalsh(0.5 * (Q + Q.T)).min()),
    )


def solve_lyapunov(Acl, C) -> np.ndarray:
    """Solve Acl' X + X Acl + C = 0 by vectorization (column-major vec)."""
    n = Acl.shape[0]
    eye = np.eye(n)
    lhs = np.kron(eye, Acl.T) + np.kron(Acl.T, eye)
    x = np.linalg.solve(lhs, -C.reshape(-1, order="F"))
    X = x.reshape(n, n, order="F")
    return 0.5 * (X + X.T)


def solve_observer_care(A, Q, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = A.shape[0]
    if n > MAX_DIM:
        raise RiccatiError(f"dimension {n} exceeds the supported envelope ({MAX_DIM})")
    if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() <= 0:
        raise RiccatiError("Q must be symmetric positive definite")
    S = 2.0 * np.eye(n)  # B R^-1 B' with B = I, R = I/2
    # initial stabilizing gain: A - L0 = diag(-1, ..., -n)
    L0 = A + np.diag(np.arange(1.0, n + 1))
    P = solve_lyapunov(A - L0, Q + 0.5 * L0.T @ L0)
    res = np.inf
    for _ in range(max_iter):
        res = np.linalg.norm(care_lhs(P, A) + Q, "fro")
        if res <= tol:
            break
        Acl = A - S @ P
        P = solve_lyapunov(Acl, Q + P @ S @ P)
    else:
        res = np.linalg.norm(care_lhs(P, A) + Q, "fro")
        if res > tol:
            raise RiccatiError(f"Newton-Kleinman did not converge, final residual {res:.3e}")
    if np.linalg.eigvalsh(P).min() <= 0:
        raise RiccatiError("solution is not positive definite")
    return P


# ---------------------------------------------------------------- terminal gain

def is_stabilizable(A_d, B_d, tol: float = 1e-9) -> bool:
    """PBH test for discrete time: rank [A - lam I, B] = n for |lam| >= 1."""
    A_d = np.asarray(A_d, dtype=float)
    B_d = np.asarray(B_d, dtype=float).reshape(A_d.shape[0], -1)
    n = A_d.shape[0]
    for lam in np.linalg.eigvals(A_d):
        if abs(lam) >= 1 - tol:
            if np.linalg.matrix_rank(np.hstack([A_d - lam * np.eye(n), B_d]), tol=1e-8) < n:
                return False
    return True


def discrete_lqr_gain(A_d, B_d, Q, R, tol: float = 1e-12, max_iter: int = 100000) -> np.ndarray:
    A_d = np.asarray(A_d, dtype=float)
    B_d = np.asarray(B_d, dtype=float).reshape(A_d.shape[0], -1)
    Q = np.asarray(Q, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not is_stabilizable(A_d, B_d):
        raise RiccatiError("(A_d, B_d) is not stabilizable")
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B_d.T @ P
        K = np.linalg.solve(R + BtP @ B_d, BtP @ A_d)
        P_next = A_d.T @ P @ A_d - A_d.T @ P @ B_d @ K + Q
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise RiccatiError("discrete Riccati recursion diverged")
        if np.linalg.norm(P_next - P, np.inf) <= tol * max(1.0, np.linalg.norm(P, np.inf)):
            P = P_next
            break
        P = P_next
    else:
        raise RiccatiError("discrete Riccati recursion did not converge")
    BtP = B_d.T @ P
    K = np.linalg.solve(R + BtP @ B_d, BtP @ A_d)
    return K.reshape(-1) if K.shape[0] == 1 else K


DEFAULT_LQR_WEIGHTS = (np.diag([5.0, 2.5, 1.0]), np.array([[0.1]]))


def terminal_gain(mode: str, A_d=None, B_d=None, weights=None) -> np.ndarray:
    """Gain K of the terminal law u = K . (avg observation - x - offset)."""
    if mode == "fixed":
        return DEFAULT_K.copy()
    if mode == "discrete-lqr":
        if A_d is None or B_d is None:
            raise ValueError("discrete-lqr needs A_d and B_d")
        Q, R = weights if weights is not None else DEFAULT_LQR_WEIGHTS
        return discrete_lqr_gain(A_d, B_d, Q, R)
    raise ValueError(f"unknown terminal gain mode {mode!r}")


def terminal_closed_loop(A_d, B_d, K) -> np.ndarray:
    return np.asarray(A_d) - np.outer(B_d, K)


@dataclass(frozen=True)
class ScheduledGain:
    """Bounded terminal law for the triple integrator built around a gain K.

    Inside the ellipsoid {e' P e <= c} the law is K e, saturated at u_bound;
    ``margin`` = 1 gives the largest ellipsoid on which K e never saturates,
    larger margins tolerate some saturation before rescaling. Outside it the error is rescaled to e_eps = (eps^3 e_p,
    eps^2 e_v, eps e_a) with the largest eps in (0, 1] that lands on the
    ellipsoid. This is the time-scaled (low-gain) version of the same loop,
    so the input stays within bounds without the clipping that makes a
    saturated chain of integrators oscillate.
    """

    K: np.ndarray
    P: np.ndarray
    level: float
    u_bound: float

    @classmethod
    def design(cls, K, u_bound: float, margin: float = 1.0) -> "ScheduledGain":
        K = np.asarray(K, dtype=float)
        Acl = A_CT - np.outer([0.0, 0.0, 1.0], K)
        if np.max(np.linalg.eigvals(Acl).real) >= 0:
            raise RiccatiError("terminal gain does not stabilize the continuous triple integrator")
        P = solve_lyapunov(Acl, np.eye(3))
        level = margin * u_bound**2 / float(K @ np.linalg.solve(P, K))
        return cls(K, P, level, float(u_bound))

    def scale(self, err) -> float:
        e = np.asarray(err, dtype=float)
        if self._v(e, 1.0) <= self.level:
            return 1.0
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self._v(e, mid) <= self.level:
                lo = mid
            else:
                hi = mid
        return lo

    def _v(self, e, eps):
        z = np.array([eps**3, eps**2, eps]) * e
        return float(z @ self.P @ z)

    def __call__(self, err) -> float:
        eps = self.scale(err)
        e = np.asarray(err, dtype=float) * np.array([eps**3, eps**2, eps])
        return float(np.clip(self.K @ e, -self.u_bound, self.u_bound))
