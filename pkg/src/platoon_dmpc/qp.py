"""
Dense convex QP solver (operator splitting with active-set polish).

Problem form::

    minimize    0.5 z'Hz + f'z
    subject to  Aeq z  = beq
                Ain z <= bin
                lb <= z <= ub

Internally every constraint is stacked into ``l <= C z <= u`` and solved with
an ADMM iteration in the style of OSQP: Ruiz equilibration, one dense
factorization per penalty value, over-relaxation and adaptive rho. Once the
iterates settle, the detected active set is polished by solving the
equality-constrained KKT system directly.

Multipliers are returned for the stacked rows ``[Aeq; Ain; I]`` with the sign
convention y > 0 when the upper bound is active and y < 0 for the lower.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
MAX_ITER = "max-iterations"
INFEASIBLE = "infeasible"

_INF = 1e20


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None
    Ain: np.ndarray | None = None
    bin: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        d = H.shape[0]
        if H.shape != (d, d):
            raise ValueError(f"H must be square, got {H.shape}")
        H = 0.5 * (H + H.T)
        w, V = np.linalg.eigh(H)
        if w.min(initial=0.0) < -1e-10 * max(1.0, abs(w).max(initial=0.0)):
            raise ValueError(f"H is not positive semidefinite (min eigenvalue {w.min():.3e})")
        if w.min(initial=0.0) < 0:
            H = (V * np.maximum(w, 0.0)) @ V.T
            H = 0.5 * (H + H.T)
        self.H = H
        self.f = np.asarray(self.f, dtype=float).reshape(d)
        self.Aeq, self.beq = _rows(self.Aeq, self.beq, d, "eq")
        self.Ain, self.bin = _rows(self.Ain, self.bin, d, "in")
        self.lb = np.full(d, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(d)
        self.ub = np.full(d, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(d)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.f @ z)

    def stacked(self):
        """Return (C, l, u) for the stacked form l <= Cz <= u."""
        C = np.vstack([self.Aeq, self.Ain, np.eye(self.n)])
        lo = np.concatenate([self.beq, np.full(len(self.bin), -np.inf), self.lb])
        hi = np.concatenate([self.beq, self.bin, self.ub])
        return C, lo, hi

    def max_violation(self, z) -> float:
        C, lo, hi = self.stacked()
        cz = C @ z
        return float(np.max(np.concatenate([[0.0], cz - hi, lo - cz])))

    def dump(self) -> str:
        """Plain-text listing of all matrices, for offline inspection."""
        lines = [f"# QpProblem n={self.n} eq={len(self.beq)} in={len(self.bin)}"]
        with np.printoptions(precision=17, linewidth=200, threshold=10**6):
            for name in ("H", "f", "Aeq", "beq", "Ain", "bin", "lb", "ub"):
                lines.append(f"{name} =")
                lines.append(np.array2string(np.asarray(getattr(self, name))))
        return "\n".join(lines) + "\n"


def _rows(A, b, d, tag):
    if A is None or (hasattr(A, "__len__") and len(A) == 0):
        return np.zeros((0, d)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[1] != d or A.shape[0] != b.shape[0]:
        raise ValueError(f"A{tag} has shape {A.shape}, b{tag} has {b.shape[0]} rows, n={d}")
    return A, b


@dataclass
class KktResiduals:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


@dataclass
class QpSolution:
    z: np.ndarray
    status: str
    kkt: KktResiduals
    iterations: int
    y: np.ndarray = field(repr=False, default=None)
    objective: float = np.nan
    polished: bool = False


def kkt_residuals(qp: QpProblem, z, multipliers) -> KktResiduals:
    """Infinity-norm KKT residuals for stacked multipliers ``[nu; lam; bound]``.

    Complementarity is |y_j| * gap_j / max(1, |y_j|): the plain product for
    small multipliers and the gap itself for large ones.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(multipliers, dtype=float)
    C, lo, hi = qp.stacked()
    cz = C @ z
    stat = np.abs(qp.H @ z + qp.f + C.T @ y).max(initial=0.0)
    prim = np.max(np.concatenate([[0.0], cz - hi, lo - cz]))
    ypos, yneg = np.maximum(y, 0.0), np.minimum(y, 0.0)
    # a multiplier may only push against a finite bound
    dual = max(
        np.abs(ypos[~np.isfinite(hi)]).max(initial=0.0),
        np.abs(yneg[~np.isfinite(lo)]).max(initial=0.0),
    )
    gap_hi = np.where(np.isfinite(hi), hi - cz, 0.0)
    gap_lo = np.where(np.isfinite(lo), cz - lo, 0.0)
    # products are divided by max(1, |y|) so large multipliers do not amplify roundoff
    scale = np.maximum(1.0, np.abs(y))
    comp = np.abs(np.concatenate([ypos * gap_hi / scale, yneg * gap_lo / scale])).max(initial=0.0)
    return KktResiduals(float(stat), float(prim), float(dual), float(comp))


def _ruiz(H, C, f, iters=15):
    n, m = H.shape[0], C.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Hs, Cs = H.copy(), C.copy()
    for _ in range(iters):
        col = np.maximum(np.abs(Hs).max(axis=0), np.abs(Cs).max(axis=0, initial=0.0))
        row = np.abs(Cs).max(axis=1, initial=0.0)
        dD = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        dE = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        Hs = dD[:, None] * Hs * dD[None, :]
        Cs = dE[:, None] * Cs * dD[None, :]
        D *= dD
        E *= dE
    fs = D * f
    scale = max(np.abs(Hs).max(axis=0).mean(), np.abs(fs).max(initial=0.0))
    c = 1.0 / np.clip(scale, 1e-4, 1e4)
    return Hs * c, Cs, fs * c, D, E, c


class _Admm:
    sigma = 1e-6
    alpha = 1.6
    rho_min = 1e-6
    rho_max = 1e6
    eq_factor = 1e3

    def __init__(self, qp: QpProblem):
        self.qp = qp
        C, lo, hi = qp.stacked()
        self.C, self.lo, self.hi = C, lo, hi
        self.H, self.Cs, self.f, self.D, self.E, self.c = _ruiz(qp.H, C, qp.f)
        self.los = np.clip(lo * self.E, -_INF, _INF)
        self.his = np.clip(hi * self.E, -_INF, _INF)
        self.is_eq = np.isfinite(lo) & np.isfinite(hi) & (np.abs(hi - lo) < 1e-12)
        self.is_free = ~np.isfinite(lo) & ~np.isfinite(hi)
        self.set_rho(0.1)

    def set_rho(self, rho):
        self.rho = float(np.clip(rho, self.rho_min, self.rho_max))
        r = np.full(self.Cs.shape[0], self.rho)
        r[self.is_eq] *= self.eq_factor
        r[self.is_free] = self.rho_min
        self.rho_vec = r
        K = self.H + self.sigma * np.eye(self.H.shape[0]) + self.Cs.T @ (r[:, None] * self.Cs)
        self.Kinv = np.linalg.inv(K)

    def unscaled_residuals(self, x, z, y):
        qp = self.qp
        xu = self.D * x
        zu = z / self.E
        yu = self.E * y / self.c
        prim = np.abs(self.C @ xu - zu).max(initial=0.0)
        dual = np.abs(qp.H @ xu + qp.f + self.C.T @ yu).max(initial=0.0)
        return prim, dual, xu, yu


def _kkt_solve(qp: QpProblem, C, b_act, idx):
    n, m = qp.n, len(idx)
    Ca = C[idx]
    delta = 1e-10
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = qp.H
    kkt[:n, n:] = Ca.T
    kkt[n:, :n] = Ca
    reg = kkt.copy()
    reg[:n, :n] += delta * np.eye(n)
    reg[n:, n:] -= delta * np.eye(m)
    rhs = np.concatenate([-qp.f, b_act])
    try:
        sol = np.linalg.solve(reg, rhs)
        for _ in range(5):
            sol = sol + np.linalg.solve(reg, rhs - kkt @ sol)
    except np.linalg.LinAlgError:
        return None, None
    if not np.all(np.isfinite(sol)):
        return None, None
    return sol[:n], sol[n:]


def _polish(qp: QpProblem, C, lo, hi, y, tol):
    """Solve the KKT system on the active set guessed from the multipliers."""
    m = C.shape[0]
    eq = np.isfinite(lo) & np.isfinite(hi) & (np.abs(hi - lo) < 1e-12)
    thr = 1e-9 * max(1.0, np.abs(y).max(initial=0.0))
    upper = ((y > thr) & np.isfinite(hi)) | eq
    lower = (y < -thr) & np.isfinite(lo) & ~eq
    idx = np.flatnonzero(upper | lower)
    b_act = np.where(upper[idx], hi[idx], lo[idx])
    z, ya = _kkt_solve(qp, C, b_act, idx)
    if z is None:
        return None
    yfull = np.zeros(m)
    yfull[idx] = ya
    res = kkt_residuals(qp, z, yfull)
    if res.max() <= tol:
        return z, yfull, res
    return None


def dual_active_set(qp: QpProblem, tol: float = 1e-9, max_iter: int = 1000):
    """Goldfarb-Idnani dual active-set method for strictly convex problems.

    Returns ``(status, z, y)`` with stacked multipliers. Constraints are
    handled in the form c'z >= d; an upper bound row C_j z <= hi_j becomes
    c = -C_j, a lower bound row c = C_j.
    """
    C, lo, hi = qp.stacked()
    n, m = qp.n, C.shape[0]
    try:
        Hinv = np.linalg.inv(qp.H)
        np.linalg.cholesky(qp.H)
    except np.linalg.LinAlgError:
        return None
    eq = np.isfinite(lo) & np.isfinite(hi) & (np.abs(hi - lo) < 1e-12)
    # candidate inequality constraints: (row, sign) with sign=-1 for upper
    cand_rows, cand_sign = [], []
    for j in range(m):
        if eq[j]:
            continue
        if np.isfinite(hi[j]):
            cand_rows.append(j)
            cand_sign.append(-1.0)
        if np.isfinite(lo[j]):
            cand_rows.append(j)
            cand_sign.append(1.0)
    cand_rows = np.array(cand_rows, dtype=int)
    cand_sign = np.array(cand_sign)
    Cc = cand_sign[:, None] * C[cand_rows]
    dc = cand_sign * np.where(cand_sign < 0, hi[cand_rows], lo[cand_rows])

    eq_idx = np.flatnonzero(eq)
    N = C[eq_idx].T.copy()  # active normals as columns (equalities first)
    d_act = hi[eq_idx].copy()
    n_eq = len(eq_idx)
    active = []  # candidate indices of active inequalities
    if n_eq:
        z_sol, ya = _kkt_solve(qp, C, d_act, eq_idx)
        if z_sol is None:
            return None
        x = z_sol
        u = -ya  # multipliers of c'x = d form (c = C_j)
    else:
        x = -Hinv @ qp.f
        u = np.zeros(0)
    scale = max(1.0, np.abs(dc).max(initial=0.0))

    def directions(cp):
        if N.shape[1] == 0:
            return Hinv @ cp, np.zeros(0)
        HN = Hinv @ N
        r = np.linalg.solve(N.T @ HN, HN.T @ cp)
        return Hinv @ cp - HN @ r, r

    for _ in range(max_iter):
        s = Cc @ x - dc if len(dc) else np.zeros(0)
        if len(active):
            s[active] = 0.0
        if len(s) == 0 or s.min() >= -tol * scale:
            break
        p = int(np.argmin(s))
        cp = Cc[p]
        u_plus = np.append(u, 0.0)
        while True:
            zdir, r = directions(cp)
            t1, k = np.inf, -1
            for a_pos in range(n_eq, len(u_plus) - 1):
                if r[a_pos] > 1e-14 and u_plus[a_pos] / r[a_pos] < t1:
                    t1, k = u_plus[a_pos] / r[a_pos], a_pos
            zc = zdir @ cp
            sp = cp @ x - dc[p]
            # c_p is (numerically) in the span of the working set when z vanishes
            t2 = -sp / zc if zc > 1e-9 * (cp @ Hinv @ cp) else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                y = np.zeros(m)
                return INFEASIBLE, x, y
            u_plus = u_plus + t * np.append(-r, 1.0)
            if np.isfinite(t2):
                x = x + t * zdir
            if t2 <= t1:
                N = np.column_stack([N, cp])
                u = u_plus
                active.append(p)
                # re-solve on the working set to stop round-off from drifting
                rows = np.concatenate([eq_idx, cand_rows[active]]).astype(int)
                sgn = np.concatenate([np.ones(n_eq), cand_sign[active]])
                xs, lam = _kkt_solve(qp, C, np.concatenate([d_act, sgn[n_eq:] * dc[active]]), rows)
                if xs is not None:
                    x, u = xs, -sgn * lam
                break
            # drop constraint k and keep working on p
            ai = k - n_eq
            N = np.delete(N, k, axis=1)
            u_plus = np.delete(u_plus, k)
            active.pop(ai)
        else:  # pragma: no cover
            pass
    else:
        return None

    y = np.zeros(m)
    if n_eq:
        y[eq_idx] = -u[:n_eq]
    for a_pos, ci in enumerate(active):
        j = cand_rows[ci]
        y[j] += -cand_sign[ci] * u[n_eq + a_pos]
    return OPTIMAL, x, y


def solve(qp: QpProblem, tol: float = 1e-6, max_iter: int = 4000, warm_start=None,
          warm_dual=None, polish: bool = True, fallback_after: int = 200) -> QpSolution:
    """Solve ``qp``; ``warm_start``/``warm_dual`` seed the primal/dual iterates.

    With ``polish`` on, an active-set polish is attempted at iterations
    10, 20, 40, 80, ... and accepted as soon as it satisfies the KKT
    conditions to ``tol``. If ADMM has not converged after
    ``fallback_after`` iterations and H is positive definite, the exact
    dual active-set method takes over.
    """
    w = _Admm(qp)
    n, m = qp.n, w.Cs.shape[0]
    x = np.zeros(n) if warm_start is None else np.asarray(warm_start, dtype=float) / w.D
    y = np.zeros(m) if warm_dual is None else np.asarray(warm_dual, dtype=float) * w.c / w.E
    z = np.clip(w.Cs @ x, w.los, w.his)
    check_every = 5
    adapt_every = 25
    yu = y
    next_polish = 10
    for it in range(1, max_iter + 1):
        rhs = w.sigma * x - w.f + w.Cs.T @ (w.rho_vec * z - y)
        xt = w.Kinv @ rhs
        zt = w.Cs @ xt
        x_new = w.alpha * xt + (1 - w.alpha) * x
        zr = w.alpha * zt + (1 - w.alpha) * z
        z_new = np.clip(zr + y / w.rho_vec, w.los, w.his)
        dy = w.rho_vec * (zr - z_new)
        y = y + dy
        x, z = x_new, z_new

        if it % check_every and it != max_iter:
            continue
        prim, dual, xu, yu = w.unscaled_residuals(x, z, y)
        if prim <= tol and dual <= tol:
            res = kkt_residuals(qp, xu, yu)
            if res.max() <= tol:
                return _finish(qp, xu, yu, res, OPTIMAL, it, False)
        if polish and it >= next_polish:
            next_polish *= 2
            p = _polish(qp, w.C, w.lo, w.hi, yu, tol)
            if p is not None:
                return _finish(qp, p[0], p[1], p[2], OPTIMAL, it, True)
        if _primal_infeasible(w, dy):
            res = kkt_residuals(qp, xu, yu)
            return _finish(qp, xu, yu, res, INFEASIBLE, it, False)
        if polish and it == fallback_after:
            out = _exact(qp, tol, it)
            if out is not None:
                return out
        if it % adapt_every == 0:
            prim_s = np.abs(w.Cs @ x - z).max(initial=0.0)
            dual_s = np.abs(w.H @ x + w.f + w.Cs.T @ y).max(initial=0.0)
            pn = prim_s / max(np.abs(w.Cs @ x).max(initial=0.0), np.abs(z).max(initial=0.0), 1e-10)
            dn = dual_s / max(np.abs(w.H @ x).max(initial=0.0), np.abs(w.Cs.T @ y).max(initial=0.0),
                              np.abs(w.f).max(initial=0.0), 1e-10)
            new_rho = w.rho * np.sqrt(pn / max(dn, 1e-30))
            if new_rho > 5 * w.rho or new_rho < w.rho / 5:
                w.set_rho(new_rho)
    prim, dual, xu, yu = w.unscaled_residuals(x, z, y)
    p = _polish(qp, w.C, w.lo, w.hi, yu, tol) if polish else None
    if p is not None:
        return _finish(qp, p[0], p[1], p[2], OPTIMAL, max_iter, True)
    return _finish(qp, xu, yu, kkt_residuals(qp, xu, yu), MAX_ITER, max_iter, False)


def _exact(qp, tol, it):
    got = dual_active_set(qp)
    if got is None:
        return None
    status, z, y = got
    res = kkt_residuals(qp, z, y)
    if status == INFEASIBLE:
        return _finish(qp, z, y, res, INFEASIBLE, it, True)
    if res.max() <= tol:
        return _finish(qp, z, y, res, OPTIMAL, it, True)
    return None


def _primal_infeasible(w: _Admm, dy, eps=1e-7) -> bool:
    ny = np.abs(dy).max(initial=0.0)
    if ny < 1e-12:
        return False
    d = dy / ny
    if np.abs(w.Cs.T @ d).max(initial=0.0) > eps:
        return False
    hi_fin = w.his < _INF * 0.5
    lo_fin = w.los > -_INF * 0.5
    if np.any((d > eps) & ~hi_fin) or np.any((d < -eps) & ~lo_fin):
        return False
    support = np.sum(np.where(hi_fin, w.his, 0.0) * np.maximum(d, 0.0)) + np.sum(
        np.where(lo_fin, w.los, 0.0) * np.minimum(d, 0.0)
    )
    return support < -eps


def _finish(qp, z, y, res, status, it, polished):
    return QpSolution(z=z, status=status, kkt=res, iterations=it, y=y,
                      objective=qp.objective(z), polished=polished)
