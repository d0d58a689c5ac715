"""Dense convex QP solver and MPC condensing.

Problems have the form::

    minimize    1/2 z'Hz + f'z (+ constant)
    subject to  A_eq z  = b_eq
                A_in z <= b_in

Equalities are removed first by a null-space reduction. The reduced,
strictly convex problem is solved with the dual active-set method of
Goldfarb and Idnani, which needs no feasible starting point and stops with a
Farkas certificate when the constraints are inconsistent. A primal
active-set routine (:meth:`ActiveSetSolver.solve_primal`) handles positive
semidefinite Hessians when a feasible point is already known.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .core import ConfigurationError, ConstraintSet, DynamicsModel, QuadraticCost, simulate

KKT_TOL = 1e-8
_VIOL_TOL = 1e-11
_SYM_TOL = 1e-12


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration-limit"


def _matrix(a, cols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, cols))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1) if a.size else np.zeros((0, cols))
    return a


def _vector(b, rows: int) -> np.ndarray:
    if b is None:
        return np.zeros(rows)
    return np.asarray(b, dtype=float).reshape(-1)


@dataclass
class QuadraticProgram:
    H: np.ndarray
    f: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_in: Optional[np.ndarray] = None
    b_in: Optional[np.ndarray] = None
    constant: float = 0.0

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        if self.H.ndim != 2 or self.H.shape[0] != self.H.shape[1]:
            raise ConfigurationError("H must be square")
        n = self.H.shape[0]
        self.f = _vector(self.f, n)
        self.A_eq = _matrix(self.A_eq, n)
        self.b_eq = _vector(self.b_eq, self.A_eq.shape[0])
        self.A_in = _matrix(self.A_in, n)
        self.b_in = _vector(self.b_in, self.A_in.shape[0])
        if self.f.shape[0] != n:
            raise ConfigurationError("f has wrong length")
        if self.A_eq.shape[1] != n or self.A_in.shape[1] != n:
            raise ConfigurationError("constraint matrices have wrong column count")
        if self.b_eq.shape[0] != self.A_eq.shape[0] or self.b_in.shape[0] != self.A_in.shape[0]:
            raise ConfigurationError("constraint right-hand sides have wrong length")
        scale = max(1.0, float(np.abs(self.H).max(initial=0.0)))
        if np.abs(self.H - self.H.T).max(initial=0.0) > _SYM_TOL * scale:
            raise ConfigurationError("H is not symmetric")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def n_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def n_in(self) -> int:
        return self.A_in.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.f @ z)


@dataclass
class QpSolution:
    status: QpStatus
    z: Optional[np.ndarray] = None
    value: float = np.inf
    eq_multipliers: Optional[np.ndarray] = None
    in_multipliers: Optional[np.ndarray] = None
    active_set: tuple = ()
    iterations: int = 0
    certificate: Optional[dict] = None
    kkt: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_residuals(qp: QuadraticProgram, z, y, mu) -> dict:
    """Stationarity, primal feasibility, complementarity and dual sign."""
    grad = qp.H @ z + qp.f
    if qp.n_eq:
        grad = grad + qp.A_eq.T @ y
    slack = qp.A_in @ z - qp.b_in if qp.n_in else np.zeros(0)
    if qp.n_in:
        grad = grad + qp.A_in.T @ mu
    return {
        "stationarity": float(np.abs(grad).max(initial=0.0)),
        "primal_eq": float(np.abs(qp.A_eq @ z - qp.b_eq).max(initial=0.0)) if qp.n_eq else 0.0,
        "primal_in": float(np.maximum(slack, 0.0).max(initial=0.0)),
        "complementarity": float(np.abs(mu * slack).max(initial=0.0)) if qp.n_in else 0.0,
        "dual_sign": float(np.maximum(-mu, 0.0).max(initial=0.0)) if qp.n_in else 0.0,
    }


def _null_space_split(A: np.ndarray):
    """SVD split of ``A`` into a pseudo-inverse and null-space basis."""
    p, n = A.shape
    if p == 0:
        return np.zeros((n, 0)), np.eye(n), np.zeros((0, 0)), 0
    U, S, Vt = linalg.svd(A, full_matrices=True)
    tol = max(p, n) * np.finfo(float).eps * (S[0] if S.size else 0.0) * 10
    r = int(np.sum(S > tol))
    pinv = Vt[:r].T @ np.diag(1.0 / S[:r]) @ U[:, :r].T
    return pinv, Vt[r:].T, U[:, r:], r


class _Reduced:
    """Null-space data for a fixed (H, A_eq, A_in) triple."""

    def __init__(self, qp: QuadraticProgram, require_pd: bool = True):
        self.keys = (qp.H, qp.A_eq, qp.A_in)
        if require_pd:
            try:
                linalg.cholesky(qp.H, lower=True)
            except linalg.LinAlgError:
                raise ConfigurationError("Hessian is not positive definite") from None
        self.pinv, self.Z, self.U_null, self.rank = _null_space_split(qp.A_eq)
        self.HZ = qp.H @ self.Z
        Hr = self.Z.T @ self.HZ
        self.Hr = 0.5 * (Hr + Hr.T)
        k = self.Z.shape[1]
        if k:
            L = linalg.cholesky(self.Hr, lower=True)
            self.Hinv = linalg.cho_solve((L, True), np.eye(k))
            self.Hinv = 0.5 * (self.Hinv + self.Hinv.T)
        else:
            self.Hinv = np.zeros((0, 0))
        self.G = qp.A_in @ self.Z
        self.row_norm = np.linalg.norm(qp.A_in, axis=1) if qp.n_in else np.zeros(0)
        self.row_norm[self.row_norm == 0.0] = 1.0

    def matches(self, qp: QuadraticProgram) -> bool:
        return self.keys[0] is qp.H and self.keys[1] is qp.A_eq and self.keys[2] is qp.A_in


class ActiveSetSolver:
    """Reusable solver; caches the factorization of the last (H, A_eq, A_in).

    One instance per thread: the cache is mutable workspace.
    """

    def __init__(self, max_iter: Optional[int] = None):
        self.max_iter = max_iter
        self._reduced: Optional[_Reduced] = None

    def _prepare(self, qp: QuadraticProgram) -> _Reduced:
        if self._reduced is None or not self._reduced.matches(qp):
            self._reduced = _Reduced(qp)
        return self._reduced

    # -- dual method ---------------------------------------------------------

    def solve(self, qp: QuadraticProgram, warm_active: Optional[Sequence[int]] = None) -> QpSolution:
        red = self._prepare(qp)
        limit = self.max_iter if self.max_iter is not None else 10 * (qp.n + qp.n_in)
        if qp.n_eq:
            z_p = red.pinv @ qp.b_eq
            res = qp.A_eq @ z_p - qp.b_eq
            if np.abs(res).max() > 1e-9 * (1.0 + np.abs(qp.b_eq).max()):
                v = red.U_null @ (red.U_null.T @ qp.b_eq)
                return QpSolution(QpStatus.INFEASIBLE, certificate={"eq": v, "in": np.zeros(qp.n_in)})
        else:
            z_p = np.zeros(qp.n)
        c = red.Z.T @ (qp.H @ z_p + qp.f)
        h = qp.b_in - qp.A_in @ z_p
        status, w, active, u, iters, cert = _goldfarb_idnani(
            red.Hr, red.Hinv, c, red.G, h, red.row_norm, limit, warm_active)
        if status is QpStatus.INFEASIBLE:
            return QpSolution(status, iterations=iters, certificate=self._full_certificate(qp, red, cert))
        if status is QpStatus.ITERATION_LIMIT:
            return QpSolution(status, iterations=iters)
        z = z_p + red.Z @ w
        mu = np.zeros(qp.n_in)
        mu[list(active)] = u
        y = self._eq_multipliers(qp, red, z, mu)
        return QpSolution(QpStatus.OPTIMAL, z, qp.objective(z), y, mu, tuple(sorted(active)),
                          iters, None, kkt_residuals(qp, z, y, mu))

    @staticmethod
    def _eq_multipliers(qp, red, z, mu):
        if not qp.n_eq:
            return np.zeros(0)
        g = qp.H @ z + qp.f + (qp.A_in.T @ mu if qp.n_in else 0.0)
        return -red.pinv.T @ g

    @staticmethod
    def _full_certificate(qp, red, y_in):
        # y_in >= 0 with G'y = 0 and h'y < 0 in the reduced space; lift the
        # equality part so that A_in'y + A_eq'v = 0 holds in full space.
        v = -red.pinv.T @ (qp.A_in.T @ y_in) if qp.n_eq else np.zeros(0)
        return {"in": y_in, "eq": v}

    # -- primal method -------------------------------------------------------

    def solve_primal(self, qp: QuadraticProgram, z0, working: Optional[Sequence[int]] = None,
                     feas_tol: float = 1e-9) -> QpSolution:
        """Primal active-set method from a feasible ``z0``.

        ``H`` only needs to be positive semidefinite; the problem must be
        bounded below on the feasible set.
        """
        z = np.array(z0, dtype=float)
        n = qp.n
        if qp.n_eq and np.abs(qp.A_eq @ z - qp.b_eq).max() > feas_tol:
            raise ValueError("starting point violates the equality constraints")
        slack = qp.b_in - qp.A_in @ z
        if qp.n_in and slack.min() < -feas_tol:
            raise ValueError("starting point violates the inequality constraints")
        limit = self.max_iter if self.max_iter is not None else 10 * (n + qp.n_in)
        row_norm = np.linalg.norm(qp.A_in, axis=1) if qp.n_in else np.zeros(0)
        row_norm[row_norm == 0.0] = 1.0
        candidates = np.flatnonzero(np.abs(slack) <= feas_tol * row_norm) if qp.n_in else []
        if working is not None:
            pref = [i for i in working if i in set(candidates)]
            candidates = pref + [i for i in candidates if i not in set(pref)]
        W = _independent_rows(qp.A_eq, qp.A_in, candidates)
        in_w = np.zeros(qp.n_in, dtype=bool)
        in_w[W] = True
        H_scale = max(1.0, float(np.abs(qp.H).max(initial=0.0)))
        iters = 0
        while True:
            iters += 1
            if iters > limit:
                return QpSolution(QpStatus.ITERATION_LIMIT, z, qp.objective(z), iterations=iters)
            Aw = np.vstack([qp.A_eq, qp.A_in[W]]) if W else qp.A_eq
            _, Z, _, _ = _null_space_split(Aw)
            g = qp.H @ z + qp.f
            p = np.zeros(n)
            ray = False
            if Z.shape[1]:
                Hr = Z.T @ qp.H @ Z
                lam, V = np.linalg.eigh(0.5 * (Hr + Hr.T))
                pos = lam > 1e-11 * H_scale
                gr = Z.T @ g
                g0 = V[:, ~pos].T @ gr
                if g0.size and np.abs(g0).max() > 1e-12 * (1.0 + np.abs(g).max()):
                    p = Z @ (-V[:, ~pos] @ g0)
                    ray = True
                elif pos.any():
                    p = Z @ (-V[:, pos] @ ((V[:, pos].T @ gr) / lam[pos]))
            if np.abs(p).max(initial=0.0) <= 1e-13 * (1.0 + np.abs(z).max(initial=0.0)):
                lam_w = np.linalg.lstsq(Aw.T, -g, rcond=None)[0] if Aw.shape[0] else np.zeros(0)
                mu_w = lam_w[qp.n_eq:]
                if not W or mu_w.min() >= -1e-13 * (1.0 + np.abs(g).max()):
                    break
                drop = int(np.argmin(mu_w))
                in_w[W[drop]] = False
                del W[drop]
                continue
            alpha = np.inf if ray else 1.0
            block = -1
            if qp.n_in:
                Ap = qp.A_in @ p
                s = qp.b_in - qp.A_in @ z
                mask = (~in_w) & (Ap > 1e-14 * row_norm * np.abs(p).max())
                if mask.any():
                    idx = np.flatnonzero(mask)
                    ratios = np.maximum(s[idx], 0.0) / Ap[idx]
                    j = int(np.argmin(ratios))
                    if ratios[j] < alpha:
                        alpha = float(ratios[j])
                        block = int(idx[j])
            if not np.isfinite(alpha):
                raise ValueError("QP is unbounded below on the feasible set")
            z = z + alpha * p
            if block >= 0:
                W.append(block)
                in_w[block] = True
        Aw = np.vstack([qp.A_eq, qp.A_in[W]]) if W else qp.A_eq
        g = qp.H @ z + qp.f
        lam_w = np.linalg.lstsq(Aw.T, -g, rcond=None)[0] if Aw.shape[0] else np.zeros(0)
        y = lam_w[:qp.n_eq]
        mu = np.zeros(qp.n_in)
        mu[W] = lam_w[qp.n_eq:]
        return QpSolution(QpStatus.OPTIMAL, z, qp.objective(z), y, mu, tuple(sorted(W)), iters,
                          None, kkt_residuals(qp, z, y, mu))


def _independent_rows(A_eq, A_in, rows) -> list:
    """Greedy subset of ``rows`` of ``A_in`` independent of ``A_eq`` and each other."""
    chosen = []
    basis = A_eq.copy()
    r = np.linalg.matrix_rank(basis) if basis.shape[0] else 0
    for i in rows:
        trial = np.vstack([basis, A_in[i]])
        rk = np.linalg.matrix_rank(trial)
        if rk > r:
            basis, r = trial, rk
            chosen.append(int(i))
    return chosen


def _goldfarb_idnani(H, Hinv, c, G, h, row_norm, limit, warm_active=None):
    """Dual active-set iterations for ``min 1/2 w'Hw + c'w, G w <= h``.

    Returns ``(status, w, active, multipliers, iterations, certificate)``.
    """
    k = H.shape[0]
    m = G.shape[0]
    active: list = []
    u = np.zeros(0)
    w = -Hinv @ c if k else np.zeros(0)
    if warm_active:
        started = _warm_start(H, c, G, h, warm_active)
        if started is not None:
            w, active, u = started
    iters = 0
    while True:
        if m == 0:
            break
        viol = (G @ w - h) / row_norm if k else -h / row_norm
        if active:
            viol[active] = -np.inf
        p = int(np.argmax(viol))
        if viol[p] <= _VIOL_TOL * (1.0 + abs(h[p]) / row_norm[p]):
            break
        a = G[p]
        u_p = 0.0
        while True:
            iters += 1
            if iters > limit:
                return QpStatus.ITERATION_LIMIT, w, active, u, iters, None
            if k:
                Ha = Hinv @ a
                if active:
                    N = G[active].T
                    HN = Hinv @ N
                    M = N.T @ HN
                    du = -np.linalg.solve(M, N.T @ Ha)
                    dx = -(Ha + HN @ du)
                else:
                    du = np.zeros(0)
                    dx = -Ha
                curv = float(-a @ dx)
                ref = float(a @ Ha)
            else:
                du = np.zeros(len(active))
                if active:
                    N = G[active].T
                    du = -np.linalg.lstsq(N, a, rcond=None)[0] if N.size else du
                dx = np.zeros(0)
                curv, ref = 0.0, 1.0
            slack_p = float(a @ w - h[p]) if k else float(-h[p])
            dependent = len(active) >= k or curv <= 1e-10 * max(ref, 1e-300)
            t2 = np.inf if dependent else slack_p / curv
            t1, drop = np.inf, -1
            if active:
                neg = np.flatnonzero(du < -1e-14 * (1.0 + np.abs(du).max()))
                if neg.size:
                    ratios = u[neg] / -du[neg]
                    j = int(np.argmin(ratios))
                    t1, drop = float(ratios[j]), int(neg[j])
            if not np.isfinite(t1) and not np.isfinite(t2):
                y = np.zeros(m)
                if active:
                    y[active] = np.maximum(du, 0.0)
                y[p] = 1.0
                return QpStatus.INFEASIBLE, w, active, u, iters, y
            if not np.isfinite(t2):
                u = u + t1 * du
                u_p += t1
                del active[drop]
                u = np.delete(u, drop)
                continue
            t = min(t1, t2)
            if k:
                w = w + t * dx
            if active:
                u = u + t * du
            u_p += t
            if t2 <= t1:
                active.append(p)
                u = np.append(u, u_p)
                break
            del active[drop]
            u = np.delete(u, drop)
    if active and k:
        w, u = _polish(H, c, G, h, active, w, u)
    return QpStatus.OPTIMAL, w, active, np.maximum(u, 0.0), iters, None


def _kkt_solve(H, c, G, h, active):
    k = H.shape[0]
    Ga = G[active]
    na = len(active)
    K = np.zeros((k + na, k + na))
    K[:k, :k] = H
    K[:k, k:] = Ga.T
    K[k:, :k] = Ga
    rhs = np.concatenate([-c, h[active]])
    sol = np.linalg.solve(K, rhs)
    # one step of iterative refinement
    sol = sol + np.linalg.solve(K, rhs - K @ sol)
    return sol[:k], sol[k:]


def _polish(H, c, G, h, active, w, u):
    try:
        w2, u2 = _kkt_solve(H, c, G, h, active)
    except np.linalg.LinAlgError:
        return w, u
    if u2.min(initial=0.0) < -1e-9 * (1.0 + np.abs(u2).max(initial=0.0)):
        return w, u
    return w2, u2


def _warm_start(H, c, G, h, warm_active):
    active = []
    for i in dict.fromkeys(int(i) for i in warm_active):
        if 0 <= i < G.shape[0]:
            trial = active + [i]
            if np.linalg.matrix_rank(G[trial]) == len(trial):
                active = trial
    if not active:
        return None
    try:
        w, u = _kkt_solve(H, c, G, h, active)
    except np.linalg.LinAlgError:
        return None
    if u.min() < 0.0:
        return None
    return w, active, u


def solve_qp(qp: QuadraticProgram, warm_active: Optional[Sequence[int]] = None) -> QpSolution:
    """Solve a strictly convex QP with a fresh solver instance."""
    return ActiveSetSolver().solve(qp, warm_active)


# ---------------------------------------------------------------- condensing


class CondensedHorizon:
    """Prediction matrices of a linear model over ``N`` steps.

    ``x_k = Phi[k] x_0 + Gamma[k] U`` with ``U`` the stacked inputs. For a
    fixed initial state the Hessian, inequality rows and linear term are
    shared by every terminal candidate, so :meth:`program` reuses the same
    array objects and the solver cache hits.
    """

    def __init__(self, model: DynamicsModel, cost: QuadraticCost, N: int, cs: ConstraintSet):
        if not model.is_linear:
            raise ConfigurationError("condensing needs a linear model")
        if not isinstance(cost, QuadraticCost):
            raise ConfigurationError("condensing needs a quadratic stage cost")
        if N < 1:
            raise ConfigurationError("horizon must be positive")
        self.model, self.cost, self.N, self.cs = model, cost, N, cs
        A, B = np.asarray(model.A), np.asarray(model.B)
        n, m = model.n, model.m
        self.Phi = [np.eye(n)]
        for _ in range(N):
            self.Phi.append(A @ self.Phi[-1])
        self.Gamma = [np.zeros((n, N * m))]
        for k in range(1, N + 1):
            Gk = A @ self.Gamma[-1]
            Gk[:, (k - 1) * m:k * m] += B
            self.Gamma.append(Gk)
        Q, R = np.asarray(cost.Q), np.asarray(cost.R)
        H = np.kron(np.eye(N), R)
        for k in range(1, N):
            H = H + self.Gamma[k].T @ Q @ self.Gamma[k]
        H = 2.0 * H
        self.H = 0.5 * (H + H.T)
        self.A_eq = self.Gamma[N]
        rows, self._rhs_parts = [], []
        # state bounds on x_1 .. x_{N-1}; the terminal state is pinned
        for k in range(1, N):
            for i in range(n):
                if np.isfinite(cs.x_upper[i]):
                    rows.append(self.Gamma[k][i])
                    self._rhs_parts.append(("xu", k, i))
                if np.isfinite(cs.x_lower[i]):
                    rows.append(-self.Gamma[k][i])
                    self._rhs_parts.append(("xl", k, i))
        for k in range(N):
            for i in range(m):
                e = np.zeros(N * m)
                e[k * m + i] = 1.0
                if np.isfinite(cs.u_upper[i]):
                    rows.append(e)
                    self._rhs_parts.append(("uu", k, i))
                if np.isfinite(cs.u_lower[i]):
                    rows.append(-e)
                    self._rhs_parts.append(("ul", k, i))
        self.A_in = np.array(rows) if rows else np.zeros((0, N * m))
        k = self.A_eq.shape[0]
        kkt = np.block([[self.H, self.A_eq.T], [self.A_eq, np.zeros((k, k))]])
        self._kkt_pinv = np.linalg.pinv(kkt)
        self._last_key = None
        self._last = None

    def _base(self, x0):
        key = np.asarray(x0, dtype=float).tobytes()
        if key == self._last_key:
            return self._last
        x0 = np.asarray(x0, dtype=float)
        Q = np.asarray(self.cost.Q)
        x_F = np.asarray(self.cost.x_F)
        f = np.zeros(self.H.shape[0])
        const = 0.0
        free = []
        for k in range(self.N):
            d = self.Phi[k] @ x0 - x_F
            free.append(self.Phi[k] @ x0)
            const += float(d @ Q @ d)
            if k >= 1:
                f += 2.0 * self.Gamma[k].T @ Q @ d
        b_in = np.empty(len(self._rhs_parts))
        cs = self.cs
        for r, (kind, k, i) in enumerate(self._rhs_parts):
            if kind == "xu":
                b_in[r] = cs.x_upper[i] - free[k][i]
            elif kind == "xl":
                b_in[r] = -(cs.x_lower[i] - free[k][i])
            elif kind == "uu":
                b_in[r] = cs.u_upper[i]
            else:
                b_in[r] = -cs.u_lower[i]
        free_N = self.Phi[self.N] @ x0
        self._last_key = key
        self._last = (f, b_in, const, free_N)
        return self._last

    def program(self, x0, x_terminal) -> QuadraticProgram:
        f, b_in, const, free_N = self._base(x0)
        b_eq = np.asarray(x_terminal, dtype=float) - free_N
        return QuadraticProgram(self.H, f, self.A_eq, b_eq, self.A_in, b_in, const)

    def unconstrained_value(self, x0, x_terminal) -> float:
        """Optimal horizon cost with the inequality rows dropped: a lower
        bound on the value of :meth:`program` whenever that QP is feasible."""
        f, _, const, free_N = self._base(x0)
        rhs = np.concatenate([-f, np.asarray(x_terminal, dtype=float) - free_N])
        U = (self._kkt_pinv @ rhs)[:self.H.shape[0]]
        return float(0.5 * U @ self.H @ U + f @ U + const)

    def states(self, x0, U) -> np.ndarray:
        """Predicted states obtained by stepping the model (exact dynamics)."""
        return simulate(self.model, x0, np.asarray(U).reshape(self.N, self.model.m))


def condense_mpc(model: DynamicsModel, cost: QuadraticCost, N: int, x0, x_terminal,
                 cs: ConstraintSet) -> QuadraticProgram:
    """Build the input-only QP for an ``N``-step plan ending exactly at
    ``x_terminal``. Its value plus ``constant`` is the horizon stage cost."""
    return CondensedHorizon(model, cost, N, cs).program(x0, x_terminal)
