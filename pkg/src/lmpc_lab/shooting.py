"""Single-shooting solver for fixed-terminal nonlinear subproblems.

The decision variables are the stacked inputs of a ``steps``-long plan that
starts at a fixed state and must end exactly at a given terminal state
(optionally only on a subset of coordinates). Path constraints are the box
and ellipse constraints of a :class:`~lmpc_lab.core.ConstraintSet` on the
intermediate states, and box bounds on the inputs.

Two phases are used per starting guess:

* a quadratic-penalty Levenberg-Marquardt descent with projection onto the
  input box (robust from poor guesses), and
* an SQP polish that linearizes dynamics and constraints and solves a QP with
  :mod:`lmpc_lab.qp_solver`, driving terminal and path violations to round-off.

Starting guesses that are already feasible are accepted as-is when the stage
cost has no smooth part to optimize.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .core import ConstraintSet, DynamicsModel, monotone_sign
from .qp_solver import ActiveSetSolver, QpStatus, QuadraticProgram


@dataclass(frozen=True)
class ShootingOptions:
    penalty_start: float = 1e2
    penalty_growth: float = 10.0
    penalty_rounds: int = 5
    lm_iterations: int = 40
    accept_violation: float = 1e-6
    sqp_iterations: int = 40
    terminal_tol: float = 1e-10
    path_tol: float = 1e-10
    accept_tol: float = 1e-9
    step_tol: float = 1e-15
    trust_radius: float = 2.0
    regularization: float = 1.0


@dataclass
class ShootingResult:
    inputs: np.ndarray
    states: np.ndarray
    success: bool
    iterations: int
    violation: float
    start_index: int = -1


class _Plan:
    """Rollout of one input sequence with first-order sensitivities."""

    def __init__(self, model: DynamicsModel, x0: np.ndarray, U: np.ndarray, with_jac: bool = True):
        steps, m = U.shape
        n = model.n
        X = np.empty((steps + 1, n))
        X[0] = x0
        S = np.zeros((steps + 1, n, steps * m)) if with_jac else None
        for k in range(steps):
            X[k + 1] = model.f(X[k], U[k])
            if with_jac:
                A, B = model.jacobian(X[k], U[k])
                S[k + 1] = A @ S[k]
                S[k + 1][:, k * m:(k + 1) * m] += B
        self.U, self.X, self.S = U, X, S


class FixedTerminalProblem:
    """Plan ``steps`` inputs from ``x0`` so that ``x_steps[mask] == target[mask]``."""

    def __init__(self, model: DynamicsModel, cost, cs: ConstraintSet, x0, target, steps: int,
                 mask: Optional[np.ndarray] = None, options: ShootingOptions = ShootingOptions(),
                 first_input_pull: Optional[tuple] = None):
        self.model, self.cost, self.cs = model, cost, cs
        self.x0 = np.asarray(x0, dtype=float)
        self.target = np.asarray(target, dtype=float)
        self.steps = steps
        self.mask = np.ones(model.n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        self.opts = options
        self.u_lo = np.tile(cs.u_lower, steps)
        self.u_hi = np.tile(cs.u_upper, steps)
        self._x_lo_idx = np.flatnonzero(np.isfinite(cs.x_lower))
        self._x_hi_idx = np.flatnonzero(np.isfinite(cs.x_upper))
        self._solver = ActiveSetSolver()
        self._pull = None
        if first_input_pull is not None:
            target, weights = (np.asarray(v, dtype=float) for v in first_input_pull)
            idx = np.flatnonzero(weights > 0)
            if idx.size:
                self._pull = (idx, target[idx], np.sqrt(weights[idx]))
        probe = cost.residuals(self.x0, np.zeros(model.m))[0]
        self.has_objective = probe.size > 0 or self._pull is not None

    # -- evaluation -----------------------------------------------------------

    def objective_residuals(self, plan: _Plan, with_jac: bool = True):
        m = self.model.m
        rs, Js = [], []
        for k in range(self.steps):
            r, Jx, Ju = self.cost.residuals(plan.X[k], plan.U[k])
            if not r.size:
                continue
            rs.append(r)
            if with_jac:
                J = Jx @ plan.S[k]
                J[:, k * m:(k + 1) * m] += Ju
                Js.append(J)
        if self._pull is not None:
            idx, target, w = self._pull
            rs.append(w * (plan.U[0, idx] - target))
            if with_jac:
                J = np.zeros((idx.size, self.steps * m))
                J[np.arange(idx.size), idx] = w
                Js.append(J)
        if not rs:
            return np.zeros(0), np.zeros((0, self.steps * m))
        return np.concatenate(rs), (np.vstack(Js) if with_jac else None)

    def path_constraints(self, plan: _Plan, with_jac: bool = True):
        """Values ``c`` (feasible when ``c >= 0``) and Jacobian rows."""
        vals, rows = [], []
        nz = self.steps * self.model.m
        for k in range(1, self.steps):
            x = plan.X[k]
            for ell in self.cs.ellipses:
                vals.append(ell.value(x) - 1.0)
                if with_jac:
                    rows.append(ell.gradient(x, self.model.n) @ plan.S[k])
            for i in self._x_hi_idx:
                vals.append(self.cs.x_upper[i] - x[i])
                if with_jac:
                    rows.append(-plan.S[k][i])
            for i in self._x_lo_idx:
                vals.append(x[i] - self.cs.x_lower[i])
                if with_jac:
                    rows.append(plan.S[k][i])
        # monotone coordinates keep the sign of the plan's initial state; the
        # final transition onto the terminal state is exempt
        for i in self.cs.monotone_to_zero:
            sign = monotone_sign(self.x0[i])
            for k in range(self.steps - 1):
                prev, nxt = plan.X[k][i], plan.X[k + 1][i]
                if sign == 0.0:
                    vals += [nxt, -nxt]
                    if with_jac:
                        rows += [plan.S[k + 1][i], -plan.S[k + 1][i]]
                else:
                    vals += [sign * nxt, sign * (prev - nxt)]
                    if with_jac:
                        rows += [sign * plan.S[k + 1][i], sign * (plan.S[k][i] - plan.S[k + 1][i])]
        c = np.array(vals)
        G = np.array(rows).reshape(len(vals), nz) if with_jac else None
        return c, G

    def terminal_residual(self, plan: _Plan) -> np.ndarray:
        return (plan.X[-1] - self.target)[self.mask]

    def violation(self, plan: _Plan) -> tuple:
        term = np.abs(self.terminal_residual(plan)).max(initial=0.0)
        c, _ = self.path_constraints(plan, with_jac=False)
        path = max(0.0, -c.min(initial=0.0))
        U = plan.U.reshape(-1)
        box = max(0.0, float(np.max(U - self.u_hi, initial=0.0)), float(np.max(self.u_lo - U, initial=0.0)))
        return term, max(path, box)

    def is_feasible(self, plan: _Plan, tol: float) -> bool:
        term, path = self.violation(plan)
        return term <= tol and path <= tol

    def objective(self, plan: _Plan) -> float:
        r, _ = self.objective_residuals(plan, with_jac=False)
        return float(r @ r)

    def _plan(self, U, with_jac=True) -> _Plan:
        U = np.asarray(U, dtype=float).reshape(self.steps, self.model.m)
        return _Plan(self.model, self.x0, U, with_jac)

    def _clip(self, z):
        return np.minimum(np.maximum(z, self.u_lo), self.u_hi)

    # -- penalty phase --------------------------------------------------------

    def _penalty_residuals(self, plan: _Plan, rho: float):
        r_o, J_o = self.objective_residuals(plan)
        S_N = plan.S[-1][self.mask]
        r_t = math.sqrt(rho) * self.terminal_residual(plan)
        c, G = self.path_constraints(plan)
        act = c < 0.0
        r_c = math.sqrt(rho) * c[act]
        J_c = math.sqrt(rho) * G[act]
        r = np.concatenate([r_o, r_t, r_c])
        J = np.vstack([J_o, math.sqrt(rho) * S_N, J_c])
        return r, J

    def penalty_descent(self, z0) -> np.ndarray:
        z = self._clip(np.asarray(z0, dtype=float).reshape(-1))
        rho = self.opts.penalty_start
        for _ in range(self.opts.penalty_rounds):
            lam = 1e-3
            plan = self._plan(z)
            r, J = self._penalty_residuals(plan, rho)
            phi = float(r @ r)
            for _ in range(self.opts.lm_iterations):
                g = J.T @ r
                JtJ = J.T @ J
                improved = False
                for _ in range(12):
                    A = JtJ + lam * (np.diag(np.diag(JtJ)) + np.eye(len(z)))
                    try:
                        d = -np.linalg.solve(A, g)
                    except np.linalg.LinAlgError:
                        lam *= 10.0
                        continue
                    z_new = self._clip(z + d)
                    plan_new = self._plan(z_new)
                    r_new, J_new = self._penalty_residuals(plan_new, rho)
                    phi_new = float(r_new @ r_new)
                    if phi_new < phi:
                        z, plan, r, J, phi = z_new, plan_new, r_new, J_new, phi_new
                        lam = max(lam / 3.0, 1e-9)
                        improved = True
                        break
                    lam *= 10.0
                if not improved or np.abs(g).max() < 1e-12:
                    break
            term, path = self.violation(plan)
            if max(term, path) < self.opts.accept_violation:
                break
            rho *= self.opts.penalty_growth
        return z

    # -- SQP polish -----------------------------------------------------------

    def _merit(self, plan: _Plan, nu: float) -> float:
        term = np.abs(self.terminal_residual(plan)).sum()
        c, _ = self.path_constraints(plan, with_jac=False)
        return self.objective(plan) + nu * (term + np.maximum(-c, 0.0).sum())

    def sqp(self, z0):
        """Return ``(z, iterations, success)``."""
        opts = self.opts
        z = self._clip(np.asarray(z0, dtype=float).reshape(-1))
        nz = z.size
        radius = opts.trust_radius
        nu = 10.0
        it = 0
        passes = 0
        plan = self._plan(z)
        # accepted steps are capped by sqp_iterations, all passes by a multiple of it
        while it < opts.sqp_iterations and passes < 4 * opts.sqp_iterations:
            passes += 1
            r_o, J_o = self.objective_residuals(plan)
            H = J_o.T @ J_o + opts.regularization * np.eye(nz)
            H = 0.5 * (H + H.T)
            f = J_o.T @ r_o
            A_eq = plan.S[-1][self.mask]
            b_eq = -self.terminal_residual(plan)
            c, G = self.path_constraints(plan)
            hi = np.minimum(self.u_hi - z, radius)
            lo = np.maximum(self.u_lo - z, -radius)
            A_in = np.vstack([-G, np.eye(nz), -np.eye(nz)])
            b_in = np.concatenate([c, hi, -lo])
            sol = self._solver.solve(QuadraticProgram(H, f, A_eq, b_eq, A_in, b_in))
            if sol.status is not QpStatus.OPTIMAL:
                # a smaller region cannot restore feasibility of the linearization
                if radius >= 10.0 * opts.trust_radius:
                    return z, it, False
                radius = 10.0 * opts.trust_radius
                continue
            d = sol.z
            step = float(np.abs(d).max(initial=0.0))
            if sol.in_multipliers is not None and sol.in_multipliers.size:
                nu = max(nu, 2.0 * float(np.abs(sol.in_multipliers).max()))
            if sol.eq_multipliers is not None and sol.eq_multipliers.size:
                nu = max(nu, 2.0 * float(np.abs(sol.eq_multipliers).max()))
            if step <= opts.step_tol:
                break
            z_new = self._clip(z + d)
            plan_new = self._plan(z_new)
            if self._merit(plan_new, nu) <= self._merit(plan, nu) + 1e-14 or step < 1e-6:
                z, plan = z_new, plan_new
                it += 1
                radius = min(max(radius, 2.0 * step), 10.0 * opts.trust_radius)
                if not self.has_objective and self.is_feasible(plan, opts.terminal_tol) \
                        and self.violation(plan)[1] <= opts.path_tol:
                    break
            else:
                radius = 0.5 * step
                if radius < 1e-9:
                    break
        term, path = self.violation(plan)
        return z, it, term <= opts.terminal_tol * 10 and path <= opts.path_tol * 10

    # -- driver ---------------------------------------------------------------

    def solve(self, starts: Iterable) -> Optional[ShootingResult]:
        """Try each starting guess in order; return the first success."""
        tried = []
        for idx, U0 in enumerate(starts):
            if U0 is None:
                continue
            z0 = np.asarray(U0, dtype=float).reshape(-1)
            if z0.size != self.steps * self.model.m or not np.all(np.isfinite(z0)):
                continue
            if any(np.array_equal(z0, t) for t in tried):
                continue
            tried.append(z0)
            plan0 = self._plan(z0, with_jac=False)
            if not self.has_objective and self.is_feasible(plan0, self.opts.accept_tol):
                return ShootingResult(plan0.U, plan0.X, True, 0, max(self.violation(plan0)), idx)
            z, it, ok = self.sqp(z0)
            if not ok:
                z = self.penalty_descent(z0)
                z, it2, ok = self.sqp(z)
                it += it2 + 1
            if ok:
                plan = self._plan(z, with_jac=False)
                return ShootingResult(plan.U, plan.X, True, it, max(self.violation(plan)), idx)
        return None
