"""Independent reference computations for tests and the acceptance suite.

Nothing in the controller imports this module.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

from .core import (ConfigurationError, IterationRecord, Trajectory, check_feasible, iteration_cost,
                   simulate)
from .qp_solver import ActiveSetSolver, CondensedHorizon, QpStatus, QuadraticProgram
from .safe_set import state_key
from .shooting import FixedTerminalProblem


@dataclass(frozen=True)
class OracleSolution:
    states: np.ndarray
    inputs: np.ndarray
    cost: float
    horizon: int
    doubled_cost: Optional[float] = None

    @property
    def saturation_gap(self) -> float:
        return math.nan if self.doubled_cost is None else abs(self.doubled_cost - self.cost)


def _long_horizon(inst, x_start, T: int):
    model, cost, cs = inst.model(), inst.cost(), inst.constraints()
    hz = CondensedHorizon(model, cost, T, cs)
    sol = ActiveSetSolver(max_iter=50 * T).solve(hz.program(x_start, cost.x_F))
    if sol.status is not QpStatus.OPTIMAL:
        raise RuntimeError(f"long-horizon QP failed: {sol.status.value}")
    U = sol.z.reshape(T, model.m)
    X = simulate(model, x_start, U)
    J = iteration_cost(cost(X[k], U[k]) for k in range(T))
    return X, U, J


def clqr_oracle(inst, T: int = 100, x_start=None, check_saturation: bool = True) -> OracleSolution:
    """Infinite-horizon constrained LQR optimum approximated by a ``T``-step
    QP with the terminal state pinned to the origin; re-solved at ``2T`` to
    confirm the horizon is long enough."""
    if T < 100:
        raise ConfigurationError("oracle horizon must be at least 100")
    x0 = np.asarray(inst.x_start if x_start is None else x_start, dtype=float)
    X, U, J = _long_horizon(inst, x0, T)
    doubled = _long_horizon(inst, x0, 2 * T)[2] if check_saturation else None
    return OracleSolution(X, U, J, T, doubled)


def _states_of(t) -> np.ndarray:
    if isinstance(t, IterationRecord):
        t = t.trajectory
    if isinstance(t, Trajectory):
        return np.asarray(t.states)
    return np.asarray(t, dtype=float)


def deviation_profile(a, b, x_F=None) -> List[float]:
    """Pointwise 2-norm distances; the shorter sequence is padded with ``x_F``
    (default: its own last state)."""
    A, B = _states_of(a), _states_of(b)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ConfigurationError("trajectories have different state dimensions")
    T = max(len(A), len(B))

    def pad(X):
        if len(X) == T:
            return X
        fill = X[-1] if x_F is None else np.asarray(x_F, dtype=float)
        return np.vstack([X, np.repeat(fill[None], T - len(X), 0)])

    return [float(d) for d in np.linalg.norm(pad(A) - pad(B), axis=1)]


def brute_force_q(records: Iterable[IterationRecord], x) -> float:
    """Minimum realized cost-to-go through ``x`` by a linear scan of every stored point."""
    key = state_key(x)
    best = math.inf
    for rec in records:
        traj = rec.trajectory
        costs = traj.stage_costs
        acc = 0.0
        tails = [0.0] * (len(costs) + 1)
        for t in range(len(costs) - 1, -1, -1):
            acc = float(costs[t]) + acc
            tails[t] = acc
        for t, s in enumerate(traj.states):
            if state_key(s) == key and tails[t] < best:
                best = tails[t]
    return best


@dataclass(frozen=True)
class EnumeratedQp:
    feasible: bool
    z: Optional[np.ndarray] = None
    value: float = math.inf
    active_set: tuple = ()


def enumerate_qp(qp: QuadraticProgram, tol: float = 1e-9, max_cond: float = 1e12) -> EnumeratedQp:
    """Exhaustive active-set search: solve the KKT system of every subset of
    inequality rows and keep the best primal- and dual-feasible point.

    Subsets whose KKT matrix is singular or badly conditioned are skipped.
    Exponential in the number of inequalities; intended for small problems.
    """
    n = qp.n
    best = EnumeratedQp(False)
    rhs_eq = qp.b_eq
    for r in range(min(qp.n_in, n) + 1):
        for S in itertools.combinations(range(qp.n_in), r):
            rows = list(S)
            A = np.vstack([qp.A_eq, qp.A_in[rows]])
            b = np.concatenate([rhs_eq, qp.b_in[rows]])
            k = A.shape[0]
            K = np.block([[qp.H, A.T], [A, np.zeros((k, k))]])
            rhs = np.concatenate([-qp.f, b])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.abs(K @ sol - rhs).max() > tol or np.linalg.cond(K) > max_cond:
                continue
            z = sol[:n]
            mu = sol[n + qp.n_eq:]
            if qp.n_in and np.any(qp.A_in @ z > qp.b_in + tol):
                continue
            if np.any(mu < -tol):
                continue
            value = qp.objective(z)
            if not best.feasible or value < best.value:
                best = EnumeratedQp(True, z, value, tuple(rows))
    return best


def fixed_endpoint_deviation(inst, record: IterationRecord, T: int) -> float:
    """Largest state or input difference between the stored trajectory and the
    optimal ``T``-step plan between its own states ``x_t`` and ``x_{t+T}``,
    over all ``t``. The last endpoint is the raw terminal state, since the
    stored canonical target is not reached by the stored inputs exactly."""
    model, cost, cs = inst.model(), inst.cost(), inst.constraints()
    hz = CondensedHorizon(model, cost, T, cs)
    solver = ActiveSetSolver()
    X = np.array(record.trajectory.states)
    if record.raw_terminal is not None:
        X[-1] = record.raw_terminal
    U = record.trajectory.inputs
    worst = 0.0
    for t in range(len(U) - T + 1):
        sol = solver.solve(hz.program(X[t], X[t + T]))
        if sol.status is not QpStatus.OPTIMAL:
            return math.inf
        Z = sol.z.reshape(T, -1)
        plan = simulate(model, X[t], Z)
        worst = max(worst, float(np.abs(Z - U[t:t + T]).max()), float(np.abs(plan - X[t:t + T + 1]).max()))
    return worst


@dataclass(frozen=True)
class LocalCheck:
    reference_cost: float
    perturbed_min_cost: float
    feasible_perturbations: int
    shorter_plan_found: bool


def _plan_cost(prob, X, U) -> float:
    """Stage sum of a finite plan plus an infinite penalty if it misses the target."""
    cost = prob.cost
    if not cost.at_target(X[-1]):
        return math.inf
    return iteration_cost(cost(X[k], U[k]) for k in range(len(U)))


def local_optimality_check(prob, record: IterationRecord, delta: float = 1e-3) -> LocalCheck:
    """Perturb each input coordinate by ``+-delta`` (clipped to the input box),
    keep constraint-feasible perturbations and compare plan costs; also try to
    fit the same task into one step fewer starting from the converged inputs."""
    cs = prob.constraints
    U0 = np.array(record.trajectory.inputs)
    x0 = np.asarray(prob.x_start)
    ref = _plan_cost(prob, simulate(prob.model, x0, U0), U0)
    best, count = math.inf, 0
    for k, i in itertools.product(range(U0.shape[0]), range(U0.shape[1])):
        for sign in (1.0, -1.0):
            U = U0.copy()
            U[k, i] = min(max(U[k, i] + sign * delta, cs.u_lower[i]), cs.u_upper[i])
            X = simulate(prob.model, x0, U)
            if not all(check_feasible(cs, X[j], U[j - 1] if j else None) for j in range(len(X))):
                continue
            count += 1
            best = min(best, _plan_cost(prob, X, U))
    shorter = False
    T = U0.shape[0]
    if T > 1:
        fp = FixedTerminalProblem(prob.model, prob.cost, cs, x0, prob.cost.x_F, T - 1,
                                  getattr(prob.cost, "mask", None))
        shorter = fp.solve([U0[:T - 1], U0[1:]]) is not None
    return LocalCheck(ref, best, count, shorter)
