"""Learning MPC: candidate enumeration, receding-horizon loop and iterations.

Each time step solves one fixed-terminal subproblem per safe-set candidate
and applies the first input of the cheapest plan. The closed loop of an
iteration ends when the optimal cost drops to ``epsilon``; finished
iterations are appended to the safe set and the task is replayed until two
consecutive trajectories agree to ``gamma``.
"""
from __future__ import annotations

import dataclasses
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import (FEAS_TOL, ConfigurationError, ConstraintSet, DynamicsModel, IterationRecord,
                   QuadraticCost, check_feasible, check_transition, iteration_cost, make_record, simulate, step)
from .qp_solver import ActiveSetSolver, CondensedHorizon, QpStatus, QuadraticProgram
from .safe_set import Candidate, SafePoint, SampledSafeSet, state_key
from .shooting import FixedTerminalProblem, ShootingOptions

MODES = ("enumeration", "convex-relaxation")
TERMINAL_TOL = 1e-8
_TIE_REL = 1e-12
BOUND_MARGIN = 1e-9


class NoFeasibleCandidateError(RuntimeError):
    """Every candidate subproblem failed; carries diagnostics in ``details``."""

    def __init__(self, message: str, details: dict):
        super().__init__(message)
        self.details = details


@dataclass(frozen=True)
class PlanPreference:
    """Tie-break among equal-cost nonlinear plans.

    After the winning candidate is found, its plan is re-solved with the first
    input pulled toward ``target`` in a weighted least-squares sense. For a
    minimum-time cost every plan to the same candidate costs the same, so this
    only selects which of them is applied; it never changes the step cost.
    """

    target: tuple
    weights: tuple


@dataclass(frozen=True, eq=False)
class LmpcProblem:
    model: DynamicsModel
    cost: object
    constraints: ConstraintSet
    horizon: int
    x_start: np.ndarray
    epsilon: float = 1e-8
    gamma: float = 1e-10
    mode: str = "enumeration"
    max_iterations: int = 50
    max_steps: int = 1000
    restriction: bool = True
    bound_pruning: bool = True
    threads: Optional[int] = None
    plant: Optional[Callable] = None
    shooting: ShootingOptions = ShootingOptions()
    preference: Optional["PlanPreference"] = None
    name: str = "lmpc"

    def __post_init__(self):
        x_start = np.array(self.x_start, dtype=float).reshape(-1)
        x_start.setflags(write=False)
        object.__setattr__(self, "x_start", x_start)
        if self.horizon < 2:
            raise ConfigurationError("horizon must be at least 2")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        n, m = self.model.n, self.model.m
        if x_start.shape[0] != n or self.constraints.n != n or self.constraints.m != m:
            raise ConfigurationError("problem dimensions are inconsistent")
        if self.epsilon < 0 or not self.gamma > 0:
            raise ConfigurationError("epsilon must be >= 0 and gamma > 0")
        x_F = np.asarray(self.cost.x_F)
        rest = step(self.model, x_F, np.zeros(m))
        if np.abs(rest - x_F).max() > 1e-12:
            raise ConfigurationError("target is not an equilibrium under zero input")
        if not check_feasible(self.constraints, x_start):
            raise ConfigurationError("start state violates the constraints")
        if self.mode == "convex-relaxation" and not self.is_linear_quadratic:
            raise ConfigurationError("convex relaxation needs linear dynamics and a quadratic cost")
        object.__setattr__(self, "_ctx", _Context(self))

    @property
    def x_F(self) -> np.ndarray:
        return self.cost.x_F

    @property
    def is_linear_quadratic(self) -> bool:
        return self.model.is_linear and isinstance(self.cost, QuadraticCost)

    def replace(self, **changes) -> "LmpcProblem":
        return dataclasses.replace(self, **changes)

    def worker_count(self) -> int:
        threads = self.threads
        if threads is None:
            threads = int(os.environ.get("LMPC_THREADS", "1") or 1)
        if threads <= 0:
            threads = os.cpu_count() or 1
        return threads


class _Context:
    """Per-problem caches: condensed prediction matrices and per-thread solvers."""

    def __init__(self, prob: LmpcProblem):
        self.horizon = (CondensedHorizon(prob.model, prob.cost, prob.horizon, prob.constraints)
                        if prob.is_linear_quadratic else None)
        self._local = threading.local()

    def solver(self) -> ActiveSetSolver:
        s = getattr(self._local, "solver", None)
        if s is None:
            s = self._local.solver = ActiveSetSolver()
        return s


@dataclass
class SubproblemSolution:
    candidate: Optional[Candidate]
    status: str
    inputs: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None
    stage_cost: float = math.inf
    total_cost: float = math.inf
    iterations: int = 0
    active_set: tuple = ()
    weights: Optional[np.ndarray] = None
    weight_points: Optional[list] = None

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"

    @classmethod
    def failed(cls, candidate, status: str) -> "SubproblemSolution":
        return cls(candidate, status)


@dataclass
class StepResult:
    input: np.ndarray
    cost: float
    candidate: Optional[Candidate]
    solution: SubproblemSolution
    n_solved: int
    rs_size: int
    n_candidates: int = 0
    time: int = 0

    @property
    def candidate_index(self) -> Optional[tuple]:
        return None if self.candidate is None else self.candidate.point.index


@dataclass
class CampaignResult:
    records: List[IterationRecord]
    converged: bool
    safe_set: SampledSafeSet
    deviations: List[float] = field(default_factory=list)

    @property
    def costs(self) -> List[float]:
        return [r.cost for r in self.records]

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]


# ---------------------------------------------------------------- helpers


def _as_candidate(ss: Optional[SampledSafeSet], cand) -> Candidate:
    if isinstance(cand, Candidate):
        return cand
    if isinstance(cand, SafePoint):
        q = ss.q_value(cand.state) if ss is not None else cand.cost_to_go
        return Candidate(cand.state, q, cand)
    if ss is None:
        raise TypeError("a raw state candidate needs the safe set to look up its Q-value")
    point = ss.argmin_point(cand)
    if point is None:
        raise KeyError("state is not in the safe set")
    return Candidate(point.state, point.cost_to_go, point)


def _stage_sum(cost, X, U) -> float:
    return iteration_cost(cost(X[k], U[k]) for k in range(len(U)))


def _plan_ok(prob: LmpcProblem, X, U, target, mask) -> bool:
    if np.abs((X[-1] - target)[mask]).max(initial=0.0) > TERMINAL_TOL:
        return False
    cs = prob.constraints
    if np.any(U < cs.u_lower - FEAS_TOL) or np.any(U > cs.u_upper + FEAS_TOL):
        return False
    if not all(check_feasible(cs, X[k]) for k in range(1, len(X))):
        return False
    # the last transition lands on a stored state and is never applied
    return all(check_transition(cs, X[k], X[k + 1]) for k in range(len(X) - 2))


def _terminal_mask(prob: LmpcProblem, state) -> np.ndarray:
    cost = prob.cost
    if getattr(cost, "indicator", False) and cost.at_target(state):
        return np.asarray(cost.mask)
    return np.ones(prob.model.n, dtype=bool)


def _at_rest(prob: LmpcProblem, x) -> bool:
    return bool(prob.cost.at_target(x))


def _better(a: SubproblemSolution, b: Optional[SubproblemSolution]) -> bool:
    if b is None:
        return True
    tie = _TIE_REL * (1.0 + abs(b.total_cost))
    if a.total_cost < b.total_cost - tie:
        return True
    if a.total_cost > b.total_cost + tie:
        return False
    return a.candidate.order < b.candidate.order


# ---------------------------------------------------------------- subproblems


def solve_candidate_linear(prob: LmpcProblem, x_t, candidate, warm_active=None,
                           ss: Optional[SampledSafeSet] = None) -> SubproblemSolution:
    """Fixed-terminal condensed QP for one candidate (linear model, quadratic cost)."""
    if not prob.is_linear_quadratic:
        raise ConfigurationError("linear candidate solve needs linear dynamics and quadratic cost")
    cand = _as_candidate(ss, candidate)
    x_t = np.asarray(x_t, dtype=float)
    ctx = prob._ctx
    qp = ctx.horizon.program(x_t, cand.state)
    sol = ctx.solver().solve(qp, warm_active)
    if sol.status is not QpStatus.OPTIMAL:
        return SubproblemSolution.failed(cand, sol.status.value)
    U = sol.z.reshape(prob.horizon, prob.model.m)
    X = simulate(prob.model, x_t, U)
    mask = np.ones(prob.model.n, dtype=bool)
    if not _plan_ok(prob, X, U, cand.state, mask):
        return SubproblemSolution.failed(cand, "tolerance")
    stage = _stage_sum(prob.cost, X, U)
    return SubproblemSolution(cand, "feasible", U, X, stage, stage + cand.q, sol.iterations,
                              sol.active_set)


def _segment_guess(ss: Optional[SampledSafeSet], point: SafePoint, steps: int):
    if ss is None:
        return None
    seg = ss.segment_to(point, steps)
    return None if seg is None else np.array(seg[1])


def solve_candidate_nonlinear(prob: LmpcProblem, x_t, candidate, warm=None,
                              ss: Optional[SampledSafeSet] = None) -> SubproblemSolution:
    """Local fixed-terminal solve by multi-start shooting.

    ``warm`` is an input sequence (or a list of them) tried before the stored
    segment ending at the candidate, the model's own guess and zero inputs.
    """
    cand = _as_candidate(ss, candidate)
    x_t = np.asarray(x_t, dtype=float)
    N, m = prob.horizon, prob.model.m
    cost, model = prob.cost, prob.model
    warm_list = []
    if warm is not None:
        if isinstance(warm, np.ndarray) and warm.ndim == 2:
            warm_list = [warm]
        else:
            warm_list = [w for w in warm if w is not None]
    seg = _segment_guess(ss, cand.point, N)
    target_mode = bool(getattr(cost, "indicator", False) and cost.at_target(cand.state))
    mask = _terminal_mask(prob, cand.state)
    lengths = range(1, N + 1) if target_mode else (N,)
    total_iters = 0
    for k in lengths:
        if model.reachable is not None and not model.reachable(x_t, cand.state, k):
            continue
        starts = [np.asarray(w)[:k] for w in warm_list]
        if seg is not None:
            starts.append(seg[N - k:] if target_mode else seg)
        if model.guess is not None:
            starts.append(model.guess(x_t, cand.state, k))
        starts.append(np.zeros((k, m)))
        fp = FixedTerminalProblem(model, cost, prob.constraints, x_t, cand.state, k, mask, prob.shooting)
        res = fp.solve(starts)
        if res is None:
            continue
        total_iters += res.iterations
        U = np.zeros((N, m))
        U[:k] = res.inputs
        X = simulate(model, x_t, U)
        if not _plan_ok(prob, X, U, cand.state, mask):
            continue
        stage = _stage_sum(cost, X, U)
        return SubproblemSolution(cand, "feasible", U, X, stage, stage + cand.q, res.iterations)
    return SubproblemSolution.failed(cand, "infeasible")


def stage_lower_bound(prob: LmpcProblem, x_t, cand: Candidate) -> float:
    """Lower bound on a candidate's total cost before solving it."""
    cost = prob.cost
    at = bool(getattr(cost, "indicator", False) and cost.at_target(cand.state))
    bound = cost.lower_bound(x_t, prob.horizon, at)
    if prob.is_linear_quadratic:
        relaxed = prob._ctx.horizon.unconstrained_value(x_t, cand.state)
        # keep a margin for round-off in the closed-form solve
        bound = max(bound, relaxed - BOUND_MARGIN * (1.0 + abs(relaxed)))
    return cand.q + bound


# ---------------------------------------------------------------- one step


def _rest_result(prob: LmpcProblem, ss: SampledSafeSet, x_t, t: int) -> StepResult:
    N, m = prob.horizon, prob.model.m
    U = np.zeros((N, m))
    X = simulate(prob.model, x_t, U)
    point = ss.argmin_point(prob.cost.canonical_target(x_t))
    cand = Candidate(point.state, point.cost_to_go, point) if point is not None else None
    sol = SubproblemSolution(cand, "feasible", U, X, 0.0, 0.0)
    return StepResult(U[0].copy(), 0.0, cand, sol, 0, 0, 0, t)


def _shifted_plan(prob: LmpcProblem, ss: SampledSafeSet, prev: StepResult):
    """Previous plan shifted by one step: drop the first input, append the stored successor input."""
    if prev is None or prev.candidate is None or prev.solution.inputs is None:
        return None, None
    point = prev.candidate.point
    nxt = ss.successor(point)
    if nxt is None:
        succ_point, u_next = point, np.zeros(prob.model.m)
    else:
        succ_point, u_next = nxt
    U = np.vstack([prev.solution.inputs[1:], np.asarray(u_next).reshape(1, -1)])
    return state_key(succ_point.state), U


def solve_lmpc_step(prob: LmpcProblem, ss: SampledSafeSet, x_t, prev: Optional[StepResult] = None,
                    warm: Optional[SubproblemSolution] = None, t: int = 0) -> StepResult:
    """Solve one LMPC step by enumerating terminal candidates."""
    if prob.mode == "convex-relaxation":
        return solve_relaxed_step(prob, ss, x_t, prev, t=t)
    if ss.is_empty():
        raise ValueError("the safe set is empty; seed it with a converged trajectory first")
    x_t = np.asarray(x_t, dtype=float)
    if _at_rest(prob, x_t):
        return _rest_result(prob, ss, x_t, t)
    cost = prob.cost
    if prev is not None and prob.restriction:
        pool = list(ss.restriction_set(prev.cost).candidates)
    else:
        pool = list(ss.candidates())
    rs_size = len(pool)
    if getattr(cost, "indicator", False):
        # all target points are equivalent terminal sets; keep the first
        seen_target, kept = False, []
        for c in pool:
            if cost.at_target(c.state):
                if seen_target:
                    continue
                seen_target = True
            kept.append(c)
        pool = kept
    shift_key, shift_U = _shifted_plan(prob, ss, prev)
    guesses = {}
    if shift_key is not None:
        guesses[shift_key] = [shift_U]
    if warm is not None and warm.candidate is not None and warm.inputs is not None:
        guesses.setdefault(state_key(warm.candidate.state), []).append(warm.inputs)
    # evaluate the shifted fallback first so that bound pruning starts tight
    first = [c for c in pool if state_key(c.state) == shift_key]
    order = first + [c for c in pool if state_key(c.state) != shift_key]
    linear = prob.is_linear_quadratic
    model = prob.model

    def solve_one(c: Candidate, warm_active=None) -> SubproblemSolution:
        if linear:
            return solve_candidate_linear(prob, x_t, c, warm_active, ss)
        if model.reachable is not None and not getattr(cost, "indicator", False) \
                and not model.reachable(x_t, c.state, prob.horizon):
            return SubproblemSolution.failed(c, "unreachable")
        return solve_candidate_nonlinear(prob, x_t, c, guesses.get(state_key(c.state)), ss)

    best: Optional[SubproblemSolution] = None
    n_solved = 0
    workers = prob.worker_count()
    if prob.bound_pruning or workers <= 1:
        warm_active = None
        for c in order:
            if best is not None and prob.bound_pruning:
                tie = _TIE_REL * (1.0 + abs(best.total_cost))
                if stage_lower_bound(prob, x_t, c) > best.total_cost + tie:
                    continue
            sol = solve_one(c, warm_active)
            n_solved += 1
            if sol.feasible:
                warm_active = sol.active_set or None
                if _better(sol, best):
                    best = sol
    else:
        if linear:
            prob._ctx.horizon.program(x_t, x_t)  # fill the shared per-state cache once
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            sols = list(pool_exec.map(solve_one, order))
        n_solved = len(sols)
        for sol in sols:
            if sol.feasible and _better(sol, best):
                best = sol
    if best is None:
        raise NoFeasibleCandidateError(
            f"no feasible candidate at t={t}",
            {"t": t, "state": x_t.tolist(), "candidates": len(order), "solved": n_solved})
    if prob.preference is not None and not linear:
        best = _prefer_plan(prob, x_t, best)
    return StepResult(best.inputs[0].copy(), best.total_cost, best.candidate, best,
                      n_solved, rs_size, len(order), t)


def _prefer_plan(prob: LmpcProblem, x_t, best: SubproblemSolution) -> SubproblemSolution:
    """Re-solve the winning candidate with the first input pulled toward the
    preferred input; keep the result only if it is feasible and no more costly."""
    cost = prob.cost
    if getattr(cost, "indicator", False) and cost.at_target(best.candidate.state):
        return best
    pref = prob.preference
    fp = FixedTerminalProblem(prob.model, cost, prob.constraints, x_t, best.candidate.state, prob.horizon,
                              None, prob.shooting, first_input_pull=(pref.target, pref.weights))
    z, it, ok = fp.sqp(best.inputs)
    if not ok:
        return best
    U = z.reshape(prob.horizon, prob.model.m)
    X = simulate(prob.model, x_t, U)
    if not _plan_ok(prob, X, U, best.candidate.state, np.ones(prob.model.n, dtype=bool)):
        return best
    stage = _stage_sum(cost, X, U)
    if stage > best.stage_cost:
        return best
    return SubproblemSolution(best.candidate, "feasible", U, X, stage, stage + best.candidate.q,
                              best.iterations + it)


# ---------------------------------------------------------------- relaxation


def _relaxed_start(prob: LmpcProblem, ss: SampledSafeSet, x_t, prev: Optional[StepResult],
                   cands: Sequence[Candidate], index: dict):
    """Feasible (U, weights) for the relaxed QP, or None."""
    m = prob.model.m
    if prev is not None and prev.solution.weights is not None and prev.solution.inputs is not None:
        old = prev.solution.weights
        lam = np.zeros(len(cands))
        u_next = np.zeros(m)
        for c, w in zip(prev.solution.weight_points, old):
            if w <= 0.0:
                continue
            nxt = ss.successor(c.point)
            if nxt is None:
                succ, u = c.point, np.zeros(m)
            else:
                succ, u = nxt
            lam[index[state_key(succ.state)]] += w
            u_next = u_next + w * np.asarray(u)
        U = np.vstack([prev.solution.inputs[1:], u_next])
        return U, lam
    base = solve_lmpc_step(prob.replace(mode="enumeration"), ss, x_t, None)
    lam = np.zeros(len(cands))
    lam[index[state_key(base.candidate.state)]] = 1.0
    return base.solution.inputs, lam


def _primal_feasible(qp: QuadraticProgram, z, tol: float = 1e-9) -> bool:
    if qp.n_eq and np.abs(qp.A_eq @ z - qp.b_eq).max() > tol:
        return False
    return not qp.n_in or (qp.b_in - qp.A_in @ z).min() >= -tol


def solve_relaxed_step(prob: LmpcProblem, ss: SampledSafeSet, x_t, prev: Optional[StepResult] = None,
                       t: int = 0) -> StepResult:
    """One step with the terminal state relaxed to the convex hull of the safe set.

    The terminal cost is the matching convex combination of Q-values.
    """
    if not prob.is_linear_quadratic:
        raise ConfigurationError("convex relaxation needs linear dynamics and a quadratic cost")
    x_t = np.asarray(x_t, dtype=float)
    if _at_rest(prob, x_t):
        return _rest_result(prob, ss, x_t, t)
    cands = list(ss.candidates())
    index = {state_key(c.state): i for i, c in enumerate(cands)}
    P = len(cands)
    N, m, n = prob.horizon, prob.model.m, prob.model.n
    ctx = prob._ctx
    hz = ctx.horizon
    f_u, b_u, const, free_N = hz._base(x_t)
    nu = N * m
    H = np.zeros((nu + P, nu + P))
    H[:nu, :nu] = hz.H
    f = np.concatenate([f_u, [c.q for c in cands]])
    pts = np.array([c.state for c in cands]).T
    A_eq = np.zeros((n + 1, nu + P))
    A_eq[:n, :nu] = hz.A_eq
    A_eq[:n, nu:] = -pts
    A_eq[n, nu:] = 1.0
    b_eq = np.concatenate([-free_N, [1.0]])
    A_in = np.zeros((hz.A_in.shape[0] + P, nu + P))
    A_in[:hz.A_in.shape[0], :nu] = hz.A_in
    A_in[hz.A_in.shape[0]:, nu:] = -np.eye(P)
    b_in = np.concatenate([b_u, np.zeros(P)])
    qp = QuadraticProgram(H, f, A_eq, b_eq, A_in, b_in, const)
    U0, lam0 = _relaxed_start(prob, ss, x_t, prev, cands, index)
    z0 = np.concatenate([np.asarray(U0).reshape(-1), lam0])
    if not _primal_feasible(qp, z0):
        # a shift through a trajectory's last step lands on the raw terminal
        # state, not on the stored canonical one; restart from enumeration
        U0, lam0 = _relaxed_start(prob, ss, x_t, None, cands, index)
        z0 = np.concatenate([np.asarray(U0).reshape(-1), lam0])
    sol = ActiveSetSolver().solve_primal(qp, z0)
    if sol.status is not QpStatus.OPTIMAL:
        raise NoFeasibleCandidateError(f"relaxed QP failed at t={t}: {sol.status.value}",
                                       {"t": t, "state": x_t.tolist()})
    U = sol.z[:nu].reshape(N, m)
    lam = sol.z[nu:]
    X = simulate(prob.model, x_t, U)
    stage = _stage_sum(prob.cost, X, U)
    q_term = float(lam @ np.array([c.q for c in cands]))
    sub = SubproblemSolution(None, "feasible", U, X, stage, stage + q_term, sol.iterations,
                             sol.active_set, lam, cands)
    return StepResult(U[0].copy(), stage + q_term, None, sub, 1, P, P, t)


# ---------------------------------------------------------------- iterations


def _next_iteration(ss: SampledSafeSet) -> int:
    recs = ss.records
    return (max(r.iteration for r in recs) + 1) if recs else 0


def run_iteration(prob: LmpcProblem, ss: SampledSafeSet, iteration: Optional[int] = None) -> IterationRecord:
    """Closed loop from the start state until the optimal cost is <= epsilon."""
    if ss.is_empty():
        raise ValueError("the safe set is empty; seed it with a converged trajectory first")
    j = _next_iteration(ss) if iteration is None else iteration
    plant = prob.plant or (lambda x, u: step(prob.model, x, u))
    x = np.array(prob.x_start)
    states, inputs, steps = [x], [], []
    prev = None
    for t in range(prob.max_steps + 1):
        res = solve_lmpc_step(prob, ss, x, prev, t=t)
        steps.append(res)
        if res.cost <= prob.epsilon:
            break
        if t == prob.max_steps:
            raise RuntimeError(f"iteration {j} did not terminate within {prob.max_steps} steps")
        u = res.input
        x = np.asarray(plant(x, u), dtype=float)
        states.append(x)
        inputs.append(u)
        prev = res
    terminal = prob.cost.canonical_target(states[-1])
    inputs_arr = np.array(inputs).reshape(len(inputs), prob.model.m)
    return make_record(np.array(states), inputs_arr, prob.cost, j, True, terminal,
                       steps_info=tuple(steps), lmpc_cost_at_start=steps[0].cost)


def trajectory_distance(a, b, pad_a=None, pad_b=None) -> float:
    """Max pointwise 2-norm distance; the shorter sequence is padded with its last state."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    T = max(len(a), len(b))
    if len(a) < T:
        a = np.vstack([a, np.repeat((a[-1] if pad_a is None else pad_a)[None], T - len(a), 0)])
    if len(b) < T:
        b = np.vstack([b, np.repeat((b[-1] if pad_b is None else pad_b)[None], T - len(b), 0)])
    return float(np.linalg.norm(a - b, axis=1).max(initial=0.0))


def run_until_convergence(prob: LmpcProblem, ss0: SampledSafeSet,
                          on_iteration: Optional[Callable[[IterationRecord], None]] = None) -> CampaignResult:
    """Replay the task until consecutive trajectories differ by less than gamma."""
    ss = ss0
    records = list(ss.records)
    if not records:
        raise ValueError("the initial safe set must contain a converged trajectory")
    deviations = []
    converged = False
    for _ in range(prob.max_iterations):
        rec = run_iteration(prob, ss)
        ss.add_trajectory(rec)
        dev = trajectory_distance(records[-1].trajectory.states, rec.trajectory.states)
        records.append(rec)
        deviations.append(dev)
        if on_iteration is not None:
            on_iteration(rec)
        if dev < prob.gamma:
            converged = True
            break
    return CampaignResult(records, converged, ss, deviations)
