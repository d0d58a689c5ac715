"""Worked examples: a constrained double integrator and a Dubins car with known or unknown saturation.

Each instance is an immutable configuration object that builds the model,
stage cost, constraints and :class:`~lmpc_lab.lmpc.LmpcProblem`, and knows
how to produce its deterministic iteration-0 trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import solve_discrete_are

from .core import (ConfigurationError, ConstraintSet, DynamicsModel, Ellipse, IterationRecord,
                   MinimumTimeCost, QuadraticCost, check_feasible, make_record, simulate)
from .lmpc import LmpcProblem, PlanPreference
from .safe_set import SampledSafeSet
from .shooting import FixedTerminalProblem, ShootingOptions

SIGMOID_EPS = 1e-9


# ---------------------------------------------------------------- double integrator


@dataclass(frozen=True)
class ClqrInstance:
    """Double integrator with box constraints and quadratic cost."""

    A: tuple = ((1.0, 1.0), (0.0, 1.0))
    B: tuple = ((0.0,), (1.0,))
    x_start: tuple = (-3.95, -0.05)
    x_bound: float = 4.0
    u_bound: float = 1.0
    horizon: int = 4
    epsilon: float = 1e-8
    gamma: float = 1e-10
    # open-loop prefix of the iteration-0 trajectory: accelerate, then brake
    open_loop: tuple = (1.0, 1.0, -1.0, -1.0)
    truncation: float = 1e-9

    def model(self) -> DynamicsModel:
        return DynamicsModel.linear(self.A, self.B, name="double-integrator")

    def cost(self) -> QuadraticCost:
        n, m = len(self.A), len(self.B[0])
        return QuadraticCost.identity(n, m)

    def constraints(self) -> ConstraintSet:
        n, m = len(self.A), len(self.B[0])
        xb = np.full(n, self.x_bound)
        ub = np.full(m, self.u_bound)
        return ConstraintSet(-xb, xb, -ub, ub)

    def problem(self, **overrides) -> LmpcProblem:
        kw = dict(epsilon=self.epsilon, gamma=self.gamma, name="clqr")
        kw.update(overrides)
        return LmpcProblem(self.model(), self.cost(), self.constraints(), self.horizon,
                           np.array(self.x_start), **kw)

    def lqr_gain(self) -> Tuple[np.ndarray, np.ndarray]:
        """Infinite-horizon LQR gain ``K`` (u = -K x) and Riccati solution ``P``."""
        A, B = np.array(self.A), np.array(self.B)
        cost = self.cost()
        P = solve_discrete_are(A, B, cost.Q, cost.R)
        K = np.linalg.solve(cost.R + B.T @ P @ B, B.T @ P @ A)
        return K, P

    def invariant_level(self) -> float:
        """Largest ``c`` with ``{x'Px <= c}`` inside the state box and ``|Kx| <= u_bound``."""
        K, P = self.lqr_gain()
        Pinv = np.linalg.inv(P)
        n = P.shape[0]
        rows = [(np.eye(n)[i], self.x_bound) for i in range(n)]
        rows += [(K[i], self.u_bound) for i in range(K.shape[0])]
        return min(b * b / float(g @ Pinv @ g) for g, b in rows)

    def seed(self) -> IterationRecord:
        return clqr_seed_iteration0(self)

    def initial_safe_set(self) -> SampledSafeSet:
        return SampledSafeSet().add_trajectory(self.seed())


def clqr_seed_iteration0(inst: ClqrInstance) -> IterationRecord:
    """Fixed open-loop prefix, then the LQR feedback once inside its invariant ellipsoid."""
    model, cost, cs = inst.model(), inst.cost(), inst.constraints()
    K, P = inst.lqr_gain()
    level = inst.invariant_level()
    x = np.array(inst.x_start, dtype=float)
    states, inputs = [x], []
    for u in inst.open_loop:
        u = np.atleast_1d(float(u))
        x = model.f(x, u)
        states.append(x)
        inputs.append(u)
    if float(x @ P @ x) > level:
        raise ConfigurationError("open-loop prefix does not reach the LQR invariant region")
    while np.abs(x).max() >= inst.truncation:
        u = -K @ x
        x = model.f(x, u)
        states.append(x)
        inputs.append(u)
        if len(inputs) > 10_000:
            raise ConfigurationError("LQR tail did not converge")
    for k, u in enumerate(inputs):
        if not check_feasible(cs, states[k], u):
            raise ConfigurationError(f"seed infeasible at step {k}")
    return make_record(np.array(states), np.array(inputs), cost, 0, True, cost.canonical_target(x))


# ---------------------------------------------------------------- Dubins car


def _sigmoid(a):
    return a / np.sqrt(1.0 + a * a)


def _sigmoid_slope(a):
    return 1.0 / (1.0 + a * a) ** 1.5


def _speed_interval_bound(v0: float, v1: float, steps: int, accel: float) -> Optional[float]:
    """Upper bound on the distance covered in ``steps`` steps between speeds
    ``v0`` and ``v1`` with per-step speed change at most ``accel``; None if the
    speed change itself is impossible."""
    tol = 1e-9
    if abs(v1 - v0) > steps * accel + tol:
        return None
    total = 0.0
    for i in range(steps):
        lo = max(v0 - i * accel, v1 - (steps - i) * accel)
        hi = min(v0 + i * accel, v1 + (steps - i) * accel)
        total += max(abs(lo), abs(hi))
    return total


def _heading_guess(x0, target, steps: int, m: int, accel_index: int, heading_index: int,
                   accel_map=lambda dv: dv):
    x0 = np.asarray(x0, dtype=float)
    target = np.asarray(target, dtype=float)
    U = np.zeros((steps, m))
    U[:, heading_index] = math.atan2(target[1] - x0[1], target[0] - x0[0])
    U[:, accel_index] = accel_map((target[2] - x0[2]) / steps)
    return U


@dataclass(frozen=True)
class DubinsInstance:
    """Minimum-time Dubins car with acceleration limit and elliptic obstacle.

    State ``(z, y, v)``; inputs ``(theta, a)``.
    """

    x_start: tuple = (0.0, 0.0, 0.0)
    x_target: tuple = (54.0, 0.0, 0.0)
    saturation: float = 1.0
    obstacle_center: tuple = (27.0, 0.0)
    obstacle_axes: tuple = (8.0, 6.0)
    horizon: int = 4
    epsilon: float = 1e-8
    gamma: float = 1e-10
    # pull of the applied acceleration toward full throttle among equal-cost plans (0 disables)
    throttle_preference: float = 100.0
    # iteration-0 sweep over the bang-coast-bang input family
    sweep_heading: tuple = tuple(round(0.05 * i, 2) for i in range(1, 13))
    sweep_accel: tuple = tuple(round(0.1 * i, 1) for i in range(1, 11))
    sweep_length: tuple = tuple(range(20, 81, 5))
    obstacle_margin: float = 1.05

    def __post_init__(self):
        if self.saturation <= 0 or min(self.obstacle_axes) <= 0:
            raise ConfigurationError("saturation and obstacle axes must be positive")
        if self.ellipse().value(np.asarray(self.x_target)) < 1.0:
            raise ConfigurationError("target lies inside the obstacle")

    def ellipse(self) -> Ellipse:
        return Ellipse(self.obstacle_center, self.obstacle_axes)

    def model(self) -> DynamicsModel:
        s = self.saturation

        def f(x, u):
            th, a = u[0], u[1]
            v = x[2]
            return np.array([x[0] + v * math.cos(th), x[1] + v * math.sin(th), v + a])

        def jac(x, u):
            th = u[0]
            v = x[2]
            c, sn = math.cos(th), math.sin(th)
            A = np.array([[1.0, 0.0, c], [0.0, 1.0, sn], [0.0, 0.0, 1.0]])
            B = np.array([[-v * sn, 0.0], [v * c, 0.0], [0.0, 1.0]])
            return A, B

        def reachable(x0, target, steps):
            bound = _speed_interval_bound(x0[2], target[2], steps, s)
            if bound is None:
                return False
            return math.hypot(target[0] - x0[0], target[1] - x0[1]) <= bound + 1e-9

        def guess(x0, target, steps):
            return _heading_guess(x0, target, steps, 2, 1, 0,
                                  lambda dv: float(np.clip(dv, -s, s)))

        return DynamicsModel(3, 2, f, jac, name="dubins", guess=guess, reachable=reachable)

    def cost(self) -> MinimumTimeCost:
        return MinimumTimeCost(np.array(self.x_target))

    def constraints(self) -> ConstraintSet:
        inf = np.full(3, np.inf)
        s = self.saturation
        return ConstraintSet(-inf, inf, np.array([-np.inf, -s]), np.array([np.inf, s]), (self.ellipse(),))

    def problem(self, **overrides) -> LmpcProblem:
        kw = dict(epsilon=self.epsilon, gamma=self.gamma, name="dubins")
        if self.throttle_preference > 0:
            kw["preference"] = PlanPreference((0.0, self.saturation), (0.0, self.throttle_preference))
        kw.update(overrides)
        return LmpcProblem(self.model(), self.cost(), self.constraints(), self.horizon,
                           np.array(self.x_start), **kw)

    def seed(self) -> IterationRecord:
        return dubins_seed_iteration0(self)

    def initial_safe_set(self) -> SampledSafeSet:
        return SampledSafeSet().add_trajectory(self.seed())


def family_inputs(length: int, heading: float, turn_steps: int, accel: float, accel_steps: int) -> np.ndarray:
    """Bang-coast-bang family: heading ``+heading`` for ``turn_steps`` steps then
    ``-heading``; acceleration ``+accel`` for ``accel_steps`` steps, coast, and
    ``-accel`` over the last ``accel_steps`` steps. Columns are (heading, accel)."""
    U = np.zeros((length, 2))
    U[:turn_steps, 0] = heading
    U[turn_steps:, 0] = -heading
    U[:accel_steps, 1] = accel
    U[length - accel_steps:, 1] = -accel
    return U


def _sweep(x_start, target, ellipse: Ellipse, lengths, headings, accels, speed_gain, margin):
    """Vectorized rollout of the input family; returns the best member.

    ``speed_gain(a)`` maps the acceleration command to the speed increment.
    Members whose states enter the obstacle inflated by ``margin`` are dropped.
    The winner minimizes the squared terminal mismatch; ties keep the first
    member in (length, heading, turn, accel, accel_steps) order.
    """
    best = None
    cz, cy = ellipse.center
    ae, be = ellipse.semi_axes
    target = np.asarray(target, dtype=float)
    for T in lengths:
        combos = [(h, ns, a, nb)
                  for h in headings
                  for ns in range(2, T // 2 + 1)
                  for a in accels
                  for nb in range(2, T // 3 + 1)]
        if not combos:
            continue
        C = np.array(combos)
        h, ns, a, nb = C[:, 0], C[:, 1].astype(int), C[:, 2], C[:, 3].astype(int)
        z = np.full(len(C), float(x_start[0]))
        y = np.full(len(C), float(x_start[1]))
        v = np.full(len(C), float(x_start[2]))
        ok = np.ones(len(C), dtype=bool)
        dv = speed_gain(a)
        for k in range(T):
            th = np.where(k < ns, h, -h)
            acc = np.where(k < nb, dv, np.where(k >= T - nb, -dv, 0.0))
            z, y, v = z + v * np.cos(th), y + v * np.sin(th), v + acc
            if k < T - 1:
                ok &= ((z - cz) / ae) ** 2 + ((y - cy) / be) ** 2 >= margin
        mism = (z - target[0]) ** 2 + (y - target[1]) ** 2 + (v - target[2]) ** 2
        mism[~ok] = np.inf
        i = int(np.argmin(mism))
        if np.isfinite(mism[i]) and (best is None or mism[i] < best[0]):
            best = (float(mism[i]), T, float(h[i]), int(ns[i]), float(a[i]), int(nb[i]))
    return best


def dubins_seed_iteration0(inst: DubinsInstance) -> IterationRecord:
    """Deterministic grid search over the input family, then a fixed-terminal polish."""
    model, cost, cs = inst.model(), inst.cost(), inst.constraints()
    best = _sweep(inst.x_start, inst.x_target, inst.ellipse(), inst.sweep_length, inst.sweep_heading,
                  inst.sweep_accel, lambda a: a, inst.obstacle_margin)
    if best is None:
        raise ConfigurationError("input-family sweep found no obstacle-free member; enlarge the grid")
    _, T, h, ns, a, nb = best
    U0 = family_inputs(T, h, ns, a, nb)
    fp = FixedTerminalProblem(model, cost, cs, np.array(inst.x_start), np.array(inst.x_target), T,
                              options=ShootingOptions(sqp_iterations=100))
    res = fp.solve([U0])
    if res is None:
        raise ConfigurationError("could not polish the best family member onto the target")
    X = simulate(model, inst.x_start, res.inputs)
    for k in range(1, T + 1):
        if not check_feasible(cs, X[k], res.inputs[k - 1]):
            raise ConfigurationError("polished seed violates the constraints")
    return make_record(X, res.inputs, cost, 0, True, cost.canonical_target(X[-1]),
                       extra={"family": {"length": T, "heading": h, "turn_steps": ns,
                                         "accel": a, "accel_steps": nb}})


# ---------------------------------------------------------------- adaptive Dubins


def adaptive_model_step(x, u) -> np.ndarray:
    """Augmented update with the post-update saturation estimate on the drive term."""
    z, y, v, s_hat, e = x
    a, th, d = u
    s_next = s_hat + d
    return np.array([z + v * math.cos(th), y + v * math.sin(th), v + s_next * (a / math.sqrt(1.0 + a * a)),
                     s_next, e - d])


def estimate_error(y_meas_t, y_pred_t, y_meas_prev, y_pred_prev, a_prev, e_prev) -> float:
    """Invert one step of the drive model for the saturation error.

    Returns the mismatch growth divided by the sigmoid of the previous
    acceleration, or ``e_prev`` when that sigmoid is (numerically) zero.
    """
    sig = a_prev / math.sqrt(1.0 + a_prev * a_prev)
    if abs(sig) <= SIGMOID_EPS:
        return float(e_prev)
    return float(((y_meas_t - y_pred_t) - (y_meas_prev - y_pred_prev)) / sig)


@dataclass(frozen=True)
class AdaptiveDubinsInstance:
    """Dubins car whose acceleration saturation is unknown to the controller.

    Augmented state ``(z, y, v, s_hat, e)``; inputs ``(a, theta, delta)``.
    The plant applies ``v + s * a / sqrt(1 + a^2)`` with the true ``s``.
    """

    x_start: tuple = (0.0, 0.0, 0.0)
    x_target: tuple = (54.0, 0.0, 0.0)
    true_saturation: float = 1.0
    initial_estimate: float = 0.25
    error_weight: float = 10.0
    obstacle_center: tuple = (27.0, 0.0)
    obstacle_axes: tuple = (8.0, 6.0)
    horizon: int = 4
    epsilon: float = 1e-8
    gamma: float = 1e-10
    accel_limit: float = 20.0
    estimate_bounds: tuple = (0.0, 2.0)
    throttle_preference: float = 100.0
    sweep_heading: tuple = tuple(round(0.05 * i, 2) for i in range(1, 13))
    sweep_accel: tuple = tuple(round(0.1 * i, 1) for i in range(1, 11))
    sweep_length: tuple = tuple(range(20, 81, 5))
    obstacle_margin: float = 1.05

    def ellipse(self) -> Ellipse:
        return Ellipse(self.obstacle_center, self.obstacle_axes)

    def model(self) -> DynamicsModel:
        lim = self.accel_limit
        x_target = self.x_target
        s_cap = self.estimate_bounds[1] * lim / math.sqrt(1.0 + lim * lim)

        def f(x, u):
            return adaptive_model_step(x, u)

        def jac(x, u):
            z, y, v, s_hat, e = x
            a, th, d = u
            s_next = s_hat + d
            sig, slope = _sigmoid(a), _sigmoid_slope(a)
            c, sn = math.cos(th), math.sin(th)
            A = np.eye(5)
            A[0, 2], A[1, 2], A[2, 3] = c, sn, sig
            B = np.zeros((5, 3))
            B[0, 1], B[1, 1] = -v * sn, v * c
            B[2, 0], B[2, 2] = s_next * slope, sig
            B[3, 2], B[4, 2] = 1.0, -1.0
            return A, B

        def reachable(x0, target, steps):
            # s_hat + e is invariant under the model; the target set leaves s_hat free
            in_target = abs(target[4]) <= 1e-6 and max(abs(target[i] - x_target[i]) for i in range(3)) <= 1e-6
            if not in_target and abs((x0[3] + x0[4]) - (target[3] + target[4])) > 1e-9:
                return False
            bound = _speed_interval_bound(x0[2], target[2], steps, s_cap)
            if bound is None:
                return False
            return math.hypot(target[0] - x0[0], target[1] - x0[1]) <= bound + 1e-9

        def guess(x0, target, steps):
            U = _heading_guess(x0, target, steps, 3, 0, 1)
            s = max(x0[3], 1e-3)
            U[:, 0] = np.clip(U[:, 0] / s, -0.9, 0.9)
            U[:, 0] = U[:, 0] / np.sqrt(1.0 - U[:, 0] ** 2)
            return U

        return DynamicsModel(5, 3, f, jac, name="adaptive-dubins", guess=guess, reachable=reachable)

    def cost(self) -> MinimumTimeCost:
        x_F = np.array(list(self.x_target) + [0.0, 0.0])
        mask = np.array([True, True, True, False, True])
        return MinimumTimeCost(x_F, mask=mask, error_index=4, error_weight=self.error_weight)

    def constraints(self) -> ConstraintSet:
        lo = np.array([-np.inf, -np.inf, -np.inf, self.estimate_bounds[0], -np.inf])
        hi = np.array([np.inf, np.inf, np.inf, self.estimate_bounds[1], np.inf])
        lim = self.accel_limit
        return ConstraintSet(lo, hi, np.array([-lim, -np.inf, -np.inf]), np.array([lim, np.inf, np.inf]),
                             (self.ellipse(),), monotone_to_zero=(4,))

    def plant_step(self, x, u) -> np.ndarray:
        """True vehicle step plus estimator bookkeeping.

        Position and speed come from the plant with the true saturation; the
        estimate follows ``s_hat + delta``; the error is re-estimated from the
        speed mismatch between plant and model over this step.
        """
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        z, y, v, s_hat, e = x
        a, th, d = u
        s = self.true_saturation
        meas = np.array([z + v * math.cos(th), y + v * math.sin(th), v + s * (a / math.sqrt(1.0 + a * a))])
        pred = adaptive_model_step(x, u)
        e_next = estimate_error(meas[2], pred[2], v, v, a, pred[4])
        return np.array([meas[0], meas[1], meas[2], pred[3], e_next])

    def start_state(self, e0: float) -> np.ndarray:
        return np.array(list(self.x_start) + [self.initial_estimate, e0])

    def problem(self, e0: Optional[float] = None, **overrides) -> LmpcProblem:
        if e0 is None:
            e0 = appendix_initialize(self)[0].trajectory.states[0][4]
        kw = dict(epsilon=self.epsilon, gamma=self.gamma, name="adaptive-dubins", plant=self.plant_step)
        if self.throttle_preference > 0:
            kw["preference"] = PlanPreference((self.accel_limit, 0.0, 0.0), (self.throttle_preference, 0.0, 0.0))
        kw.update(overrides)
        return LmpcProblem(self.model(), self.cost(), self.constraints(), self.horizon,
                           self.start_state(e0), **kw)

    def seed(self) -> IterationRecord:
        return appendix_initialize(self)[0]

    def initial_safe_set(self) -> SampledSafeSet:
        return appendix_initialize(self)[1]


def adaptive_dynamics_step(inst: AdaptiveDubinsInstance, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (5,) or u.shape != (3,):
        raise ConfigurationError("adaptive model needs a 5-d state and a 3-d input")
    return adaptive_model_step(x, u)


def _frozen_estimate_model(s_hat: float, accel_limit: float) -> DynamicsModel:
    """Position/speed model with the saturation estimate held fixed; inputs (a, theta)."""

    def f(x, u):
        a, th = u
        v = x[2]
        return np.array([x[0] + v * math.cos(th), x[1] + v * math.sin(th), v + s_hat * (a / math.sqrt(1.0 + a * a))])

    def jac(x, u):
        a, th = u
        v = x[2]
        c, sn = math.cos(th), math.sin(th)
        A = np.array([[1.0, 0.0, c], [0.0, 1.0, sn], [0.0, 0.0, 1.0]])
        B = np.array([[0.0, -v * sn], [0.0, v * c], [s_hat * _sigmoid_slope(a), 0.0]])
        return A, B

    return DynamicsModel(3, 2, f, jac, name="frozen-estimate")


_ADAPTIVE_SEED_CACHE: dict = {}


def appendix_initialize(inst: AdaptiveDubinsInstance):
    """Greedy iteration-0 construction for the adaptive problem.

    Returns ``(record, safe_set, q)`` where ``q`` maps a state to its Q-value.
    """
    if inst in _ADAPTIVE_SEED_CACHE:
        rec = _ADAPTIVE_SEED_CACHE[inst]
        ss = SampledSafeSet().add_trajectory(rec)
        return rec, ss, ss.q_value
    s0 = inst.initial_estimate
    best = _sweep(inst.x_start, inst.x_target, inst.ellipse(), inst.sweep_length, inst.sweep_heading,
                  inst.sweep_accel, lambda a: s0 * a / np.sqrt(1.0 + a * a), inst.obstacle_margin)
    if best is None:
        raise ConfigurationError("input-family sweep found no obstacle-free member; enlarge the grid")
    _, T, h, ns, a, nb = best
    fam = family_inputs(T, h, ns, a, nb)[:, ::-1]  # columns (a, theta)
    frozen = _frozen_estimate_model(s0, inst.accel_limit)
    lim = inst.accel_limit
    inf3 = np.full(3, np.inf)
    cs3 = ConstraintSet(-inf3, inf3, np.array([-lim, -np.inf]), np.array([lim, np.inf]), (inst.ellipse(),))
    fp = FixedTerminalProblem(frozen, MinimumTimeCost(np.array(inst.x_target)), cs3, np.array(inst.x_start),
                              np.array(inst.x_target), T, options=ShootingOptions(sqp_iterations=100))
    res = fp.solve([fam])
    if res is None:
        raise ConfigurationError("could not polish the best family member onto the target")
    U2 = res.inputs
    model_traj = simulate(frozen, inst.x_start, U2)
    # the same inputs applied to the true vehicle, then the error back-computed
    plant_traj = [np.array(inst.x_start, dtype=float)]
    s = inst.true_saturation
    for a_k, th_k in U2:
        z, y, v = plant_traj[-1]
        plant_traj.append(np.array([z + v * math.cos(th_k), y + v * math.sin(th_k),
                                    v + s * (a_k / math.sqrt(1.0 + a_k * a_k))]))
    # one-step inversion from each measured state, as the closed-loop estimator does
    errors = []
    for k in range(T):
        pred = frozen.f(plant_traj[k], U2[k])
        errors.append(estimate_error(plant_traj[k + 1][2], pred[2], plant_traj[k][2], plant_traj[k][2],
                                     U2[k][0], math.nan))
    known = [e for e in errors if np.isfinite(e)]
    if not known:
        raise ConfigurationError("seed never accelerates; the error cannot be identified")
    # with the estimate frozen the model keeps e constant; use the first identified value
    e0 = known[0]
    states = [np.concatenate([model_traj[k], [s0, e0]]) for k in range(T + 1)]
    inputs = [np.array([U2[k][0], U2[k][1], 0.0]) for k in range(T)]
    # final correction step drives the error estimate to zero
    inputs.append(np.array([0.0, 0.0, e0]))
    states.append(adaptive_model_step(states[-1], inputs[-1]))
    cost = inst.cost()
    rec = make_record(np.array(states), np.array(inputs), cost, 0, True, cost.canonical_target(states[-1]),
                      extra={"back_computed_errors": errors, "plant_states": np.array(plant_traj),
                             "family": {"length": T, "heading": h, "turn_steps": ns, "accel": a,
                                        "accel_steps": nb}})
    _ADAPTIVE_SEED_CACHE[inst] = rec
    ss = SampledSafeSet().add_trajectory(rec)
    return rec, ss, ss.q_value


def project_known_saturation(states) -> np.ndarray:
    """Position/speed part of augmented states (a fresh array)."""
    return np.array(np.asarray(states, dtype=float)[:, :3])


def estimation_error_norm(states, error_index: int = 4) -> float:
    """1-norm of the error-estimate channel over a stored trajectory."""
    return math.fsum(abs(float(e)) for e in np.asarray(states, dtype=float)[:, error_index])
