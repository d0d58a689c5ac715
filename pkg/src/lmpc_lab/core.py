"""Domain types shared by the controller, the safe set and the examples.

Everything here is immutable after construction: arrays handed to the
dataclasses are copied and flagged read-only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

# Absolute tolerance used by every feasibility check.
FEAS_TOL = 1e-8
# Infinity-norm tolerance for "state equals target" in the indicator cost.
TARGET_TOL = 1e-6


class ConfigurationError(ValueError):
    """Raised for inconsistent dimensions or invalid problem data."""


def frozen_array(a, ndim: Optional[int] = None) -> np.ndarray:
    out = np.array(a, dtype=float)
    if ndim is not None and out.ndim != ndim:
        if ndim == 1:
            out = out.reshape(-1)
        elif ndim == 2 and out.ndim == 1:
            out = out.reshape(-1, 1)
    out.setflags(write=False)
    return out


def _as_vector(x, dim: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != dim:
        raise ConfigurationError(f"{what} has dimension {x.shape[0]}, expected {dim}")
    return x


@dataclass(frozen=True)
class DynamicsModel:
    """Discrete-time update map ``x' = f(x, u)``.

    ``jacobian`` returns ``(df/dx, df/du)`` and is needed by the shooting
    solver. Linear models carry ``A`` and ``B`` and evaluate ``A @ x + B @ u``.
    ``guess`` optionally proposes an input sequence for a fixed-terminal
    problem, ``guess(x0, target, steps) -> (steps, m) array``.
    ``reachable(x0, target, steps) -> bool`` is an optional necessary
    condition: returning False proves ``target`` cannot be reached from ``x0``
    in ``steps`` admissible steps.
    """

    n: int
    m: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray, np.ndarray], tuple]] = None
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    name: str = "model"
    guess: Optional[Callable] = None
    reachable: Optional[Callable] = None

    @classmethod
    def linear(cls, A, B, name: str = "linear") -> "DynamicsModel":
        A = frozen_array(A, 2)
        B = frozen_array(B, 2)
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise ConfigurationError("A must be square and B must have as many rows as A")

        def f(x, u):
            return A @ x + B @ u

        def jac(x, u):
            return np.array(A), np.array(B)

        return cls(n=A.shape[0], m=B.shape[1], f=f, jacobian=jac, A=A, B=B, name=name)

    @property
    def is_linear(self) -> bool:
        return self.A is not None and self.B is not None


def step(model: DynamicsModel, x, u) -> np.ndarray:
    """Apply one step of ``model``. Raises ConfigurationError on size mismatch."""
    x = _as_vector(x, model.n, "state")
    u = _as_vector(u, model.m, "input")
    return np.asarray(model.f(x, u), dtype=float)


def simulate(model: DynamicsModel, x0, inputs) -> np.ndarray:
    """Roll ``model`` forward from ``x0``; returns ``len(inputs) + 1`` states."""
    x = _as_vector(x0, model.n, "state")
    inputs = np.asarray(inputs, dtype=float).reshape(-1, model.m)
    states = np.empty((len(inputs) + 1, model.n))
    states[0] = x
    for k, u in enumerate(inputs):
        x = np.asarray(model.f(x, u), dtype=float)
        states[k + 1] = x
    return states


# ---------------------------------------------------------------- stage costs


@dataclass(frozen=True)
class QuadraticCost:
    """``h(x, u) = (x - x_F)' Q (x - x_F) + u' R u``."""

    Q: np.ndarray
    R: np.ndarray
    x_F: np.ndarray
    indicator = False

    def __post_init__(self):
        object.__setattr__(self, "Q", frozen_array(self.Q, 2))
        object.__setattr__(self, "R", frozen_array(self.R, 2))
        object.__setattr__(self, "x_F", frozen_array(self.x_F, 1))
        for M, name in ((self.Q, "Q"), (self.R, "R")):
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-12):
                raise ConfigurationError(f"{name} must be square and symmetric")
        if np.linalg.eigvalsh(self.Q).min() <= 0 or np.linalg.eigvalsh(self.R).min() <= 0:
            raise ConfigurationError("Q and R must be positive definite")
        # Cholesky factors used for least-squares residual form.
        object.__setattr__(self, "_LQ", np.linalg.cholesky(self.Q).T)
        object.__setattr__(self, "_LR", np.linalg.cholesky(self.R).T)

    @classmethod
    def identity(cls, n: int, m: int, x_F=None) -> "QuadraticCost":
        return cls(np.eye(n), np.eye(m), np.zeros(n) if x_F is None else x_F)

    def __call__(self, x, u) -> float:
        dx = np.asarray(x, dtype=float) - self.x_F
        u = np.asarray(u, dtype=float)
        return float(dx @ self.Q @ dx + u @ self.R @ u)

    def at_target(self, x) -> bool:
        return bool(np.array_equal(np.asarray(x, dtype=float), self.x_F))

    def canonical_target(self, x) -> np.ndarray:
        return np.array(self.x_F)

    def lower_bound(self, x, horizon: int, terminal_at_target: bool) -> float:
        # First predicted state is fixed; inputs contribute nonnegatively.
        dx = np.asarray(x, dtype=float) - self.x_F
        return float(dx @ self.Q @ dx)

    def residuals(self, x, u):
        """Return ``(r, dr/dx, dr/du)`` with ``h = ||r||^2``."""
        n, m = self.Q.shape[0], self.R.shape[0]
        r = np.concatenate([self._LQ @ (np.asarray(x) - self.x_F), self._LR @ np.asarray(u)])
        Jx = np.vstack([self._LQ, np.zeros((m, n))])
        Ju = np.vstack([np.zeros((n, m)), self._LR])
        return r, Jx, Ju


@dataclass(frozen=True)
class MinimumTimeCost:
    """Indicator stage cost: 1 away from the target set, 0 inside it.

    The target set is ``{x : x[i] = x_F[i] for i in mask}``; components
    outside ``mask`` are free. An optional quadratic penalty
    ``error_weight * x[error_index]**2`` is added (adaptive variant). State
    equality uses an infinity-norm tolerance of ``tol``.
    """

    x_F: np.ndarray
    mask: Optional[np.ndarray] = None
    tol: float = TARGET_TOL
    error_index: Optional[int] = None
    error_weight: float = 0.0
    indicator = True

    def __post_init__(self):
        x_F = frozen_array(self.x_F, 1)
        object.__setattr__(self, "x_F", x_F)
        mask = np.ones(x_F.shape[0], dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        if self.error_weight < 0:
            raise ConfigurationError("error_weight must be nonnegative")

    def at_target(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.max(np.abs(x[self.mask] - self.x_F[self.mask]), initial=0.0) <= self.tol)

    def canonical_target(self, x) -> np.ndarray:
        out = np.array(x, dtype=float)
        out[self.mask] = self.x_F[self.mask]
        return out

    def _error_cost(self, x) -> float:
        if self.error_index is None or self.error_weight == 0.0:
            return 0.0
        e = float(np.asarray(x)[self.error_index])
        return self.error_weight * e * e

    def __call__(self, x, u) -> float:
        return (0.0 if self.at_target(x) else 1.0) + self._error_cost(x)

    def lower_bound(self, x, horizon: int, terminal_at_target: bool) -> float:
        if self.at_target(x):
            return self._error_cost(x)
        # A plan ending outside the target never visits it (inputs are
        # frozen once the target is reached), so every stage counts.
        return (1.0 if terminal_at_target else float(horizon)) + self._error_cost(x)

    def residuals(self, x, u):
        x = np.asarray(x, dtype=float)
        n, m = x.shape[0], np.asarray(u).shape[0]
        if self.error_index is None or self.error_weight == 0.0:
            return np.zeros(0), np.zeros((0, n)), np.zeros((0, m))
        w = math.sqrt(self.error_weight)
        Jx = np.zeros((1, n))
        Jx[0, self.error_index] = w
        return np.array([w * x[self.error_index]]), Jx, np.zeros((1, m))


def eval_stage_cost(cost, x, u) -> float:
    return float(cost(x, u))


# ---------------------------------------------------------------- constraints


@dataclass(frozen=True)
class Ellipse:
    """Exclusion region: feasible points satisfy
    ``(p0 - c0)^2 / a^2 + (p1 - c1)^2 / b^2 >= 1`` with ``p = x[indices]``."""

    center: tuple
    semi_axes: tuple
    indices: tuple = (0, 1)

    def __post_init__(self):
        if len(self.center) != 2 or len(self.semi_axes) != 2 or len(self.indices) != 2:
            raise ConfigurationError("ellipse needs 2-d center, semi-axes and indices")
        if min(self.semi_axes) <= 0:
            raise ConfigurationError("ellipse semi-axes must be strictly positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "semi_axes", tuple(float(a) for a in self.semi_axes))
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    def value(self, x) -> float:
        """Left-hand side of the exclusion inequality (feasible when >= 1)."""
        i, j = self.indices
        dz = (x[i] - self.center[0]) / self.semi_axes[0]
        dy = (x[j] - self.center[1]) / self.semi_axes[1]
        return float(dz * dz + dy * dy)

    def gradient(self, x, n: int) -> np.ndarray:
        i, j = self.indices
        g = np.zeros(n)
        g[i] = 2.0 * (x[i] - self.center[0]) / self.semi_axes[0] ** 2
        g[j] = 2.0 * (x[j] - self.center[1]) / self.semi_axes[1] ** 2
        return g


@dataclass(frozen=True)
class ConstraintSet:
    """Box bounds on state and input plus elliptic exclusion zones.

    ``monotone_to_zero`` lists state coordinates that may only move toward
    zero between consecutive states, without crossing it (a transition
    constraint; see :func:`check_transition`). Inside a predicted plan the
    final transition onto the terminal candidate is exempt.
    """

    x_lower: np.ndarray
    x_upper: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray
    ellipses: tuple = ()
    monotone_to_zero: tuple = ()

    def __post_init__(self):
        for name in ("x_lower", "x_upper", "u_lower", "u_upper"):
            object.__setattr__(self, name, frozen_array(getattr(self, name), 1))
        if self.x_lower.shape != self.x_upper.shape or self.u_lower.shape != self.u_upper.shape:
            raise ConfigurationError("bound vectors must have matching sizes")
        if np.any(self.x_lower > self.x_upper) or np.any(self.u_lower > self.u_upper):
            raise ConfigurationError("lower bound exceeds upper bound")
        object.__setattr__(self, "ellipses", tuple(self.ellipses))
        object.__setattr__(self, "monotone_to_zero", tuple(int(i) for i in self.monotone_to_zero))

    @classmethod
    def unbounded(cls, n: int, m: int, ellipses: Sequence[Ellipse] = ()) -> "ConstraintSet":
        inf = np.full(n, np.inf)
        return cls(-inf, inf, -np.full(m, np.inf), np.full(m, np.inf), tuple(ellipses))

    @property
    def n(self) -> int:
        return self.x_lower.shape[0]

    @property
    def m(self) -> int:
        return self.u_lower.shape[0]


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple = ()

    def __bool__(self) -> bool:
        return self.feasible


def check_feasible(cs: ConstraintSet, x, u=None, tol: float = FEAS_TOL) -> FeasibilityReport:
    """Check state ``x`` (and input ``u`` when given) against ``cs``."""
    x = np.asarray(x, dtype=float)
    problems = []
    for i in np.flatnonzero(x < cs.x_lower - tol):
        problems.append(f"x[{i}]={x[i]!r} below {cs.x_lower[i]!r}")
    for i in np.flatnonzero(x > cs.x_upper + tol):
        problems.append(f"x[{i}]={x[i]!r} above {cs.x_upper[i]!r}")
    if u is not None:
        u = np.asarray(u, dtype=float)
        for i in np.flatnonzero(u < cs.u_lower - tol):
            problems.append(f"u[{i}]={u[i]!r} below {cs.u_lower[i]!r}")
        for i in np.flatnonzero(u > cs.u_upper + tol):
            problems.append(f"u[{i}]={u[i]!r} above {cs.u_upper[i]!r}")
    for k, ell in enumerate(cs.ellipses):
        v = ell.value(x)
        if v < 1.0 - tol:
            problems.append(f"inside ellipse {k} (value {v:.6g})")
    return FeasibilityReport(not problems, tuple(problems))


# Below this magnitude a monotone coordinate counts as zero and must stay there.
ZERO_TOL = 1e-12


def monotone_sign(value: float) -> float:
    return 0.0 if abs(value) <= ZERO_TOL else math.copysign(1.0, value)


def check_transition(cs: ConstraintSet, x, x_next, tol: float = FEAS_TOL) -> FeasibilityReport:
    """Check the ``monotone_to_zero`` coordinates between consecutive states."""
    problems = []
    for i in cs.monotone_to_zero:
        a, b = float(x[i]), float(x_next[i])
        sign = monotone_sign(a)
        if sign == 0.0:
            ok = abs(b) <= tol
        else:
            ok = sign * b >= -tol and sign * (a - b) >= -tol
        if not ok:
            problems.append(f"x[{i}] moved from {a!r} to {b!r}, not toward zero")
    return FeasibilityReport(not problems, tuple(problems))


# ---------------------------------------------------------------- trajectories


@dataclass(frozen=True)
class Trajectory:
    """States ``x_0 .. x_T`` and inputs ``u_0 .. u_{T-1}`` of one iteration."""

    states: np.ndarray
    inputs: np.ndarray
    stage_costs: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        states = frozen_array(self.states, 2)
        inputs = np.array(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(len(states) - 1, -1) if len(states) > 1 else inputs.reshape(0, 0)
        inputs.setflags(write=False)
        costs = frozen_array(self.stage_costs, 1)
        if len(states) != len(inputs) + 1 or len(costs) != len(inputs):
            raise ConfigurationError("trajectory needs T+1 states, T inputs and T stage costs")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "stage_costs", costs)

    @property
    def steps(self) -> int:
        return len(self.inputs)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class IterationRecord:
    """One closed-loop iteration plus its bookkeeping.

    ``raw_terminal`` is the state actually reached at termination before it
    was replaced by the canonical target vector in ``trajectory.states[-1]``.
    """

    trajectory: Trajectory
    cost: float
    converged: bool
    raw_terminal: Optional[np.ndarray] = None
    steps_info: tuple = ()
    lmpc_cost_at_start: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def iteration(self) -> int:
        return self.trajectory.iteration

    @property
    def steps(self) -> int:
        return self.trajectory.steps


def iteration_cost(stage_costs) -> float:
    """Sum of stage costs, accumulated front to back."""
    return math.fsum(float(c) for c in stage_costs)


def make_record(states, inputs, cost_fn, iteration: int, converged: bool = True,
                canonical_terminal=None, **kwargs) -> IterationRecord:
    """Build an IterationRecord, evaluating stage costs on the raw states.

    When ``canonical_terminal`` is given the last stored state is replaced by
    it; the raw value is kept in ``raw_terminal``.
    """
    states = np.array(states, dtype=float)
    inputs = np.array(inputs, dtype=float)
    if inputs.ndim != 2:
        inputs = inputs.reshape(len(states) - 1, -1)
    costs = np.array([cost_fn(states[k], inputs[k]) for k in range(len(inputs))])
    raw_terminal = np.array(states[-1])
    if canonical_terminal is not None:
        states[-1] = canonical_terminal
    traj = Trajectory(states, inputs, costs, iteration)
    raw_terminal.setflags(write=False)
    return IterationRecord(traj, iteration_cost(costs), converged, raw_terminal, **kwargs)
