"""Sampled safe set, cost-to-go bookkeeping and the restriction set.

States are keyed by their exact bit pattern (``-0.0`` folded into ``0.0``):
two stored points share a Q-value entry only when they are the same double
vector. The terminal point of each trajectory is stored as the canonical
target vector, so every iteration contributes the same target key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np

from .core import IterationRecord, Trajectory

RS_SLACK = 1e-9


class NonConvergentTrajectoryError(ValueError):
    """A trajectory that did not reach the target cannot enter the safe set."""


def state_key(x) -> bytes:
    x = np.asarray(x, dtype=float) + 0.0
    return x.tobytes()


def cost_to_go_tails(trajectory_or_costs) -> List[float]:
    """Suffix sums of the stage costs, accumulated backwards.

    The recursion ``tail[t] == cost[t] + tail[t + 1]`` holds exactly in
    floating point because each entry is produced by that very addition.
    """
    if isinstance(trajectory_or_costs, Trajectory):
        costs = trajectory_or_costs.stage_costs
    else:
        costs = trajectory_or_costs
    tails = [0.0] * len(costs)
    acc = 0.0
    for t in range(len(costs) - 1, -1, -1):
        acc = float(costs[t]) + acc
        tails[t] = acc
    return tails


@dataclass(frozen=True)
class SafePoint:
    state: np.ndarray
    iteration: int
    time: int
    cost_to_go: float

    @property
    def index(self) -> tuple:
        return (self.iteration, self.time)


@dataclass(frozen=True)
class Candidate:
    """A distinct safe-set state with its Q-value and the point attaining it."""

    state: np.ndarray
    q: float
    point: SafePoint

    @property
    def order(self) -> tuple:
        return (self.q, self.point.iteration, self.point.time)


class SampledSafeSet:
    """Union of stored converged trajectories with the Q-value map.

    Mutation happens only through :meth:`add_trajectory`; all query methods
    are read-only and safe to call concurrently.
    """

    def __init__(self):
        self._records: List[IterationRecord] = []
        self._points: List[List[SafePoint]] = []
        self._best: dict = {}  # key -> SafePoint with minimal cost-to-go
        self._sorted: Optional[List[Candidate]] = None

    # -- growth -------------------------------------------------------------

    def add_trajectory(self, rec: IterationRecord) -> "SampledSafeSet":
        if not rec.converged:
            raise NonConvergentTrajectoryError(
                f"iteration {rec.iteration} did not converge to the target; not added")
        traj = rec.trajectory
        tails = cost_to_go_tails(traj) + [0.0]
        pts = []
        for t, x in enumerate(traj.states):
            state = np.array(x)
            state.setflags(write=False)
            p = SafePoint(state, rec.iteration, t, tails[t])
            pts.append(p)
            key = state_key(state)
            cur = self._best.get(key)
            if cur is None or p.cost_to_go < cur.cost_to_go:
                self._best[key] = p
        self._records.append(rec)
        self._points.append(pts)
        self._sorted = None
        return self

    # -- queries ------------------------------------------------------------

    def __len__(self) -> int:
        return sum(len(p) for p in self._points)

    @property
    def size(self) -> int:
        return len(self)

    @property
    def records(self) -> List[IterationRecord]:
        return list(self._records)

    @property
    def num_states(self) -> int:
        return len(self._best)

    def is_empty(self) -> bool:
        return not self._points

    def points(self) -> Iterator[SafePoint]:
        for pts in self._points:
            yield from pts

    def trajectory_points(self, slot: int) -> List[SafePoint]:
        return self._points[slot]

    def __contains__(self, x) -> bool:
        return state_key(x) in self._best

    def q_value(self, x) -> float:
        p = self._best.get(state_key(x))
        return math.inf if p is None else p.cost_to_go

    def argmin_point(self, x) -> Optional[SafePoint]:
        return self._best.get(state_key(x))

    def candidates(self) -> List[Candidate]:
        """Distinct states ordered by (Q, iteration, time)."""
        if self._sorted is None:
            cands = [Candidate(p.state, p.cost_to_go, p) for p in self._best.values()]
            cands.sort(key=lambda c: c.order)
            self._sorted = cands
        return self._sorted

    def _slot(self, iteration: int) -> int:
        for s, rec in enumerate(self._records):
            if rec.iteration == iteration:
                return s
        raise KeyError(iteration)

    def successor(self, point: SafePoint):
        """Return ``(next_point, input)`` along the stored trajectory, or None
        for a terminal point (the target is held with zero input)."""
        slot = self._slot(point.iteration)
        rec = self._records[slot]
        if point.time >= rec.trajectory.steps:
            return None
        return self._points[slot][point.time + 1], rec.trajectory.inputs[point.time]

    def segment_to(self, point: SafePoint, steps: int):
        """Stored inputs and start state of the ``steps``-long segment ending
        at ``point``; None when the trajectory is too short."""
        if point.time < steps:
            return None
        slot = self._slot(point.iteration)
        traj = self._records[slot].trajectory
        t0 = point.time - steps
        return traj.states[t0], traj.inputs[t0:point.time]

    def restriction_set(self, prev_step_cost: float) -> "RestrictionSet":
        return restriction_set(self, prev_step_cost)


@dataclass(frozen=True)
class RestrictionSet:
    """Candidates whose Q-value does not exceed the previous optimal cost."""

    candidates: tuple
    bound: float

    def __len__(self) -> int:
        return len(self.candidates)

    def __contains__(self, x) -> bool:
        key = state_key(x)
        return any(state_key(c.state) == key for c in self.candidates)


def add_trajectory(ss: SampledSafeSet, rec: IterationRecord) -> SampledSafeSet:
    return ss.add_trajectory(rec)


def q_value(ss: SampledSafeSet, x) -> float:
    return ss.q_value(x)


def restriction_set(ss: SampledSafeSet, prev_step_cost: float) -> RestrictionSet:
    cands = ss.candidates()
    if math.isinf(prev_step_cost):
        return RestrictionSet(tuple(cands), prev_step_cost)
    limit = prev_step_cost + RS_SLACK
    # candidates are sorted by Q, so the admissible ones form a prefix
    keep = []
    for c in cands:
        if c.q > limit:
            break
        keep.append(c)
    return RestrictionSet(tuple(keep), prev_step_cost)
