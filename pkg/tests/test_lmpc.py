import math

import numpy as np
import pytest

from lmpc_lab.core import ConfigurationError, QuadraticCost, check_feasible, make_record, simulate
from lmpc_lab.lmpc import (LmpcProblem, NoFeasibleCandidateError, run_iteration, run_until_convergence,
                           solve_candidate_linear, solve_candidate_nonlinear, solve_lmpc_step,
                           trajectory_distance)
from lmpc_lab.safe_set import SampledSafeSet
from lmpc_lab.systems import ClqrInstance, DubinsInstance


@pytest.fixture(scope="module")
def clqr():
    return ClqrInstance()


def origin_only_safe_set(n: int = 2, m: int = 1) -> SampledSafeSet:
    rec = make_record(np.zeros((1, n)), np.zeros((0, m)), QuadraticCost.identity(n, m), 0)
    return SampledSafeSet().add_trajectory(rec)


def test_step_at_rest_applies_zero_input(clqr):
    res = solve_lmpc_step(clqr.problem(), clqr.initial_safe_set(), [0.0, 0.0])
    np.testing.assert_array_equal(res.input, [0.0])
    assert res.cost == 0.0


def test_dubins_step_at_target_applies_zero_input(dubins_campaign):
    inst = dubins_campaign.instance
    res = solve_lmpc_step(dubins_campaign.problem, dubins_campaign.result.safe_set, np.array(inst.x_target))
    np.testing.assert_array_equal(res.input, [0.0, 0.0])
    assert res.cost == 0.0


def test_first_step_cost_no_worse_than_seed(clqr_campaign):
    assert clqr_campaign.records[1].lmpc_cost_at_start <= clqr_campaign.records[0].cost


def test_candidate_at_target_from_nearby_state(clqr):
    prob = clqr.problem()
    ss = clqr.initial_safe_set()
    sol = solve_candidate_linear(prob, [1.0, -1.0], [0.0, 0.0], ss=ss)
    assert sol.feasible
    # first stage alone costs |x|^2 = 2
    assert 2.0 <= sol.total_cost <= 3.0
    assert np.abs(sol.states[-1]).max() <= 1e-8


def test_unreachable_candidate_is_infeasible(clqr):
    ss = clqr.initial_safe_set()
    sol = solve_candidate_linear(clqr.problem(), [-3.95, -0.05], [0.0, 0.0], ss=ss)
    assert not sol.feasible
    assert sol.total_cost == math.inf


def test_stored_segment_solves_nonlinear_candidate(dubins_campaign):
    ss = dubins_campaign.result.safe_set
    prob = dubins_campaign.problem
    pts = ss.trajectory_points(0)
    sol = solve_candidate_nonlinear(prob, pts[0].state, pts[4], ss=ss)
    assert sol.feasible
    assert np.abs(sol.states[-1] - pts[4].state).max() <= 1e-8


@pytest.mark.parametrize("t", [4, 6, 8])
def test_nonlinear_plan_bends_around_obstacle(dubins_campaign, t):
    ss = dubins_campaign.result.safe_set
    prob = dubins_campaign.problem
    final = dubins_campaign.final
    ellipse = dubins_campaign.instance.ellipse()
    start, end = final.trajectory.states[t], final.trajectory.states[t + 4]
    # the straight chord between the two states cuts through the obstacle
    chord = [start[:2] + s * (end[:2] - start[:2]) for s in np.linspace(0.0, 1.0, 101)]
    assert min(ellipse.value(np.array([*p, 0.0])) for p in chord) < 1.0
    point = ss.argmin_point(end)
    sol = solve_candidate_nonlinear(prob, start, point, ss=ss)
    assert sol.feasible
    for k in range(prob.horizon):
        assert check_feasible(prob.constraints, sol.states[k], sol.inputs[k])


def test_converged_campaign_is_a_fixed_point(clqr_campaign):
    rec = run_iteration(clqr_campaign.problem, clqr_campaign.result.safe_set)
    assert rec.cost == pytest.approx(clqr_campaign.final.cost, abs=1e-9)


def test_infinite_gamma_stops_after_one_iteration(clqr):
    res = run_until_convergence(clqr.problem(gamma=math.inf), clqr.initial_safe_set())
    assert res.converged
    assert len(res.records) == 2


def test_iteration_cap_reports_not_converged(clqr):
    res = run_until_convergence(clqr.problem(max_iterations=1, gamma=1e-300), clqr.initial_safe_set())
    assert not res.converged
    assert len(res.records) == 2


@pytest.mark.parametrize("name", ["clqr_campaign", "dubins_campaign"])
def test_applied_input_is_first_planned_input(request, name):
    campaign = request.getfixturevalue(name)
    for rec in campaign.records[1:]:
        for t, info in enumerate(rec.steps_info[:rec.steps]):
            np.testing.assert_array_equal(rec.trajectory.inputs[t], info.input)
            np.testing.assert_array_equal(info.input, info.solution.inputs[0])


def test_shifted_dubins_plan_stays_feasible(dubins_campaign):
    prob = dubins_campaign.problem
    ss = dubins_campaign.result.safe_set
    cost = prob.cost
    for rec in dubins_campaign.records[1:]:
        X = rec.trajectory.states
        for t, info in enumerate(rec.steps_info[:rec.steps - 1]):
            point = info.candidate.point
            nxt = ss.successor(point)
            succ_state, u_next = (point.state, np.zeros(2)) if nxt is None else (nxt[0].state, nxt[1])
            U = np.vstack([info.solution.inputs[1:], np.asarray(u_next)[None]])
            plan = simulate(prob.model, X[t + 1], U)
            for k in range(len(U)):
                assert check_feasible(prob.constraints, plan[k], U[k])
            if cost.at_target(succ_state):
                assert cost.at_target(plan[-1])
            else:
                assert np.abs(plan[-1] - succ_state).max() <= 1e-6


def test_relaxation_with_only_the_target_matches_enumeration(clqr):
    ss = origin_only_safe_set()
    x_t = np.array([0.5, -0.25])
    relaxed = solve_lmpc_step(clqr.problem(mode="convex-relaxation"), ss, x_t)
    enumerated = solve_lmpc_step(clqr.problem(), ss, x_t)
    assert relaxed.cost == pytest.approx(enumerated.cost, abs=1e-9)
    np.testing.assert_allclose(relaxed.input, enumerated.input, atol=1e-7)


def test_relaxation_weights_form_a_convex_combination(clqr_relaxed):
    checked = 0
    for rec in clqr_relaxed.records[1:]:
        for info in rec.steps_info:
            w = info.solution.weights
            if w is None:
                continue
            assert np.all(w >= -1e-9)
            assert math.fsum(w) == pytest.approx(1.0, abs=1e-9)
            checked += 1
    assert checked > 0


def test_no_feasible_candidate_reports_details(clqr):
    with pytest.raises(NoFeasibleCandidateError) as info:
        solve_lmpc_step(clqr.problem(), origin_only_safe_set(), [-3.95, -0.05], t=7)
    assert info.value.details["t"] == 7
    assert info.value.details["state"] == [-3.95, -0.05]


def test_empty_safe_set_rejected(clqr):
    with pytest.raises(ValueError):
        solve_lmpc_step(clqr.problem(), SampledSafeSet(), [1.0, 0.0])


@pytest.mark.parametrize("changes", [
    {"horizon": 1},
    {"mode": "shortcut"},
    {"gamma": 0.0},
    {"epsilon": -1.0},
    {"x_start": [5.0, 0.0]},
    {"x_start": [1.0, 0.0, 0.0]},
])
def test_problem_validation(clqr, changes):
    base = clqr.problem()
    with pytest.raises(ConfigurationError):
        base.replace(**changes)


def test_relaxation_needs_linear_quadratic_problem():
    with pytest.raises(ConfigurationError):
        DubinsInstance().problem(mode="convex-relaxation")


def test_target_must_be_an_equilibrium(clqr):
    base = clqr.problem()
    shifted = QuadraticCost(base.cost.Q, base.cost.R, np.array([1.0, 1.0]))
    with pytest.raises(ConfigurationError):
        LmpcProblem(base.model, shifted, base.constraints, 4, base.x_start)


@pytest.mark.parametrize("a, b, expected", [
    ([[0.0], [1.0]], [[0.0], [1.0]], 0.0),
    ([[0.0], [1.0]], [[0.0], [3.0]], 2.0),
    ([[0.0], [1.0], [2.0]], [[0.0], [1.0]], 1.0),
])
def test_trajectory_distance(a, b, expected):
    assert trajectory_distance(np.array(a), np.array(b)) == expected
