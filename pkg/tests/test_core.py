import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lmpc_lab.core import (ConfigurationError, ConstraintSet, DynamicsModel, Ellipse, MinimumTimeCost,
                           QuadraticCost, Trajectory, check_feasible, check_transition, eval_stage_cost,
                           iteration_cost, make_record, simulate, step)
from lmpc_lab.systems import ClqrInstance, DubinsInstance

finite = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)


@pytest.fixture
def clqr():
    return ClqrInstance()


def test_step_double_integrator(clqr):
    x = step(clqr.model(), [-3.95, -0.05], [0.0])
    np.testing.assert_array_equal(x, [-4.0, -0.05])


def test_step_keeps_equilibrium(clqr):
    np.testing.assert_array_equal(step(clqr.model(), [0.0, 0.0], [0.0]), [0.0, 0.0])


def test_step_dubins_from_rest():
    x = step(DubinsInstance().model(), [0.0, 0.0, 0.0], [0.0, 1.0])
    np.testing.assert_array_equal(x, [0.0, 0.0, 1.0])


@pytest.mark.parametrize("x, u", [([1.0], [0.0]), ([1.0, 2.0], [0.0, 0.0]), ([1.0, 2.0, 3.0], [0.0])])
def test_step_rejects_wrong_sizes(clqr, x, u):
    with pytest.raises(ConfigurationError):
        step(clqr.model(), x, u)


def test_linear_model_needs_square_a():
    with pytest.raises(ConfigurationError):
        DynamicsModel.linear(np.ones((2, 3)), np.ones((2, 1)))


def test_quadratic_stage_cost():
    assert eval_stage_cost(QuadraticCost.identity(2, 1), [3.0, 4.0], [1.0]) == 26.0


def test_indicator_cost_at_and_away_from_target():
    cost = MinimumTimeCost(np.array([54.0, 0.0, 0.0]))
    assert eval_stage_cost(cost, [54.0, 0.0, 0.0], [0.0, 0.0]) == 0.0
    assert eval_stage_cost(cost, [1.0, 0.0, 0.0], [0.0, 0.0]) == 1.0


def test_indicator_cost_uses_infinity_norm_tolerance():
    cost = MinimumTimeCost(np.array([54.0, 0.0, 0.0]))
    assert cost([54.0 + 5e-7, -5e-7, 0.0], None) == 0.0
    assert cost([54.0 + 2e-6, 0.0, 0.0], None) == 1.0


def test_masked_indicator_with_error_penalty():
    cost = MinimumTimeCost(np.zeros(3), mask=np.array([True, False, True]), error_index=2, error_weight=10.0)
    assert cost([0.0, 7.0, 0.0], None) == 0.0
    assert cost([0.0, 7.0, 0.5], None) == pytest.approx(1.0 + 2.5)


@given(st.lists(finite, min_size=2, max_size=2), finite)
def test_quadratic_cost_zero_only_at_rest(x, u):
    h = QuadraticCost.identity(2, 1)(x, [u])
    assert h >= 0.0
    if x == [0.0, 0.0] and u == 0.0:
        assert h == 0.0
    elif max(abs(v) for v in [*x, u]) > 1e-150:
        # smaller entries square to zero in floating point
        assert h > 0.0


@pytest.mark.parametrize("x, u, ok", [
    ([-3.95, -0.05], [1.0], True),
    ([-3.95, -0.05], [1.0001], False),
    ([4.0 + 1e-9, 0.0], None, True),
    ([4.1, 0.0], None, False),
])
def test_check_feasible_box(clqr, x, u, ok):
    assert bool(check_feasible(clqr.constraints(), x, u)) is ok


def test_check_feasible_ellipse():
    cs = DubinsInstance().constraints()
    assert not check_feasible(cs, [27.0, 0.0, 0.0])
    assert check_feasible(cs, [27.0, 6.01, 0.0])


def test_check_feasible_reports_violations(clqr):
    report = check_feasible(clqr.constraints(), [5.0, 0.0], [2.0])
    assert not report
    assert len(report.violations) == 2


@pytest.mark.parametrize("x, nxt, ok", [
    (0.75, 0.25, True),
    (0.75, 0.0, True),
    (0.75, 0.9, False),
    (0.75, -0.1, False),
    (-0.5, -0.2, True),
    (-0.5, 0.1, False),
    (0.0, 0.0, True),
    (0.0, 1e-6, False),
])
def test_check_transition_moves_toward_zero(x, nxt, ok):
    cs = ConstraintSet.unbounded(1, 1)
    cs = ConstraintSet(cs.x_lower, cs.x_upper, cs.u_lower, cs.u_upper, monotone_to_zero=(0,))
    assert bool(check_transition(cs, [x], [nxt])) is ok


def test_constraint_set_rejects_crossed_bounds():
    with pytest.raises(ConfigurationError):
        ConstraintSet(np.array([1.0]), np.array([0.0]), np.array([-1.0]), np.array([1.0]))


@pytest.mark.parametrize("axes", [(0.0, 6.0), (8.0, -1.0)])
def test_ellipse_needs_positive_axes(axes):
    with pytest.raises(ConfigurationError):
        Ellipse((27.0, 0.0), axes)


def test_trajectory_shape_checks():
    with pytest.raises(ConfigurationError):
        Trajectory(np.zeros((3, 2)), np.zeros((3, 1)), np.zeros(3))


def test_resimulating_a_seed_is_bit_exact(clqr):
    rec = clqr.seed()
    X = simulate(clqr.model(), rec.trajectory.states[0], rec.trajectory.inputs)
    np.testing.assert_array_equal(X[:-1], rec.trajectory.states[:-1])
    np.testing.assert_array_equal(X[-1], rec.raw_terminal)


def test_iteration_cost_is_the_exact_resummation(clqr):
    rec = clqr.seed()
    cost = clqr.cost()
    X = np.array(rec.trajectory.states)
    X[-1] = rec.raw_terminal
    U = rec.trajectory.inputs
    assert rec.cost == iteration_cost(eval_stage_cost(cost, X[k], U[k]) for k in range(len(U)))


def test_make_record_keeps_raw_terminal():
    cost = QuadraticCost.identity(1, 1)
    model = DynamicsModel.linear([[0.5]], [[1.0]])
    X = simulate(model, [1.0], [[0.0], [0.0]])
    rec = make_record(X, [[0.0], [0.0]], cost, 3, True, np.zeros(1))
    assert rec.iteration == 3
    assert rec.raw_terminal[0] == 0.25
    assert rec.trajectory.states[-1, 0] == 0.0
    assert rec.cost == math.fsum([1.0, 0.25])


def test_zero_step_record():
    rec = make_record(np.zeros((1, 2)), np.zeros((0, 1)), QuadraticCost.identity(2, 1), 0)
    assert rec.steps == 0
    assert rec.cost == 0.0
