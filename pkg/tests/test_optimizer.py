"""Optimizer: constraint function semantics, verification, oscillation
detection, and full solves on small configurations (the large reference
problem is exercised by the acceptance suite)."""

import numpy as np
import pytest

from priorci.optimizer import (
    ConstraintGrid,
    coverage_constraint,
    oscillation_check,
    solve,
    verify,
)
from priorci.quadrature import ProblemConfig, QuadratureSpec, coverage_probability, objective
from priorci.splines import (
    DecisionVector,
    KnotGrid,
    build_interval_functions,
    standard_decision_vector,
)

KNOTS = KnotGrid.equidistant(8.0, 4)
CFG = ProblemConfig(m=5, rho=0.4, alpha=0.05, lam=0.2, knots=KNOTS)
QUAD = QuadratureSpec.for_m(5)
GRID = ConstraintGrid(delta=1.0, M=10.0)
T_Q = CFG.t_quant


# -- grids ------------------------------------------------------------------------

def test_constraint_grid_layout():
    g = ConstraintGrid(delta=0.5, M=50.0)
    assert g.gammas[0] == 0.0 and g.gammas[-1] == 50.0
    assert len(g.gammas) == 101
    assert np.allclose(np.diff(g.gammas), 0.5)
    assert g.dense_gammas[0] == 0.0 and g.dense_gammas[-1] == pytest.approx(100.0)
    assert np.allclose(np.diff(g.dense_gammas), 0.05)


def test_constraint_grid_validation():
    with pytest.raises(ValueError):
        ConstraintGrid(delta=0.0, M=10.0)
    with pytest.raises(ValueError):
        ConstraintGrid(delta=5.0, M=1.0)


# -- constraint function -------------------------------------------------------------

def test_constraint_zero_at_standard_start():
    z0 = standard_decision_vector(4, T_Q)
    for gamma in (0.0, 2.0, 10.0):
        assert coverage_constraint(z0, gamma, CFG, QUAD) == pytest.approx(0.0, abs=1e-9)


def test_constraint_negative_for_widened_s():
    z = DecisionVector(b_vals=np.zeros(2), s_vals=np.full(3, 1.2 * T_Q))
    for gamma in (0.0, 3.0):
        assert coverage_constraint(z, gamma, CFG, QUAD) < 0.0


def test_constraint_positive_for_narrowed_s():
    z = DecisionVector(b_vals=np.zeros(2), s_vals=np.full(3, 0.25 * T_Q))
    assert coverage_constraint(z, 0.0, CFG, QUAD) > 0.0


# -- verify ---------------------------------------------------------------------------

def test_verify_standard_start_passes():
    z0 = standard_decision_vector(4, T_Q)
    min_cov, argmin, ok = verify(z0, CFG, GRID, QUAD)
    assert ok
    assert min_cov == pytest.approx(0.95, abs=1e-6)


def test_verify_fails_for_narrow_interval():
    z = DecisionVector(b_vals=np.zeros(2),
                       s_vals=np.array([0.25 * T_Q, T_Q, T_Q]))
    min_cov, argmin, ok = verify(z, CFG, GRID, QUAD)
    assert not ok
    assert min_cov < 0.95 - 1e-3
    assert 0.0 <= argmin <= 2.0 * GRID.M


# -- oscillation detection ------------------------------------------------------------

def test_oscillation_check_trivial_cases():
    assert not oscillation_check(standard_decision_vector(4, T_Q), KNOTS)
    smooth = DecisionVector(b_vals=np.array([0.5, 0.8]), s_vals=np.full(3, T_Q))
    assert not oscillation_check(smooth, KNOTS)


def test_oscillation_check_flags_alternating_extremes():
    knots = KnotGrid.equidistant(30.0, 9)
    b = np.array([100.0, -100.0, 100.0, -100.0, 100.0, -100.0, 100.0])
    z = DecisionVector(b_vals=b, s_vals=np.full(8, 5.0))
    assert oscillation_check(z, knots)


# -- solve ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def light_report():
    return solve(CFG, GRID, QUAD)


def test_solve_converges_and_improves(light_report):
    rep = light_report
    assert rep.converged
    assert rep.objective_value < 0.0
    assert rep.min_coverage_dense >= 0.95 - 1e-4
    assert rep.restarts <= 3
    assert np.all(rep.constraint_violations <= 1e-5)


def test_solve_respects_bounds_and_floor(light_report):
    z = light_report.z_star
    assert np.all(np.abs(z.b_vals) <= 100.0)
    assert np.all(z.s_vals <= 200.0)
    assert np.all(z.s_vals >= 0.25 * T_Q - 1e-12)


def test_solution_beats_standard_and_shrinks_at_zero(light_report):
    f = build_interval_functions(KNOTS, light_report.z_star, T_Q)
    assert f.eval_s(0.0) < T_Q


def test_solve_is_deterministic(light_report):
    rep2 = solve(CFG, GRID, QUAD)
    assert np.array_equal(rep2.z_star.to_array(), light_report.z_star.to_array())
    assert rep2.objective_value == light_report.objective_value
    assert rep2.iterations == light_report.iterations
    assert rep2.min_coverage_dense == light_report.min_coverage_dense


def test_solve_m76_negative_rho():
    # the companion case: rho = -1/sqrt(2), m = 76 (small d keeps it fast)
    knots = KnotGrid.equidistant(6.0, 4)
    cfg = ProblemConfig(m=76, rho=-1.0 / np.sqrt(2.0), alpha=0.05, lam=0.2, knots=knots)
    quad = QuadratureSpec.for_m(76)
    assert quad.c < 2.0
    rep = solve(cfg, ConstraintGrid(delta=0.5, M=8.0), quad)
    assert rep.converged
    assert rep.objective_value < 0.0


def test_solve_huge_lambda_never_worse_than_start():
    cfg = ProblemConfig(m=5, rho=0.4, alpha=0.05, lam=1e6, knots=KNOTS)
    rep = solve(cfg, GRID, QUAD, maxiter=60)
    assert rep.objective_value <= 1e-6


def test_solved_objective_matches_public_objective(light_report):
    f = build_interval_functions(KNOTS, light_report.z_star, T_Q)
    assert light_report.objective_value == pytest.approx(objective(f, CFG, QUAD), abs=1e-9)


def test_report_coverage_curve_is_fresh_adaptive(light_report):
    rep = light_report
    f = build_interval_functions(KNOTS, rep.z_star, T_Q)
    i = len(rep.dense_gammas) // 3
    g = float(rep.dense_gammas[i])
    assert rep.dense_coverage[i] == pytest.approx(
        coverage_probability(g, f, CFG, QUAD), abs=1e-12)
