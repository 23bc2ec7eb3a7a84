"""Shared fixtures. The reference solve (m = 1, rho = 0.4, alpha = 0.05,
d = 30, lambda = 0.2, seven equidistant knots) takes minutes, so it is solved
once per session and shared by every test that needs the solved functions."""

import numpy as np
import pytest

from priorci.optimizer import ConstraintGrid, solve
from priorci.quadrature import ProblemConfig, QuadratureSpec
from priorci.splines import KnotGrid, build_interval_functions


def reference_problem():
    knots = KnotGrid.equidistant(30.0, 7)
    cfg = ProblemConfig(m=1, rho=0.4, alpha=0.05, lam=0.2, knots=knots)
    quad = QuadratureSpec.for_m(1)
    grid = ConstraintGrid(delta=0.5, M=50.0)
    return cfg, grid, quad


@pytest.fixture(scope="session")
def reference_solution():
    """SolveReport plus problem objects for the reference configuration."""
    cfg, grid, quad = reference_problem()
    report = solve(cfg, grid, quad)
    f = build_interval_functions(cfg.knots, report.z_star, cfg.t_quant)
    return {"cfg": cfg, "grid": grid, "quad": quad, "report": report, "functions": f}
