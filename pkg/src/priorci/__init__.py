"""Confidence intervals for Gaussian linear regression that utilize uncertain
prior information about a linear combination of the coefficients.

The interval is parameterized by a center-shift function b and a half-width
function s of the standardized prior-information statistic; both are cubic
splines found by minimizing an expected-length criterion subject to the
coverage probability staying at its nominal level everywhere.
"""

__version__ = "0.1.0"

from .errors import ConfigError, ConvergenceError, DataError, DegenerateFitError, PriorCIError
from .optimizer import ConstraintGrid, SolveReport, coverage_constraint, oscillation_check, solve, verify
from .quadrature import (
    DoubleIntegral,
    ProblemConfig,
    QuadratureError,
    QuadratureSpec,
    coverage_probability,
    e1_bound,
    e2_bound,
    e3_bound,
    lemma2_value,
    objective,
    scaled_expected_length,
    truncation_point,
)
from .regression import FitSummary, RegressionData, fit, load_regression_csv, new_interval, standard_interval
from .special import chi2_tail, expected_w, f_w_density, log_gamma, normal_interval_prob, t_quantile
from .splines import (
    DecisionVector,
    IntervalFunctions,
    KnotGrid,
    build_interval_functions,
    load_functions,
    save_functions,
    standard_decision_vector,
    standard_functions,
)
