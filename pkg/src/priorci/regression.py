"""Least-squares front end: fit the linear model and apply interval rules.

The fit goes through a QR decomposition (never the normal equations); the
quadratic forms a^T (X^T X)^{-1} a etc. come from triangular solves against
the R factor.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, DataError, DegenerateFitError
from .special import t_quantile
from .splines import IntervalFunctions

__all__ = [
    "RegressionData",
    "FitSummary",
    "fit",
    "standard_interval",
    "new_interval",
    "load_regression_csv",
]


@dataclass(frozen=True)
class RegressionData:
    """Design matrix, response, and the vectors defining theta and tau."""

    X: np.ndarray
    y: np.ndarray
    a: np.ndarray
    c_vec: np.ndarray
    t_shift: float = 0.0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        a = np.asarray(self.a, dtype=float).ravel()
        c = np.asarray(self.c_vec, dtype=float).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c_vec", c)
        n, p = X.shape
        if len(y) != n:
            raise DataError(f"y has length {len(y)}, expected {n}")
        if len(a) != p or len(c) != p:
            raise DataError(f"a and c_vec must have length p={p}")
        if n <= p:
            raise DataError(f"need n > p for residual degrees of freedom (n={n}, p={p})")
        if not np.any(a):
            raise DataError("a must be nonzero")
        if np.linalg.matrix_rank(np.column_stack([a, c])) < 2:
            raise DataError("a and c_vec must be linearly independent")


@dataclass(frozen=True)
class FitSummary:
    """Least-squares artifacts needed to evaluate the interval rules."""

    beta_hat: np.ndarray
    theta_hat: float
    tau_hat: float
    sigma_hat: float
    v11: float
    v22: float
    v12: float
    rho: float
    gamma_stat: float
    m: int
    degenerate: bool = False


def fit(data: RegressionData) -> FitSummary:
    """Least squares via QR; raises DataError on rank deficiency."""
    X, y = data.X, data.y
    n, p = X.shape
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if np.any(diag <= np.finfo(float).eps * max(n, p) * diag.max(initial=0.0)):
        raise DataError("X has linearly dependent columns (rank deficient)")
    beta = solve_triangular(R, Q.T @ y)
    resid = y - X @ beta
    m = n - p
    rss = float(resid @ resid)
    sigma2 = rss / m
    # quadratic forms of (X^T X)^{-1} = R^{-1} R^{-T} via one triangular solve each
    u_a = solve_triangular(R, data.a, trans="T")
    u_c = solve_triangular(R, data.c_vec, trans="T")
    v11 = float(u_a @ u_a)
    v22 = float(u_c @ u_c)
    v12 = float(u_a @ u_c)
    rho = v12 / np.sqrt(v11 * v22)
    theta_hat = float(data.a @ beta)
    tau_hat = float(data.c_vec @ beta - data.t_shift)
    degenerate = rss <= (1e-12 * max(1.0, float(np.linalg.norm(y)))) ** 2
    sigma_hat = np.sqrt(sigma2)
    gamma_stat = tau_hat / (sigma_hat * np.sqrt(v22)) if not degenerate else np.nan
    return FitSummary(
        beta_hat=beta, theta_hat=theta_hat, tau_hat=tau_hat, sigma_hat=float(sigma_hat),
        v11=v11, v22=v22, v12=v12, rho=float(rho), gamma_stat=float(gamma_stat),
        m=m, degenerate=bool(degenerate),
    )


def standard_interval(fit: FitSummary, alpha: float):
    """The usual t interval for theta from the full model."""
    if fit.degenerate:
        raise DegenerateFitError("sigma_hat = 0; the standard interval is undefined")
    half = t_quantile(fit.m, 1.0 - 0.5 * alpha) * np.sqrt(fit.v11) * fit.sigma_hat
    return fit.theta_hat - half, fit.theta_hat + half


def new_interval(fit: FitSummary, f: IntervalFunctions):
    """The interval J(b, s): shifted center, data-dependent half-width.

    Coincides with the standard interval whenever |gamma_stat| >= d, and for
    the standard functions (b = 0, s = t quantile) at any fit.
    """
    if fit.degenerate:
        raise DegenerateFitError("sigma_hat = 0; intervals are undefined")
    scale = np.sqrt(fit.v11) * fit.sigma_hat
    center = fit.theta_hat - scale * f.eval_b(fit.gamma_stat)
    half = scale * f.eval_s(abs(fit.gamma_stat))
    return float(center - half), float(center + half)


def load_regression_csv(path, response: str, predictors, a, c_vec, t_shift: float = 0.0,
                        intercept: bool = False) -> RegressionData:
    """Build RegressionData from a headed CSV, selecting columns by name."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: missing CSV header row")
        cols = {name: [] for name in [response, *predictors]}
        missing = [c for c in cols if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for row in reader:
            for name in cols:
                try:
                    cols[name].append(float(row[name]))
                except (TypeError, ValueError) as exc:
                    raise DataError(f"{path}: non-numeric value in column {name!r}") from exc
    y = np.asarray(cols[response])
    X = np.column_stack([cols[name] for name in predictors])
    if intercept:
        X = np.column_stack([np.ones(len(y)), X])
    a = np.asarray(a, dtype=float)
    c_vec = np.asarray(c_vec, dtype=float)
    if len(a) != X.shape[1] or len(c_vec) != X.shape[1]:
        raise ConfigError(
            f"a and c_vec must have length {X.shape[1]} (predictors"
            f"{' + intercept' if intercept else ''})"
        )
    return RegressionData(X=X, y=y, a=a, c_vec=c_vec, t_shift=t_shift)
