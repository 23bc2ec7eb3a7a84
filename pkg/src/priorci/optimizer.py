"""Constrained minimization of the length criterion under coverage constraints.

The continuum coverage requirement (coverage >= 1 - alpha for every gamma
>= 0) is discretized to the finite grid {0, delta, ..., M}; a solution is
then certified by checking coverage on a much denser grid over [0, 2M]. If
the dense check fails, or the fitted b spline oscillates spuriously, the
computed solution is used as the starting value of another solve, up to a
restart cap.

During the SQP iterations every coverage integral is evaluated on a frozen
panel plan (adapted beforehand at a fixed set of warmup points), so the
constraint functions are smooth in the decision vector and finite-difference
Jacobians are reliable. Verification always re-evaluates with fresh adaptive
panels.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .quadrature import (
    DoubleIntegral,
    ProblemConfig,
    QuadratureSpec,
    coverage_probability,
    objective,
)
from .splines import (
    DecisionVector,
    IntervalFunctions,
    KnotGrid,
    build_interval_functions,
    standard_decision_vector,
)

__all__ = [
    "ConstraintGrid",
    "SolveReport",
    "coverage_constraint",
    "solve",
    "verify",
    "oscillation_check",
]

B_BOX = 100.0
S_BOX = 200.0
S_FLOOR_FRACTION = 0.25
DEFAULT_COV_SLACK = 1e-4


@dataclass(frozen=True)
class ConstraintGrid:
    """Finite gamma grid for the constraints plus the dense verification grid."""

    delta: float = 0.5
    M: float = 50.0

    def __post_init__(self):
        if self.delta <= 0 or self.M <= 0 or self.M < self.delta:
            raise ValueError("need 0 < delta <= M")

    @property
    def gammas(self) -> np.ndarray:
        n = int(round(self.M / self.delta))
        return np.linspace(0.0, n * self.delta, n + 1)

    @property
    def dense_gammas(self) -> np.ndarray:
        step = self.delta / 10.0
        n = int(round(2.0 * self.M / step))
        return np.linspace(0.0, n * step, n + 1)


@dataclass
class SolveReport:
    """Everything worth keeping from one constrained solve."""

    z_star: DecisionVector
    objective_value: float
    min_coverage_dense: float
    argmin_gamma: float
    iterations: int
    restarts: int
    constraint_violations: np.ndarray
    converged: bool
    max_s_dev_observed: float = math.nan
    message: str = ""
    dense_gammas: np.ndarray = field(default=None, repr=False)
    dense_coverage: np.ndarray = field(default=None, repr=False)


def coverage_constraint(z: DecisionVector, gamma: float, cfg: ProblemConfig,
                        quad: QuadratureSpec) -> float:
    """(1 - alpha) minus the coverage probability at gamma; feasible iff <= 0."""
    f = build_interval_functions(cfg.knots, z, cfg.t_quant)
    return (1.0 - cfg.alpha) - coverage_probability(gamma, f, cfg, quad)


def oscillation_check(z: DecisionVector, knots: KnotGrid, max_flips: int = None,
                      n_grid: int = 800) -> bool:
    """True when the b spline wiggles more than a plausible solution should.

    Counts sign changes of the derivative of b over a fine grid on its full
    support [-d, d]; more than max_flips (default q) flags a spurious
    oscillation and triggers a solver restart.
    """
    if max_flips is None:
        max_flips = knots.q
    f = build_interval_functions(knots, z, 1.0)
    xs = np.linspace(-knots.d, knots.d, n_grid)
    slopes = np.diff(f.eval_b(xs))
    signs = np.sign(slopes[np.abs(slopes) > 1e-12])
    if len(signs) < 2:
        return False
    flips = int(np.sum(signs[1:] != signs[:-1]))
    return flips > max_flips


def verify(z: DecisionVector, cfg: ProblemConfig, grid: ConstraintGrid,
           quad: QuadratureSpec, cov_slack: float = DEFAULT_COV_SLACK):
    """Dense-grid coverage check certifying the finite-grid solution.

    Returns (min_coverage, argmin_gamma, pass). Per the verification lemma, a
    pass means the finite-grid solution also solves the continuum problem (up
    to numerical tolerance).
    """
    f = build_interval_functions(cfg.knots, z, cfg.t_quant)
    cov = _coverage_curve(f, cfg, quad, grid.dense_gammas)
    i = int(np.argmin(cov))
    min_cov = float(cov[i])
    return min_cov, float(grid.dense_gammas[i]), min_cov >= 1.0 - cfg.alpha - cov_slack


def _coverage_curve(f: IntervalFunctions, cfg: ProblemConfig, quad: QuadratureSpec,
                    gammas: np.ndarray) -> np.ndarray:
    return np.array([coverage_probability(g, f, cfg, quad) for g in gammas])


def _warmup_vectors(q: int, t_q: float):
    """Deterministic decision vectors spanning the feasible region.

    Used to pre-adapt the quadrature panels before they are frozen for the
    SQP iterations; at the standard starting point every integrand vanishes
    identically, so adapting there alone would leave the panels coarse.
    """
    alt = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(q - 2)])
    ramp = np.linspace(1.0, 0.2, q - 1)
    return [
        standard_decision_vector(q, t_q),
        DecisionVector(b_vals=np.zeros(q - 2), s_vals=np.full(q - 1, S_FLOOR_FRACTION * t_q)),
        DecisionVector(b_vals=1.5 * alt, s_vals=np.full(q - 1, min(1.5 * t_q, S_BOX))),
        DecisionVector(b_vals=np.full(q - 2, 2.0), s_vals=np.minimum(ramp * t_q, S_BOX)),
        DecisionVector(b_vals=-2.0 * alt, s_vals=np.full(q - 1, 0.6 * t_q)),
    ]


class _FrozenEvaluators:
    """Per-solve bundle of double integrals with shared, reusable panel plans."""

    def __init__(self, cfg: ProblemConfig, grid: ConstraintGrid, quad: QuadratureSpec):
        self.cfg = cfg
        self.quad = quad
        self.t_q = cfg.t_quant
        self.cov = [DoubleIntegral("cov", g, cfg, quad) for g in grid.gammas]
        self.obj = DoubleIntegral("len", 0.0, cfg, quad, x_domain=(0.0, cfg.knots.d))

    def warm(self, vectors):
        for z in vectors:
            f = build_interval_functions(self.cfg.knots, z, self.t_q)
            for ev in self.cov:
                ev.evaluate(f, adapt=True)
            self.obj.evaluate(f, adapt=True)

    def functions(self, z_arr: np.ndarray) -> IntervalFunctions:
        z = DecisionVector.from_array(z_arr, self.cfg.knots.q)
        return build_interval_functions(self.cfg.knots, z, self.t_q)

    def constraint_values(self, z_arr: np.ndarray) -> np.ndarray:
        """coverage - (1 - alpha) at every grid gamma; >= 0 when feasible."""
        f = self.functions(z_arr)
        return np.array([ev.evaluate(f, adapt=False) for ev in self.cov])

    def objective_value(self, z_arr: np.ndarray) -> float:
        f = self.functions(z_arr)
        lam_term = self.cfg.lam * (f.s_integral() - self.cfg.knots.d * f.t_quant)
        return lam_term + self.obj.evaluate(f, adapt=False)


def solve(cfg: ProblemConfig, grid: ConstraintGrid = None, quad: QuadratureSpec = None,
          restarts: int = 3, maxiter: int = 200, ftol: float = 1e-9,
          fd_step: float = 1e-6, cov_slack: float = DEFAULT_COV_SLACK,
          polish_rounds: int = 12, polish_tol: float = 1e-7) -> SolveReport:
    """Minimize the criterion subject to the discretized coverage constraints.

    Starts from the standard interval (b = 0, s = t quantile), runs SLSQP
    with box bounds (|b| <= 100, t/4 <= s <= 200), then certifies the result
    on the dense gamma grid; on failure or oscillation the solve restarts
    from the current solution, up to `restarts` times.

    A single SQP pass routinely stalls in a line search short of the
    optimum, so each pass is re-run from its own result (resetting the
    quasi-Newton state) until a full pass improves the criterion by less
    than polish_tol.
    """
    if grid is None:
        grid = ConstraintGrid()
    if quad is None:
        quad = QuadratureSpec.for_m(cfg.m)
    q = cfg.knots.q
    t_q = cfg.t_quant
    z0 = standard_decision_vector(q, t_q)
    bounds = [(-B_BOX, B_BOX)] * (q - 2) + [(S_FLOOR_FRACTION * t_q, S_BOX)] * (q - 1)

    ev = _FrozenEvaluators(cfg, grid, quad)
    ev.warm(_warmup_vectors(q, t_q))

    def sqp_with_polish(x_start):
        x, prev_obj, nit, last = x_start, None, 0, None
        for _ in range(polish_rounds):
            last = minimize(
                ev.objective_value,
                x,
                method="SLSQP",
                bounds=bounds,
                constraints=[{"type": "ineq", "fun": ev.constraint_values}],
                options={"maxiter": maxiter, "ftol": ftol, "eps": fd_step},
            )
            nit += int(last.nit)
            x = np.asarray(last.x, dtype=float)
            obj = float(last.fun)
            if prev_obj is not None and prev_obj - obj < polish_tol:
                break
            prev_obj = obj
        return x, nit, last

    start = z0
    total_iters = 0
    used_restarts = 0
    message = ""
    for attempt in range(restarts + 1):
        x_star, nit, res = sqp_with_polish(start.to_array())
        total_iters += nit
        z_star = DecisionVector.from_array(x_star, q)
        oscillating = oscillation_check(z_star, cfg.knots)
        f_star = build_interval_functions(cfg.knots, z_star, t_q)
        dense_cov = _coverage_curve(f_star, cfg, quad, grid.dense_gammas)
        min_cov = float(dense_cov.min())
        argmin_g = float(grid.dense_gammas[int(dense_cov.argmin())])
        ok = min_cov >= 1.0 - cfg.alpha - cov_slack
        message = f"slsqp status {res.status}: {res.message}"
        if oscillating:
            message += "; b spline oscillates"
        if ok and not oscillating:
            break
        if attempt < restarts:
            used_restarts += 1
            start = z_star
            ev.warm([z_star])

    # Minimization starts from a feasible point with objective 0, so a worse
    # final value means the solver went astray; fall back to the start.
    obj_val = objective(f_star, cfg, quad)
    if obj_val > 0.0 and ok:
        z_star = z0
        f_star = build_interval_functions(cfg.knots, z0, t_q)
        obj_val = objective(f_star, cfg, quad)
        dense_cov = _coverage_curve(f_star, cfg, quad, grid.dense_gammas)
        min_cov = float(dense_cov.min())
        argmin_g = float(grid.dense_gammas[int(dense_cov.argmin())])
        ok = min_cov >= 1.0 - cfg.alpha - cov_slack
        message += "; objective exceeded starting value, fell back to standard interval"

    violations = np.array([
        (1.0 - cfg.alpha) - coverage_probability(g, f_star, cfg, quad)
        for g in grid.gammas
    ])
    # the dense coverage certificate is the binding convergence criterion;
    # residual oscillation after the restart budget is only diagnosed
    return SolveReport(
        z_star=z_star,
        objective_value=obj_val,
        min_coverage_dense=min_cov,
        argmin_gamma=argmin_g,
        iterations=total_iters,
        restarts=used_restarts,
        constraint_violations=violations,
        converged=bool(ok),
        max_s_dev_observed=f_star.max_s_deviation(),
        message=message,
        dense_gammas=grid.dense_gammas,
        dense_coverage=dense_cov,
    )
