"""Truncated double integrals for coverage, scaled expected length and the
minimization criterion, plus the truncation-error bounds that justify the
truncation point.

Evaluation strategy: the outer integral over w is truncated at quad.c and
handled by adaptive Gauss-Kronrod (G7/K15) panels; when c >= 3 the ranges
[0, 2] and [2, c] are integrated separately and summed. For each outer panel
the inner integral over x is evaluated on x panels shared by the 15 outer
nodes, restricted to the region where phi(wx - gamma) has mass, and refined
until the Kronrod-Gauss discrepancy meets the inner tolerance. All integrand
evaluations are vectorized over (w node, x panel, x node) arrays.

A plan object records the panel subdivision so a solver can re-evaluate the
same integral at many nearby decision vectors with frozen panels, which keeps
the computed value a smooth function of the decision vector (finite
differences through the quadrature stay clean).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .special import (
    _log_f_w,
    check_dof,
    chi2_tail,
    expected_w,
    norm_pdf,
    t_quantile,
)
from .splines import IntervalFunctions, KnotGrid

__all__ = [
    "ProblemConfig",
    "QuadratureSpec",
    "QuadratureError",
    "lemma2_value",
    "e1_bound",
    "e2_bound",
    "e3_bound",
    "truncation_point",
    "coverage_probability",
    "scaled_expected_length",
    "objective",
    "DoubleIntegral",
]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemConfig:
    """One instance of the constrained minimization: (m, rho, alpha, lambda, knots)."""

    m: int
    rho: float
    alpha: float
    lam: float
    knots: KnotGrid

    def __post_init__(self):
        check_dof(self.m)
        if not abs(self.rho) < 1.0:
            raise ValueError("need |rho| < 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("need 0 < alpha < 1")
        if self.lam < 0.0:
            raise ValueError("need lambda >= 0")

    @property
    def t_quant(self) -> float:
        return t_quantile(self.m, 1.0 - 0.5 * self.alpha)


@dataclass(frozen=True)
class QuadratureSpec:
    """Truncation point and tolerances governing every double integral."""

    c: float
    split_at: float = 2.0
    split_threshold: float = 3.0
    abs_tol: float = 1e-6
    max_s_dev: float = 10.0

    def __post_init__(self):
        if self.c <= 0 or self.abs_tol <= 0 or self.max_s_dev <= 0:
            raise ValueError("c, abs_tol and max_s_dev must be positive")

    @classmethod
    def for_m(cls, m: int, eps: float = 1e-5, abs_tol: float = 1e-6,
              max_s_dev: float = 10.0) -> "QuadratureSpec":
        """Pick c so every truncation-error bound is at most eps."""
        c = truncation_point(m, eps, max_s_dev)
        return cls(c=c, abs_tol=abs_tol, max_s_dev=max_s_dev)

    def pieces(self):
        """Outer integration ranges; two when the split rule applies."""
        if self.c >= self.split_threshold:
            return ((0.0, self.split_at), (self.split_at, self.c))
        return ((0.0, self.c),)


class QuadratureError(RuntimeError):
    """Quadrature failed to meet its tolerance; carries the partial estimate."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate:.9g}, error={error:.3g})")
        self.estimate = estimate
        self.error = error


# ---------------------------------------------------------------------------
# truncation-error bounds
# ---------------------------------------------------------------------------

def lemma2_value(c: float, m: int) -> float:
    """The exact tail integral of w f_W(w) from c to infinity.

    Equals E(W) * P(Q > m c^2) with Q chi-square on m + 1 degrees of freedom.
    """
    if c < 0.0:
        raise ValueError("lemma2_value requires c >= 0")
    m = check_dof(m)
    return expected_w(m) * chi2_tail(m + 1, m * c * c)


def e1_bound(c: float, m: int) -> float:
    """Bound on the coverage-integral truncation error: P(Q > m c^2), Q ~ chi2_m."""
    if c <= 0.0:
        raise ValueError("e1_bound requires c > 0")
    m = check_dof(m)
    return chi2_tail(m, m * c * c)


def e2_bound(c: float, m: int, max_s_dev: float) -> float:
    """Bound on the expected-length truncation error: max_s_dev * tail of w f_W.

    The tail integral is Lemma 2's closed form, so the coefficient is the
    gamma ratio at m/2 + 1/2 (equivalently E(W)).
    """
    if c <= 0.0:
        raise ValueError("e2_bound requires c > 0")
    if max_s_dev < 0.0:
        raise ValueError("max_s_dev must be nonnegative")
    return max_s_dev * lemma2_value(c, m)


def e3_bound(c: float, m: int, max_s_dev: float) -> float:
    """Bound on the criterion truncation error: half of the e2 bound."""
    return 0.5 * e2_bound(c, m, max_s_dev)


def truncation_point(m: int, eps: float, max_s_dev: float = 10.0) -> float:
    """Smallest c (to 1e-6, by bisection) with all truncation bounds <= eps."""
    m = check_dof(m)
    if not 0.0 < eps < 1.0:
        raise ValueError("truncation_point requires 0 < eps < 1")

    def worst(c):
        return max(e1_bound(c, m), e2_bound(c, m, max_s_dev))

    lo, hi = 1e-6, 1.0
    while worst(hi) > eps:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("failed to bracket the truncation point")
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if worst(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Gauss-Kronrod 7/15 panel machinery
# ---------------------------------------------------------------------------

_XGK = np.array([
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.0,
])
_WGK = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
])
_WG = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469,
])

K_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])          # 15, ascending
K_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
G_MASK = np.zeros(15, dtype=bool)
G_MASK[1::2] = True                                          # Gauss subset
G_WEIGHTS = np.concatenate([_WG[:-1], _WG[::-1]])

_WINDOW_Z = 8.0          # phi is below 1.3e-15 outside +-_WINDOW_Z
_MAX_INNER_PANELS = 600
_MAX_OUTER_PANELS = 300


def _split_edges(edges: np.ndarray, bad: np.ndarray) -> np.ndarray:
    out = [edges[0]]
    for i in range(len(edges) - 1):
        if bad[i]:
            out.append(0.5 * (edges[i] + edges[i + 1]))
        out.append(edges[i + 1])
    return np.asarray(out)


class _Integrand:
    """Vectorized inner integrands of the three double integrals."""

    def __init__(self, kind: str, f: IntervalFunctions, gamma: float, cfg: ProblemConfig):
        self.kind = kind
        self.f = f
        self.gamma = gamma
        self.rho = cfg.rho
        self.t_quant = f.t_quant
        self.sigma_v = math.sqrt(1.0 - cfg.rho * cfg.rho)

    def values(self, w_nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Integrand on the (w, x) grid; shapes (nw, 1, 1) x (np, nx) -> (nw, np, nx)."""
        wcol = w_nodes[:, None, None]
        h = wcol * x[None, :, :] - self.gamma
        if self.kind == "cov":
            bx = self.f.eval_b(x)
            sx = self.f.eval_s(np.abs(x))
            mu = self.rho * h
            lo = (wcol * (bx - sx)[None] - mu) / self.sigma_v
            hi = (wcol * (bx + sx)[None] - mu) / self.sigma_v
            k = ndtr(hi) - ndtr(lo)
            kd = ndtr((self.t_quant * wcol - mu) / self.sigma_v) \
                - ndtr((-self.t_quant * wcol - mu) / self.sigma_v)
            return (k - kd) * norm_pdf(h)
        sx = self.f.eval_s(np.abs(x))
        return (sx - self.t_quant)[None] * norm_pdf(h)


def _inner_window(gamma, w_nodes, x_domain):
    lo_dom, hi_dom = x_domain
    x_lo = max(lo_dom, float(np.min((gamma - _WINDOW_Z) / w_nodes)))
    x_hi = min(hi_dom, float(np.max((gamma + _WINDOW_Z) / w_nodes)))
    return x_lo, x_hi


def _initial_inner_edges(x_lo, x_hi, w_max, knot_spacing):
    h_target = min(0.5 * knot_spacing, 2.0 / w_max)
    n0 = min(96, max(4, int(math.ceil((x_hi - x_lo) / h_target))))
    return np.linspace(x_lo, x_hi, n0 + 1)


def _inner_integrals(integrand, w_nodes, x_domain, knot_spacing, tol, edges, adapt):
    """Inner integral per outer node on shared x panels.

    Returns (values (15,), max inner error, edges actually used).
    """
    if edges is None:
        x_lo, x_hi = _inner_window(integrand.gamma, w_nodes, x_domain)
        if x_lo >= x_hi:
            return np.zeros_like(w_nodes), 0.0, np.empty(0)
        edges = _initial_inner_edges(x_lo, x_hi, float(np.max(w_nodes)), knot_spacing)
    elif len(edges) == 0:
        return np.zeros_like(w_nodes), 0.0, edges

    def eval_edges(edges):
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        x = mid[:, None] + half[:, None] * K_NODES[None, :]
        vals = integrand.values(w_nodes, x)
        kq = (vals @ K_WEIGHTS) * half[None, :]
        gq = (vals[:, :, G_MASK] @ G_WEIGHTS) * half[None, :]
        return kq, np.abs(kq - gq)

    kq, err = eval_edges(edges)
    if adapt:
        for _ in range(12):
            worst = float(err.sum(axis=1).max())
            if worst <= tol or len(edges) > _MAX_INNER_PANELS:
                break
            bad = err.max(axis=0) > tol / err.shape[1]
            if not bad.any():
                bad[err.max(axis=0).argmax()] = True
            edges = _split_edges(edges, bad)
            kq, err = eval_edges(edges)
    return kq.sum(axis=1), float(err.sum(axis=1).max()), edges


class DoubleIntegral:
    """One truncated double integral with a reusable adaptive panel plan.

    kind is 'cov' (coverage deviation, outer weight w f_W) or 'len'
    (s deviation, outer weight w^2 f_W). The plan records outer panels and
    their shared inner x edges; evaluate(f, adapt=False) reuses the stored
    panels unchanged so the result is a smooth function of the knot values.
    """

    def __init__(self, kind: str, gamma: float, cfg: ProblemConfig,
                 quad: QuadratureSpec, x_domain=None, wpow=None):
        if kind not in ("cov", "len"):
            raise ValueError(f"unknown integrand kind {kind!r}")
        self.kind = kind
        self.gamma = float(gamma)
        self.cfg = cfg
        self.quad = quad
        self.x_domain = x_domain if x_domain is not None else (-cfg.knots.d, cfg.knots.d)
        self.wpow = wpow if wpow is not None else (1 if kind == "cov" else 2)
        # plan: per piece, {panel (a, b): inner edges or None}
        self._plan = [{piece: None} for piece in quad.pieces()]

    def _outer_nodes(self, panel):
        a, b = panel
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return mid + half * K_NODES, half

    def _eval_panel(self, integrand, panel, inner_edges, inner_tol, adapt):
        w_nodes, half = self._outer_nodes(panel)
        inner, ierr, edges = _inner_integrals(
            integrand, w_nodes, self.x_domain, self.cfg.knots.spacing,
            inner_tol, inner_edges, adapt)
        outer_vals = inner * np.exp(_log_f_w(w_nodes, self.cfg.m)) * w_nodes ** self.wpow
        kq = float((outer_vals @ K_WEIGHTS) * half)
        gq = float((outer_vals[G_MASK] @ G_WEIGHTS) * half)
        return kq, abs(kq - gq), edges, ierr

    def evaluate(self, f: IntervalFunctions, adapt: bool = True) -> float:
        """Value of the truncated double integral for the functions f."""
        integrand = _Integrand(self.kind, f, self.gamma, self.cfg)
        abs_tol = self.quad.abs_tol
        n_pieces = len(self._plan)
        piece_tol = 0.5 * abs_tol / n_pieces
        inner_tol = abs_tol / 50.0
        total = 0.0
        total_err = 0.0
        for piece_plan in self._plan:
            vals, errs = {}, {}
            for panel in list(piece_plan):
                kq, err, edges, _ = self._eval_panel(
                    integrand, panel, piece_plan[panel], inner_tol, adapt)
                piece_plan[panel] = edges
                vals[panel], errs[panel] = kq, err
            if adapt:
                while sum(errs.values()) > piece_tol and len(piece_plan) < _MAX_OUTER_PANELS:
                    worst = max(errs, key=errs.get)
                    a, b = worst
                    del piece_plan[worst], vals[worst], errs[worst]
                    for child in ((a, 0.5 * (a + b)), (0.5 * (a + b), b)):
                        kq, err, edges, _ = self._eval_panel(
                            integrand, child, None, inner_tol, adapt)
                        piece_plan[child] = edges
                        vals[child], errs[child] = kq, err
            total += sum(vals.values())
            total_err += sum(errs.values())
        if adapt and total_err > abs_tol:
            raise QuadratureError("double integral did not converge", total, total_err)
        return total


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def coverage_probability(gamma: float, f: IntervalFunctions, cfg: ProblemConfig,
                         quad: QuadratureSpec) -> float:
    """Coverage probability of J(b, s) at standardized parameter gamma >= 0."""
    if gamma < 0.0:
        raise ValueError("coverage_probability requires gamma >= 0 (it is even in gamma)")
    return _coverage_signed(gamma, f, cfg, quad)


def _coverage_signed(gamma: float, f: IntervalFunctions, cfg: ProblemConfig,
                     quad: QuadratureSpec) -> float:
    """Coverage at any real gamma, via the defining double integral."""
    integral = DoubleIntegral("cov", gamma, cfg, quad).evaluate(f)
    return (1.0 - cfg.alpha) + integral


def scaled_expected_length(gamma: float, f: IntervalFunctions, cfg: ProblemConfig,
                           quad: QuadratureSpec) -> float:
    """E(length of J)/E(length of standard interval) at gamma >= 0."""
    if gamma < 0.0:
        raise ValueError("scaled_expected_length requires gamma >= 0")
    integral = DoubleIntegral("len", gamma, cfg, quad).evaluate(f)
    return 1.0 + integral / (f.t_quant * expected_w(cfg.m))


def objective(f: IntervalFunctions, cfg: ProblemConfig, quad: QuadratureSpec) -> float:
    """The minimization criterion: lambda * (int s - d t) + the gamma = 0 term.

    The first term integrates the s spline exactly; the second is the
    truncated double integral of (s(x) - t) phi(w x) over x in [0, d] with
    outer weight w^2 f_W.
    """
    lam_term = cfg.lam * (f.s_integral() - cfg.knots.d * f.t_quant)
    integral = DoubleIntegral("len", 0.0, cfg, quad,
                              x_domain=(0.0, cfg.knots.d)).evaluate(f)
    return lam_term + integral
