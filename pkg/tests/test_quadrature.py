"""Quadrature: truncation bounds, Lemma-2 identity, double-integral accuracy
against independent oracles (brute-force nested quadrature and Monte Carlo),
and the structural invariants of the three integrals."""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import ndtr

from priorci.quadrature import (
    DoubleIntegral,
    ProblemConfig,
    QuadratureSpec,
    _coverage_signed,
    coverage_probability,
    e1_bound,
    e2_bound,
    e3_bound,
    lemma2_value,
    objective,
    scaled_expected_length,
    truncation_point,
)
from priorci.special import expected_w, f_w_density, t_quantile
from priorci.splines import DecisionVector, KnotGrid, build_interval_functions, standard_functions

KNOTS = KnotGrid.equidistant(30.0, 7)
CFG = ProblemConfig(m=1, rho=0.4, alpha=0.05, lam=0.2, knots=KNOTS)
T_Q = CFG.t_quant
QUAD = QuadratureSpec.for_m(1)


def random_functions(seed, knots=KNOTS, t_q=T_Q, b_scale=3.0, s_lo=0.3, s_hi=1.5):
    rng = np.random.default_rng(seed)
    z = DecisionVector(
        b_vals=rng.uniform(-b_scale, b_scale, knots.q - 2),
        s_vals=t_q * rng.uniform(s_lo, s_hi, knots.q - 1),
    )
    return build_interval_functions(knots, z, t_q)


# -- truncation bounds ---------------------------------------------------------

def test_lemma2_at_zero_is_expected_w():
    for m in (1, 2, 10, 76):
        assert lemma2_value(0.0, m) == pytest.approx(expected_w(m), abs=1e-14)


def test_lemma2_matches_brute_force_quadrature():
    # frozen spot value for (c=1, m=2): int_1^inf w * 2w e^{-w^2} dw
    assert lemma2_value(1.0, 2) == pytest.approx(0.5072822338117733, abs=1e-12)
    rng = np.random.default_rng(11)
    for _ in range(20):
        m = int(rng.integers(1, 201))
        c = float(rng.uniform(0.0, 3.0))
        ref, _ = integrate.quad(lambda w: w * f_w_density(w, m), c, np.inf, limit=300)
        assert lemma2_value(c, m) == pytest.approx(ref, abs=1e-8)


def test_lemma2_decreases_to_zero():
    vals = [lemma2_value(c, 3) for c in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-12


def test_e1_bound_values():
    # oracle: 2 (1 - Phi(2))
    assert e1_bound(2.0, 1) == pytest.approx(0.04550026389635842, abs=1e-12)
    assert e1_bound(50.0, 3) < 1e-300


def test_e2_e3_bounds():
    # frozen oracle: 10 * E(W) * P(chi2_2 > 9) = 10 sqrt(2/pi) e^{-4.5}
    assert e2_bound(3.0, 1, 10.0) == pytest.approx(0.08863696823876014, abs=1e-12)
    assert e3_bound(3.0, 1, 10.0) == pytest.approx(0.04431848411938007, abs=1e-12)
    assert e2_bound(3.0, 1, 0.0) == 0.0
    assert e2_bound(1.7, 4, 20.0) == pytest.approx(2.0 * e2_bound(1.7, 4, 10.0), rel=1e-14)
    rng = np.random.default_rng(5)
    for _ in range(100):
        m = int(rng.integers(1, 120))
        c = float(rng.uniform(0.1, 4.0))
        dev = float(rng.uniform(0.0, 30.0))
        assert e3_bound(c, m, dev) == pytest.approx(0.5 * e2_bound(c, m, dev), rel=1e-14)


def test_bounds_nonnegative_decreasing_in_c():
    cs = np.linspace(0.2, 4.0, 25)
    for m in (1, 5, 76):
        for fn in (lambda c: e1_bound(c, m),
                   lambda c: e2_bound(c, m, 10.0),
                   lambda c: e3_bound(c, m, 10.0)):
            vals = np.array([fn(c) for c in cs])
            assert np.all(vals >= 0.0)
            assert np.all(np.diff(vals) <= 0.0)


def test_truncation_point_bisection():
    for m, eps in ((1, 1e-4), (1, 1e-5), (7, 1e-4), (76, 1e-4)):
        c = truncation_point(m, eps, 10.0)
        worst = max(e1_bound(c, m), e2_bound(c, m, 10.0), e3_bound(c, m, 10.0))
        assert worst <= eps
        worst_low = max(e1_bound(0.99 * c, m), e2_bound(0.99 * c, m, 10.0))
        assert worst_low > eps
    # monotone in eps, and large m needs a much smaller c
    assert truncation_point(1, 1e-3, 10.0) < truncation_point(1, 1e-5, 10.0)
    assert truncation_point(76, 1e-4, 10.0) < 2.0


def test_truncation_point_rejects_bad_eps():
    with pytest.raises(ValueError):
        truncation_point(3, 0.0, 10.0)
    with pytest.raises(ValueError):
        truncation_point(3, 1.5, 10.0)


# -- standard-interval identities -----------------------------------------------

@pytest.mark.parametrize("m", [1, 5, 76])
@pytest.mark.parametrize("rho", [0.0, 0.4, -1.0 / math.sqrt(2.0)])
def test_standard_functions_identities(m, rho):
    knots = KNOTS
    cfg = ProblemConfig(m=m, rho=rho, alpha=0.05, lam=0.2, knots=knots)
    quad = QuadratureSpec.for_m(m)
    f0 = standard_functions(knots, cfg.t_quant)
    for gamma in (0.0, 1.0, 5.0, 20.0):
        assert coverage_probability(gamma, f0, cfg, quad) == pytest.approx(0.95, abs=1e-6)
        assert scaled_expected_length(gamma, f0, cfg, quad) == pytest.approx(1.0, abs=1e-9)
    assert objective(f0, cfg, quad) == pytest.approx(0.0, abs=1e-9)


# -- double integrals vs independent nested quadrature ---------------------------

def _coverage_reference(gamma, f, cfg, c):
    """Slow scalar nested quadrature of the truncated coverage integral."""
    rho = cfg.rho
    sv = math.sqrt(1.0 - rho * rho)
    t_q = f.t_quant
    d = f.d

    def inner(x, w):
        bx = float(f.eval_b(x))
        sx = float(f.eval_s(abs(x)))
        mu = rho * (w * x - gamma)
        k = ndtr((w * (bx + sx) - mu) / sv) - ndtr((w * (bx - sx) - mu) / sv)
        kd = ndtr((t_q * w - mu) / sv) - ndtr((-t_q * w - mu) / sv)
        return (k - kd) * math.exp(-0.5 * (w * x - gamma) ** 2) / math.sqrt(2 * math.pi)

    def outer(w):
        spike = gamma / w
        pts = sorted({min(max(v, -d), d) for v in (spike - 9 / w, spike, spike + 9 / w)})
        val, _ = integrate.quad(inner, -d, d, args=(w,), points=pts,
                                limit=500, epsabs=1e-12, epsrel=1e-11)
        return val * f_w_density(w, cfg.m) * w

    val, _ = integrate.quad(outer, 1e-12, c, limit=500, epsabs=1e-11, epsrel=1e-10)
    return (1.0 - cfg.alpha) + val


@pytest.mark.parametrize("seed,gamma", [(1, 0.0), (2, 1.5), (3, 6.0)])
def test_coverage_against_nested_quad_oracle(seed, gamma):
    f = random_functions(seed)
    val = coverage_probability(gamma, f, CFG, QUAD)
    ref = _coverage_reference(gamma, f, CFG, QUAD.c)
    assert val == pytest.approx(ref, abs=5e-8)


def test_length_against_nested_quad_oracle():
    f = random_functions(9)
    gamma = 2.0

    def inner(x, w):
        return (float(f.eval_s(abs(x))) - T_Q) * math.exp(-0.5 * (w * x - gamma) ** 2) \
            / math.sqrt(2 * math.pi)

    def outer(w):
        spike = gamma / w
        pts = sorted({min(max(v, -30.0), 30.0) for v in (spike - 9 / w, spike, spike + 9 / w)})
        val, _ = integrate.quad(inner, -30.0, 30.0, args=(w,), points=pts,
                                limit=500, epsabs=1e-12, epsrel=1e-11)
        return val * f_w_density(w, 1) * w * w

    ref_int, _ = integrate.quad(outer, 1e-12, QUAD.c, limit=500, epsabs=1e-11, epsrel=1e-10)
    ref = 1.0 + ref_int / (T_Q * expected_w(1))
    val = scaled_expected_length(gamma, f, CFG, QUAD)
    assert val == pytest.approx(ref, abs=1e-7)


def test_objective_against_nested_quad_oracle():
    f = random_functions(13)

    def inner(x, w):
        return (float(f.eval_s(x)) - T_Q) * math.exp(-0.5 * (w * x) ** 2) / math.sqrt(2 * math.pi)

    def outer(w):
        pts = sorted({min(max(v, 0.0), 30.0) for v in (0.0, 9 / w)})
        val, _ = integrate.quad(inner, 0.0, 30.0, args=(w,), points=pts,
                                limit=500, epsabs=1e-12, epsrel=1e-11)
        return val * f_w_density(w, 1) * w * w

    ref_int, _ = integrate.quad(outer, 1e-12, QUAD.c, limit=500, epsabs=1e-11, epsrel=1e-10)
    s_int, _ = integrate.quad(lambda x: float(f.eval_s(x)), 0.0, 30.0,
                              limit=300, epsabs=1e-11, epsrel=1e-11)
    ref = CFG.lam * (s_int - 30.0 * T_Q) + ref_int
    assert objective(f, CFG, QUAD) == pytest.approx(ref, abs=1e-6)


# -- Monte Carlo oracle -----------------------------------------------------------

def simulate_coverage_and_length(f, cfg, gamma, n, seed):
    """Direct simulation of the joint law behind the coverage formula."""
    rng = np.random.default_rng(seed)
    w = np.sqrt(rng.chisquare(cfg.m, n) / cfg.m)
    g2 = rng.standard_normal(n)
    g1 = cfg.rho * g2 + math.sqrt(1.0 - cfg.rho ** 2) * rng.standard_normal(n)
    h = gamma + g2
    ratio = h / w
    b = f.eval_b(ratio)
    s = f.eval_s(np.abs(ratio))
    covered = np.abs(g1 - w * b) <= w * s
    length_ratio = w * s / (f.t_quant * expected_w(cfg.m))
    return covered, length_ratio


def test_coverage_against_monte_carlo():
    f = random_functions(21)
    n = 400_000
    for gamma in (0.0, 2.0):
        covered, _ = simulate_coverage_and_length(f, CFG, gamma, n, seed=100 + int(gamma))
        p_hat = covered.mean()
        se = math.sqrt(p_hat * (1 - p_hat) / n)
        val = coverage_probability(gamma, f, CFG, QUAD)
        assert abs(val - p_hat) < 3.0 * se


def test_length_against_monte_carlo():
    f = random_functions(22)
    gamma = 1.0
    n = 400_000
    _, ratio = simulate_coverage_and_length(f, CFG, gamma, n, seed=7)
    se = ratio.std(ddof=1) / math.sqrt(n)
    val = scaled_expected_length(gamma, f, CFG, QUAD)
    assert abs(val - ratio.mean()) < 3.0 * se


# -- structural invariants ----------------------------------------------------------

def test_coverage_even_in_gamma():
    f = random_functions(31)
    for gamma in (0.5, 2.0, 7.0):
        plus = _coverage_signed(gamma, f, CFG, QUAD)
        minus = _coverage_signed(-gamma, f, CFG, QUAD)
        assert abs(plus - minus) <= 2.0 * QUAD.abs_tol


def test_truncation_consistency():
    """Enlarging c moves the value by at most the relevant bound."""
    for seed in (41, 42, 43):
        f = random_functions(seed)
        dev = f.max_s_deviation()
        q1 = QUAD
        q2 = QuadratureSpec(c=2.0 * QUAD.c, abs_tol=QUAD.abs_tol)
        gamma = 1.0
        c1 = coverage_probability(gamma, f, CFG, q1)
        c2 = coverage_probability(gamma, f, CFG, q2)
        assert abs(c1 - c2) <= e1_bound(q1.c, CFG.m) + 2 * QUAD.abs_tol
        e1v = scaled_expected_length(gamma, f, CFG, q1)
        e2v = scaled_expected_length(gamma, f, CFG, q2)
        scale = T_Q * expected_w(CFG.m)
        assert abs(e1v - e2v) * scale <= e2_bound(q1.c, CFG.m, dev) + 2 * QUAD.abs_tol
        o1 = objective(f, CFG, q1)
        o2 = objective(f, CFG, q2)
        assert abs(o1 - o2) <= e3_bound(q1.c, CFG.m, dev) + 2 * QUAD.abs_tol


def test_split_rule_equivalence():
    """With c >= 3 the split evaluation matches a single-range evaluation."""
    knots = KNOTS
    cfg = ProblemConfig(m=5, rho=0.4, alpha=0.05, lam=0.2, knots=knots)
    t_q = cfg.t_quant
    f = random_functions(55, knots=knots, t_q=t_q)
    quad_split = QuadratureSpec(c=3.5, abs_tol=1e-7)
    quad_whole = QuadratureSpec(c=3.5, split_threshold=10.0, abs_tol=1e-7)
    assert quad_split.pieces() == ((0.0, 2.0), (2.0, 3.5))
    assert quad_whole.pieces() == ((0.0, 3.5),)
    for gamma in (0.0, 2.0):
        a = coverage_probability(gamma, f, cfg, quad_split)
        b = coverage_probability(gamma, f, cfg, quad_whole)
        assert abs(a - b) <= 2.0 * quad_split.abs_tol


def test_rho_zero_needs_no_special_case():
    cfg = ProblemConfig(m=2, rho=0.0, alpha=0.05, lam=0.2, knots=KNOTS)
    quad = QuadratureSpec.for_m(2)
    f = random_functions(77, t_q=cfg.t_quant)
    val = coverage_probability(1.0, f, cfg, quad)
    ref = _coverage_reference(1.0, f, cfg, quad.c)
    assert val == pytest.approx(ref, abs=5e-8)


def test_coverage_in_unit_interval_and_length_positive():
    for seed in (61, 62, 63, 64):
        f = random_functions(seed)
        gamma = float(np.random.default_rng(seed).uniform(0, 10))
        cov = coverage_probability(gamma, f, CFG, QUAD)
        assert -QUAD.abs_tol <= cov <= 1.0 + QUAD.abs_tol
        assert scaled_expected_length(gamma, f, CFG, QUAD) > 0.0


def test_widening_s_raises_coverage():
    z = DecisionVector(b_vals=np.zeros(5), s_vals=np.full(6, 1.1 * T_Q))
    f = build_interval_functions(KNOTS, z, T_Q)
    for gamma in (0.0, 3.0):
        assert coverage_probability(gamma, f, CFG, QUAD) > 0.95


def test_objective_decreases_when_s_decreases():
    """Lowering any single s knot value lowers the criterion (lambda > 0)."""
    rng = np.random.default_rng(71)
    base = DecisionVector(b_vals=rng.uniform(-1, 1, 5), s_vals=T_Q * rng.uniform(0.8, 1.2, 6))
    f_base = objective(build_interval_functions(KNOTS, base, T_Q), CFG, QUAD)
    for i in range(6):
        s = base.s_vals.copy()
        s[i] -= 0.05 * T_Q
        lowered = objective(
            build_interval_functions(KNOTS, DecisionVector(base.b_vals, s), T_Q), CFG, QUAD)
        assert lowered < f_base


def test_lambda_zero_drops_the_area_term():
    f = random_functions(81)
    cfg0 = ProblemConfig(m=1, rho=0.4, alpha=0.05, lam=0.0, knots=KNOTS)
    pure = objective(f, cfg0, QUAD)
    with_lam = objective(f, CFG, QUAD)
    assert with_lam == pytest.approx(pure + CFG.lam * (f.s_integral() - 30.0 * T_Q), abs=1e-9)


def test_gamma_must_be_nonnegative():
    f = random_functions(91)
    with pytest.raises(ValueError):
        coverage_probability(-1.0, f, CFG, QUAD)
    with pytest.raises(ValueError):
        scaled_expected_length(-0.5, f, CFG, QUAD)
