"""Command-line pipeline: solve for the interval functions, evaluate their
performance curves, apply them to data, and tabulate truncation bounds.

Configuration is a flat INI file; every key can be overridden by an
environment variable PRIORCI_<SECTION>__<KEY>, and file paths / mode / seed /
threads by command-line flags (flag beats environment beats file). Outputs
are deterministic: identical effective configurations produce byte-identical
files.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 data error.
"""

import argparse
import configparser
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, PriorCIError
from .optimizer import ConstraintGrid, solve
from .quadrature import (
    ProblemConfig,
    QuadratureSpec,
    coverage_probability,
    e1_bound,
    e2_bound,
    e3_bound,
    lemma2_value,
    scaled_expected_length,
    truncation_point,
)
from .regression import fit, load_regression_csv, new_interval, standard_interval
from .splines import KnotGrid, build_interval_functions, load_functions, save_functions

ENV_PREFIX = "PRIORCI_"
MODES = ("solve", "curves", "apply", "bounds")


def _fmt(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# configuration loading
# ---------------------------------------------------------------------------

def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    _apply_env_overrides(cp)
    return cp


def _apply_env_overrides(cp: configparser.ConfigParser) -> None:
    for name, value in os.environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, _, key = name[len(ENV_PREFIX):].partition("__")
        section, key = section.lower(), key.lower()
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)


def config_hash(cp: configparser.ConfigParser) -> str:
    items = []
    for section in sorted(cp.sections()):
        for key in sorted(cp[section]):
            items.append(f"{section}.{key}={cp[section][key]}")
    return hashlib.sha256("\n".join(items).encode()).hexdigest()[:16]


def _get(cp, section, key, cast, default=None, required=False):
    try:
        raw = cp[section][key]
    except KeyError:
        if required:
            raise ConfigError(f"missing config key [{section}] {key}") from None
        return default
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc


def _floats(raw: str) -> np.ndarray:
    return np.array([float(t) for t in raw.replace(",", " ").split()])


def problem_from_config(cp) -> ProblemConfig:
    m = _get(cp, "problem", "m", int, required=True)
    rho = _get(cp, "problem", "rho", float, required=True)
    alpha = _get(cp, "problem", "alpha", float, required=True)
    lam = _get(cp, "problem", "lambda", float, default=0.0)
    knots_raw = _get(cp, "problem", "knots", str)
    if knots_raw is not None:
        x = _floats(knots_raw)
        knots = KnotGrid(d=float(x[-1]), q=len(x), x=x,
                         allow_uneven=_get(cp, "problem", "allow_uneven", bool, default=False))
    else:
        d = _get(cp, "problem", "d", float, required=True)
        q = _get(cp, "problem", "q", int, required=True)
        knots = KnotGrid.equidistant(d, q)
    try:
        return ProblemConfig(m=m, rho=rho, alpha=alpha, lam=lam, knots=knots)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def grid_from_config(cp) -> ConstraintGrid:
    try:
        return ConstraintGrid(
            delta=_get(cp, "grid", "delta", float, default=0.5),
            M=_get(cp, "grid", "m", float, default=50.0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def quad_from_config(cp, m: int) -> QuadratureSpec:
    eps = _get(cp, "quad", "eps", float, default=1e-5)
    abs_tol = _get(cp, "quad", "abs_tol", float, default=1e-6)
    max_s_dev = _get(cp, "quad", "max_s_dev", float, default=10.0)
    c = _get(cp, "quad", "c", float)
    try:
        if c is None:
            return QuadratureSpec.for_m(m, eps=eps, abs_tol=abs_tol, max_s_dev=max_s_dev)
        return QuadratureSpec(c=c, abs_tol=abs_tol, max_s_dev=max_s_dev)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _header_lines(cp, seed) -> list:
    return [
        f"# config_hash = {config_hash(cp)}",
        f"# seed = {seed}",
        f"# version = {__version__}",
    ]


# ---------------------------------------------------------------------------
# curve evaluation (optionally parallel across gamma)
# ---------------------------------------------------------------------------

def _curve_point(args):
    gamma, f, cfg, quad = args
    cov = coverage_probability(gamma, f, cfg, quad)
    e = scaled_expected_length(gamma, f, cfg, quad)
    return cov, e


def _length_point(args):
    gamma, f, cfg, quad = args
    return scaled_expected_length(gamma, f, cfg, quad)


def _pmap(fn, tasks, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks, chunksize=32))
    return [fn(t) for t in tasks]


def performance_curves(f, cfg, quad, gammas, workers: int = 1):
    results = _pmap(_curve_point, [(g, f, cfg, quad) for g in gammas], workers)
    cov = np.array([r[0] for r in results])
    e = np.array([r[1] for r in results])
    return cov, e


def length_curve(f, cfg, quad, gammas, workers: int = 1):
    return np.array(_pmap(_length_point, [(g, f, cfg, quad) for g in gammas], workers))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_solve(cp, out_dir, seed, threads) -> int:
    cfg = problem_from_config(cp)
    grid = grid_from_config(cp)
    quad = quad_from_config(cp, cfg.m)
    report = solve(
        cfg, grid, quad,
        restarts=_get(cp, "solver", "restarts", int, default=3),
        maxiter=_get(cp, "solver", "maxiter", int, default=150),
        ftol=_get(cp, "solver", "ftol", float, default=1e-9),
        fd_step=_get(cp, "solver", "fd_step", float, default=1e-6),
        cov_slack=_get(cp, "solver", "cov_slack", float, default=1e-4),
    )
    os.makedirs(out_dir, exist_ok=True)
    f = build_interval_functions(cfg.knots, report.z_star, cfg.t_quant)
    save_functions(os.path.join(out_dir, "functions.csv"), f, cfg.m, cfg.alpha)

    e_curve = length_curve(f, cfg, quad, report.dense_gammas, workers=threads)
    lines = ["# solve report", *_header_lines(cp, seed)]
    lines += [
        f"converged = {str(report.converged).lower()}",
        f"objective_value = {_fmt(report.objective_value)}",
        f"min_coverage_dense = {_fmt(report.min_coverage_dense)}",
        f"argmin_gamma = {_fmt(report.argmin_gamma)}",
        f"iterations = {report.iterations}",
        f"restarts = {report.restarts}",
        f"max_s_dev_observed = {_fmt(report.max_s_dev_observed)}",
        f"message = {report.message}",
        "",
        "[z]",
        "knot,b,s",
    ]
    b_at = np.concatenate([[0.0], report.z_star.b_vals, [0.0]])
    s_at = np.concatenate([report.z_star.s_vals, [cfg.t_quant]])
    for x, b, s in zip(cfg.knots.x, b_at, s_at):
        lines.append(f"{_fmt(x)},{_fmt(b)},{_fmt(s)}")
    lines += ["", "[coverage_curve]", "gamma,coverage"]
    for g, cov in zip(report.dense_gammas, report.dense_coverage):
        lines.append(f"{_fmt(g)},{_fmt(cov)}")
    lines += ["", "[e2_curve]", "gamma,e2"]
    for g, e in zip(report.dense_gammas, e_curve):
        lines.append(f"{_fmt(g)},{_fmt(e * e)}")
    with open(os.path.join(out_dir, "solve_report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if not report.converged:
        print(f"solve did not converge: {report.message}", file=sys.stderr)
        return 3
    return 0


def cmd_curves(cp, functions_path, out_dir, seed, threads) -> int:
    cfg = problem_from_config(cp)
    grid = grid_from_config(cp)
    quad = quad_from_config(cp, cfg.m)
    f, m_file, alpha_file = load_functions(functions_path)
    if m_file != cfg.m or abs(alpha_file - cfg.alpha) > 1e-12:
        raise ConfigError(
            f"functions file was built for m={m_file}, alpha={alpha_file}; "
            f"config has m={cfg.m}, alpha={cfg.alpha}")
    if abs(f.d - cfg.knots.d) > 1e-9 or f.knots.q != cfg.knots.q:
        raise ConfigError("functions file knot grid does not match config")
    gammas = grid.dense_gammas
    cov, e = performance_curves(f, cfg, quad, gammas, workers=threads)
    os.makedirs(out_dir, exist_ok=True)
    lines = ["# performance curves", *_header_lines(cp, seed), "gamma,coverage,e,e2"]
    for g, cv, ee in zip(gammas, cov, e):
        lines.append(f"{_fmt(g)},{_fmt(cv)},{_fmt(ee)},{_fmt(ee * ee)}")
    with open(os.path.join(out_dir, "curves.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def cmd_apply(cp, functions_path, data_path, out_dir, seed) -> int:
    cfg = problem_from_config(cp)
    f, m_file, alpha_file = load_functions(functions_path)
    if abs(alpha_file - cfg.alpha) > 1e-12:
        raise ConfigError("functions file alpha does not match config")
    predictors = [t.strip() for t in _get(cp, "data", "predictors", str, required=True).split(",")]
    data = load_regression_csv(
        data_path,
        response=_get(cp, "data", "response", str, required=True),
        predictors=predictors,
        a=_floats(_get(cp, "data", "a", str, required=True)),
        c_vec=_floats(_get(cp, "data", "c", str, required=True)),
        t_shift=_get(cp, "data", "t", float, default=0.0),
        intercept=_get(cp, "data", "intercept", bool, default=False),
    )
    summary = fit(data)
    if summary.degenerate:
        raise DataError("perfect fit (sigma_hat = 0); intervals are undefined")
    if summary.m != m_file:
        raise ConfigError(
            f"functions file was built for m={m_file} but the data give m={summary.m}")
    lo_std, hi_std = standard_interval(summary, cfg.alpha)
    lo_new, hi_new = new_interval(summary, f)
    os.makedirs(out_dir, exist_ok=True)
    lines = ["# intervals", *_header_lines(cp, seed),
             "interval,lower,center,upper,half_width,gamma_stat"]
    for name, lo, hi in (("standard", lo_std, hi_std), ("new", lo_new, hi_new)):
        lines.append(
            f"{name},{_fmt(lo)},{_fmt(0.5 * (lo + hi))},{_fmt(hi)},"
            f"{_fmt(0.5 * (hi - lo))},{_fmt(summary.gamma_stat)}")
    with open(os.path.join(out_dir, "intervals.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def cmd_bounds(cp, out_dir, seed) -> int:
    cfg = problem_from_config(cp)
    eps = _get(cp, "quad", "eps", float, default=1e-5)
    max_s_dev = _get(cp, "quad", "max_s_dev", float, default=10.0)
    c_sel = truncation_point(cfg.m, eps, max_s_dev)
    c_grid = np.linspace(0.25, max(2.0 * c_sel, 3.0), 40)
    os.makedirs(out_dir, exist_ok=True)
    lines = ["# truncation bounds", *_header_lines(cp, seed),
             f"# selected_c = {_fmt(c_sel)}  (eps = {_fmt(eps)})",
             "c,e1,e2,e3,lemma2,selected"]
    for c in [*c_grid, c_sel]:
        sel = 1 if c == c_sel else 0
        lines.append(
            f"{_fmt(c)},{_fmt(e1_bound(c, cfg.m))},{_fmt(e2_bound(c, cfg.m, max_s_dev))},"
            f"{_fmt(e3_bound(c, cfg.m, max_s_dev))},{_fmt(lemma2_value(c, cfg.m))},{sel}")
    with open(os.path.join(out_dir, "bounds.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="priorci",
        description="Confidence intervals in regression utilizing uncertain prior information",
    )
    p.add_argument("--config", required=True, help="INI configuration file")
    p.add_argument("--mode", choices=MODES, help="override [run] mode")
    p.add_argument("--functions", help="interval-functions file (curves/apply)")
    p.add_argument("--data", help="regression data CSV (apply)")
    p.add_argument("--out", help="output directory (overrides [run] out_dir)")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument("--threads", type=int, help="parallel workers for gamma sweeps")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cp = load_config(args.config)
        mode = args.mode or _get(cp, "run", "mode", str)
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        seed = args.seed if args.seed is not None else _get(cp, "run", "seed", int, default=0)
        threads = args.threads if args.threads is not None else \
            _get(cp, "run", "threads", int, default=1)
        out_dir = args.out or _get(cp, "run", "out_dir", str, default="out")
        functions_path = args.functions or _get(cp, "io", "functions", str)
        data_path = args.data or _get(cp, "io", "data", str)

        if mode == "solve":
            return cmd_solve(cp, out_dir, seed, threads)
        if mode == "curves":
            if not functions_path:
                raise ConfigError("curves mode needs --functions")
            return cmd_curves(cp, functions_path, out_dir, seed, threads)
        if mode == "apply":
            if not functions_path or not data_path:
                raise ConfigError("apply mode needs --functions and --data")
            return cmd_apply(cp, functions_path, data_path, out_dir, seed)
        return cmd_bounds(cp, out_dir, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    except (configparser.Error, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PriorCIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
