"""Spline representation of the interval functions (b, s).

b is an odd cubic spline on [-d, d] that vanishes at |x| >= d with clamped
end derivatives b'(+-d) = 0; s is a cubic spline on [0, d] pinned to the t
quantile at d and held constant beyond it. Both are immutable once built and
evaluate on scalars or arrays.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "KnotGrid",
    "DecisionVector",
    "IntervalFunctions",
    "build_interval_functions",
    "standard_decision_vector",
    "save_functions",
    "load_functions",
]

B_BOUND = 100.0
S_BOUND = 200.0


@dataclass(frozen=True)
class KnotGrid:
    """Knots 0 = x_1 < x_2 < ... < x_q = d."""

    d: float
    q: int
    x: np.ndarray
    allow_uneven: bool = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if self.d <= 0:
            raise ValueError("d must be positive")
        if self.q < 3 or len(x) != self.q:
            raise ValueError(f"need q >= 3 knots, got q={self.q}, len(x)={len(x)}")
        if x[0] != 0.0 or abs(x[-1] - self.d) > 1e-12 * max(1.0, self.d):
            raise ValueError("knots must start at 0 and end at d")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knots must be strictly increasing")
        if not self.allow_uneven:
            h = self.d / (self.q - 1)
            if np.max(np.abs(np.diff(x) - h)) > 1e-12 * max(1.0, self.d):
                raise ValueError("knots are not equally spaced (pass allow_uneven=True to permit)")

    @classmethod
    def equidistant(cls, d: float, q: int) -> "KnotGrid":
        return cls(d=float(d), q=int(q), x=np.linspace(0.0, float(d), int(q)))

    @property
    def spacing(self) -> float:
        return self.d / (self.q - 1)


@dataclass(frozen=True)
class DecisionVector:
    """Free knot values: b at the interior knots, s at all knots but the last.

    The remaining values are fixed by construction: b(x_1) = b(x_q) = 0 and
    s(x_q) = t quantile.
    """

    b_vals: np.ndarray
    s_vals: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b_vals, dtype=float))
        s = np.atleast_1d(np.asarray(self.s_vals, dtype=float))
        object.__setattr__(self, "b_vals", b)
        object.__setattr__(self, "s_vals", s)
        if np.any(np.abs(b) > B_BOUND):
            raise ValueError(f"b values must lie in [-{B_BOUND}, {B_BOUND}]")
        if np.any(s > S_BOUND) or np.any(s < 0.0):
            raise ValueError(f"s values must lie in [0, {S_BOUND}]")

    @classmethod
    def from_array(cls, z: np.ndarray, q: int) -> "DecisionVector":
        z = np.asarray(z, dtype=float)
        if len(z) != 2 * q - 3:
            raise ValueError(f"expected {2 * q - 3} entries for q={q}, got {len(z)}")
        return cls(b_vals=z[: q - 2], s_vals=z[q - 2 :])

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.b_vals, self.s_vals])


def standard_decision_vector(q: int, t_quant: float) -> DecisionVector:
    """The standard-interval point: b = 0 everywhere, s = t quantile."""
    return DecisionVector(b_vals=np.zeros(q - 2), s_vals=np.full(q - 1, t_quant))


@dataclass(frozen=True)
class IntervalFunctions:
    """Immutable spline tables for (b, s) plus the constants of Restriction 3."""

    knots: KnotGrid
    z: DecisionVector
    t_quant: float
    _b_spline: CubicSpline = field(repr=False)
    _s_spline: CubicSpline = field(repr=False)

    @property
    def d(self) -> float:
        return self.knots.d

    def eval_b(self, x):
        """Odd center-shift function; identically 0 for |x| >= d."""
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) < self.d
        out = np.where(inside, self._b_spline(np.clip(x, -self.d, self.d)), 0.0)
        return float(out) if out.ndim == 0 else out

    def eval_s(self, x):
        """Half-width function on [0, inf); equals t_quant for x >= d."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0):
            raise ValueError("eval_s requires x >= 0")
        inside = x < self.d
        out = np.where(inside, self._s_spline(np.clip(x, 0.0, self.d)), self.t_quant)
        return float(out) if out.ndim == 0 else out

    def max_s_deviation(self, n_grid: int = 2000) -> float:
        """sup over y >= 0 of |s(y) - t_quant|, estimated on a fine grid."""
        xs = np.linspace(0.0, self.d, n_grid)
        return float(np.max(np.abs(self.eval_s(xs) - self.t_quant)))

    def s_integral(self) -> float:
        """Exact integral of the s spline over [0, d]."""
        return float(self._s_spline.integrate(0.0, self.d))


def build_interval_functions(knots: KnotGrid, z: DecisionVector, t_quant: float) -> IntervalFunctions:
    """Interpolate the knot values of z into evaluable (b, s) splines.

    b is built over the full symmetric knot set (-x_q, ..., x_q) from the odd
    extension of its values, with end derivatives clamped to zero; s uses a
    natural spline on [0, d] with s(x_q) = t_quant appended.
    """
    q = knots.q
    if len(z.b_vals) != q - 2 or len(z.s_vals) != q - 1:
        raise ValueError(
            f"decision vector dimensions {len(z.b_vals)}/{len(z.s_vals)} do not match q={q}"
        )
    b_full = np.concatenate([[0.0], z.b_vals, [0.0]])
    x_sym = np.concatenate([-knots.x[::-1][:-1], knots.x])
    b_sym = np.concatenate([-b_full[::-1][:-1], b_full])
    b_spline = CubicSpline(x_sym, b_sym, bc_type=((1, 0.0), (1, 0.0)))
    s_data = np.concatenate([z.s_vals, [t_quant]])
    s_spline = CubicSpline(knots.x, s_data, bc_type="natural")
    return IntervalFunctions(knots=knots, z=z, t_quant=float(t_quant),
                             _b_spline=b_spline, _s_spline=s_spline)


def standard_functions(knots: KnotGrid, t_quant: float) -> IntervalFunctions:
    """The (b, s) pair reproducing the standard interval exactly."""
    return build_interval_functions(knots, standard_decision_vector(knots.q, t_quant), t_quant)


# ---------------------------------------------------------------------------
# plain-text serialization: header metadata plus one row per knot
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_functions(path, f: IntervalFunctions, m: int, alpha: float) -> None:
    """Write the knot table `x_i, b(x_i), s(x_i)` with header metadata."""
    lines = [
        "# interval functions (b, s) knot table",
        f"# d = {_fmt(f.d)}",
        f"# q = {f.knots.q}",
        f"# t_quant = {_fmt(f.t_quant)}",
        f"# alpha = {_fmt(alpha)}",
        f"# m = {int(m)}",
        "x,b,s",
    ]
    b_at = np.concatenate([[0.0], f.z.b_vals, [0.0]])
    s_at = np.concatenate([f.z.s_vals, [f.t_quant]])
    for x, b, s in zip(f.knots.x, b_at, s_at):
        lines.append(f"{_fmt(x)},{_fmt(b)},{_fmt(s)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_functions(path):
    """Read a knot table; returns (IntervalFunctions, m, alpha)."""
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, _, val = line[1:].partition("=")
                    meta[key.strip()] = val.strip()
                continue
            if line.startswith("x,"):
                continue
            rows.append([float(t) for t in line.split(",")])
    try:
        d = float(meta["d"])
        q = int(meta["q"])
        t_quant = float(meta["t_quant"])
        alpha = float(meta["alpha"])
        m = int(meta["m"])
    except KeyError as exc:
        raise ValueError(f"functions file is missing header field {exc}") from exc
    arr = np.asarray(rows, dtype=float)
    if arr.shape != (q, 3):
        raise ValueError(f"expected {q} knot rows, got {arr.shape[0]}")
    knots = KnotGrid(d=d, q=q, x=arr[:, 0], allow_uneven=True)
    z = DecisionVector(b_vals=arr[1:-1, 1], s_vals=arr[:-1, 2])
    f = build_interval_functions(knots, z, t_quant)
    return f, m, alpha
