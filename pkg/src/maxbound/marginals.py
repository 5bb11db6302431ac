"""Marginal term structures given by their call-price surfaces.

A family here is a map t -> mu_t of centered laws on the real line, indexed by
t in [0, 1] and non-decreasing in convex order, with mu_0 = delta_0.  Everything
downstream (the cost solver, the embedding simulator, the hedge verifier) talks
to a family only through call prices c(t, x) = E[(X_t - x)+] and the derived
quantities: the time derivative of the call, the cdf/quantile, the upper-tail
barycenter b_t(x) = E[X_t | X_t >= x] and its inverse.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, stats

ArrayLike = Union[float, np.ndarray]

# Tolerances used when a grid check does not say otherwise.
ANALYTIC_TOL = 1e-8
TABULATED_TOL = 1e-4


class FamilyValidationError(ValueError):
    """A family failed a structural check (convex order, centering, ...)."""

    def __init__(self, message: str, report: Optional["ValidationReport"] = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Violation:
    kind: str
    t: float
    x: float
    magnitude: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "t": float(self.t),
            "x": float(self.x),
            "magnitude": float(self.magnitude),
        }


@dataclass
class ValidationReport:
    ok: bool
    violations: List[Violation] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pass": bool(self.ok),
            "violations": [v.to_dict() for v in self.violations],
        }


def _as_array(x: ArrayLike) -> np.ndarray:
    return np.asarray(x, dtype=float)


class MarginalFamily:
    """Common interface for a term structure of centered marginals."""

    kind: str = "abstract"

    # --- primitives every family must provide -------------------------------

    def call_price(self, t: float, x: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def dt_call(self, t: float, x: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def cdf(self, t: float, x: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def quantile(self, t: float, p: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def survival(self, t: float, x: ArrayLike) -> ArrayLike:
        """mu_t([x, inf)), atom at x included."""
        raise NotImplementedError

    def right_endpoint(self, t: float) -> float:
        """Essential supremum of mu_t (may be +inf)."""
        raise NotImplementedError

    # --- derived quantities --------------------------------------------------

    def barycenter(self, t: float, x: ArrayLike) -> ArrayLike:
        """b_t(x) = E[X_t | X_t >= x]; equals x at and above the right endpoint."""
        if t <= 0.0:
            raise ValueError("barycenter needs t > 0")
        x = _as_array(x)
        r = self.right_endpoint(t)
        out = np.where(x >= r, x, 0.0)
        inside = x < r
        if np.any(inside):
            xi = x[inside] if x.ndim else x
            tail = _as_array(self.survival(t, xi))
            call = _as_array(self.call_price(t, xi))
            out_in = xi + call / tail
            if x.ndim:
                out[inside] = out_in
            else:
                out = out_in
        return out if x.ndim else float(out)

    def barycenter_inverse(self, t: float, m: float) -> float:
        """Smallest x with b_t(x) >= m, for m strictly between 0 and the right endpoint."""
        if t <= 0.0:
            raise ValueError("barycenter_inverse needs t > 0")
        r = self.right_endpoint(t)
        if not (0.0 < m < r):
            raise ValueError(f"m={m} outside the barycenter range (0, {r})")
        f = lambda x: self.barycenter(t, x) - m
        hi = m  # b(x) > x, so the root is below m
        lo = min(m, 0.0) - 1.0
        for _ in range(200):
            if f(lo) < 0.0:
                break
            lo = 2.0 * lo - abs(m) - 1.0
        else:
            raise RuntimeError("could not bracket the barycenter inverse")
        return float(optimize.brentq(f, lo, hi, xtol=1e-13))

    def validate(
        self,
        t_grid: Optional[Sequence[float]] = None,
        x_grid: Optional[Sequence[float]] = None,
        tol: Optional[float] = None,
    ) -> ValidationReport:
        return check_peacock(self, t_grid=t_grid, x_grid=x_grid, tol=tol)


# ---------------------------------------------------------------------------
# Analytic families
# ---------------------------------------------------------------------------


class GaussianFamily(MarginalFamily):
    """mu_t = N(0, sigma^2 t): the Bachelier-style diffusing family."""

    kind = "gaussian"

    def __init__(self, sigma: float = 1.0):
        if sigma <= 0.0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)

    def _scale(self, t: float) -> float:
        return self.sigma * np.sqrt(t)

    def call_price(self, t, x):
        x = _as_array(x)
        if t <= 0.0:
            out = np.maximum(-x, 0.0)
            return out if x.ndim else float(out)
        s = self._scale(t)
        u = x / s
        out = s * stats.norm.pdf(u) - x * stats.norm.sf(u)
        return out if x.ndim else float(out)

    def dt_call(self, t, x):
        x = _as_array(x)
        if t <= 0.0:
            out = np.where(x == 0.0, np.inf, 0.0)
            return out if x.ndim else float(out)
        s = self._scale(t)
        out = self.sigma * stats.norm.pdf(x / s) / (2.0 * np.sqrt(t))
        return out if x.ndim else float(out)

    def cdf(self, t, x):
        x = _as_array(x)
        if t <= 0.0:
            out = (x >= 0.0).astype(float)
            return out if x.ndim else float(out)
        out = stats.norm.cdf(x / self._scale(t))
        return out if x.ndim else float(out)

    def quantile(self, t, p):
        p = _as_array(p)
        if np.any((p < 0.0) | (p > 1.0)):
            raise ValueError("quantile level outside [0, 1]")
        if t <= 0.0:
            out = np.zeros_like(p)
            return out if p.ndim else float(out)
        out = self._scale(t) * stats.norm.ppf(p)
        return out if p.ndim else float(out)

    def survival(self, t, x):
        x = _as_array(x)
        if t <= 0.0:
            out = (x <= 0.0).astype(float)
            return out if x.ndim else float(out)
        out = stats.norm.sf(x / self._scale(t))
        return out if x.ndim else float(out)

    def right_endpoint(self, t: float) -> float:
        return np.inf

    def barycenter(self, t, x):
        if t <= 0.0:
            raise ValueError("barycenter needs t > 0")
        x = _as_array(x)
        s = self._scale(t)
        u = x / s
        # b(x) = s * pdf(u)/sf(u); switch to the Mills-ratio asymptote deep in
        # the right tail where sf underflows.
        out = np.empty_like(u)
        far = u > 30.0
        near = ~far
        if np.any(near):
            un = u[near] if u.ndim else u
            out_n = s * stats.norm.pdf(un) / stats.norm.sf(un)
            if u.ndim:
                out[near] = out_n
            else:
                out = out_n
        if np.any(far):
            uf = u[far] if u.ndim else u
            out_f = s * (uf + 1.0 / uf - 2.0 / uf**3)
            if u.ndim:
                out[far] = out_f
            else:
                out = out_f
        return out if x.ndim else float(out)


class ScaledUniformFamily(MarginalFamily):
    """mu_t = law of sqrt(t) * X with X uniform on [-a, a]."""

    kind = "scaled-uniform"

    def __init__(self, half_width: float = 1.0):
        if half_width <= 0.0:
            raise ValueError("half_width must be positive")
        self.half_width = float(half_width)

    def right_endpoint(self, t: float) -> float:
        return self.half_width * np.sqrt(t)

    def call_price(self, t, x):
        x = _as_array(x)
        if t <= 0.0:
            out = np.maximum(-x, 0.0)
            return out if x.ndim else float(out)
        a = self.half_width
        rt = np.sqrt(t)
        u = x / rt
        out = np.where(
            u <= -a,
            -x,
            np.where(u >= a, 0.0, rt * (a - np.clip(u, -a, a)) ** 2 / (4.0 * a)),
        )
        return out if x.ndim else float(out)

    def dt_call(self, t, x):
        x = _as_array(x)
        if t <= 0.0:
            out = np.where(x == 0.0, np.inf, 0.0)
            return out if x.ndim else float(out)
        a = self.half_width
        u = x / np.sqrt(t)
        inside = np.abs(u) < a
        out = np.where(inside, (a * a - np.clip(u, -a, a) ** 2) / (8.0 * a * np.sqrt(t)), 0.0)
        return out if x.ndim else float(out)

    def cdf(self, t, x):
        x = _as_array(x)
        if t <= 0.0:
            out = (x >= 0.0).astype(float)
            return out if x.ndim else float(out)
        a = self.half_width
        out = np.clip((x / np.sqrt(t) + a) / (2.0 * a), 0.0, 1.0)
        return out if x.ndim else float(out)

    def quantile(self, t, p):
        p = _as_array(p)
        if np.any((p < 0.0) | (p > 1.0)):
            raise ValueError("quantile level outside [0, 1]")
        if t <= 0.0:
            out = np.zeros_like(p)
            return out if p.ndim else float(out)
        a = self.half_width
        out = np.sqrt(t) * (2.0 * a * p - a)
        return out if p.ndim else float(out)

    def survival(self, t, x):
        x = _as_array(x)
        if t <= 0.0:
            out = (x <= 0.0).astype(float)
            return out if x.ndim else float(out)
        a = self.half_width
        out = np.clip((a - x / np.sqrt(t)) / (2.0 * a), 0.0, 1.0)
        return out if x.ndim else float(out)

    def barycenter(self, t, x):
        if t <= 0.0:
            raise ValueError("barycenter needs t > 0")
        x = _as_array(x)
        r = self.right_endpoint(t)
        out = np.where(x >= r, x, np.where(x <= -r, 0.0, (r + x) / 2.0))
        return out if x.ndim else float(out)

    def barycenter_inverse(self, t: float, m: float) -> float:
        if t <= 0.0:
            raise ValueError("barycenter_inverse needs t > 0")
        r = self.right_endpoint(t)
        if not (0.0 < m < r):
            raise ValueError(f"m={m} outside the barycenter range (0, {r})")
        return 2.0 * m - r


# ---------------------------------------------------------------------------
# Tabulated surfaces
# ---------------------------------------------------------------------------


class CallSurface:
    """Rectangular grid of call prices: rows indexed by t, columns by x.

    Interpolation is linear in t and piecewise linear in x.  Piecewise-linear
    columns keep convexity and monotonicity of convex decreasing data and
    correspond to an atomic law sitting on the x nodes, which is what the
    cdf/quantile/barycenter readouts assume.
    """

    def __init__(self, t_grid: np.ndarray, x_grid: np.ndarray, values: np.ndarray):
        t_grid = np.asarray(t_grid, dtype=float)
        x_grid = np.asarray(x_grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if t_grid.ndim != 1 or x_grid.ndim != 1:
            raise ValueError("t_grid and x_grid must be one-dimensional")
        if values.shape != (t_grid.size, x_grid.size):
            raise ValueError("values must have shape (len(t_grid), len(x_grid))")
        if np.any(np.diff(t_grid) <= 0.0) or np.any(np.diff(x_grid) <= 0.0):
            raise ValueError("grids must be strictly increasing")
        if t_grid[0] < 0.0 or t_grid[-1] > 1.0:
            raise ValueError("t_grid must lie in [0, 1]")
        self.t_grid = t_grid
        self.x_grid = x_grid
        self.values = values

    def row(self, t: float) -> np.ndarray:
        """Call prices at time t on the x grid (linear interpolation in t)."""
        tg = self.t_grid
        if t <= tg[0]:
            return self.values[0]
        if t >= tg[-1]:
            return self.values[-1]
        j = int(np.searchsorted(tg, t, side="right")) - 1
        w = (t - tg[j]) / (tg[j + 1] - tg[j])
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]

    def dt_row(self, t: float) -> np.ndarray:
        """Row of time derivatives: central differences inside, one-sided at the ends."""
        tg, v = self.t_grid, self.values
        n = tg.size
        if n < 2:
            raise ValueError("need at least two t rows for a time derivative")
        d = np.empty_like(v)
        d[0] = (v[1] - v[0]) / (tg[1] - tg[0])
        d[-1] = (v[-1] - v[-2]) / (tg[-1] - tg[-2])
        for j in range(1, n - 1):
            d[j] = (v[j + 1] - v[j - 1]) / (tg[j + 1] - tg[j - 1])
        if t <= tg[0]:
            return d[0]
        if t >= tg[-1]:
            return d[-1]
        j = int(np.searchsorted(tg, t, side="right")) - 1
        w = (t - tg[j]) / (tg[j + 1] - tg[j])
        return (1.0 - w) * d[j] + w * d[j + 1]


def _interp_call(x_grid: np.ndarray, row: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Piecewise-linear call readout with slope -1 below and 0 above the grid."""
    out = np.interp(x, x_grid, row)
    left = x < x_grid[0]
    right = x > x_grid[-1]
    if np.any(left):
        out = np.where(left, row[0] + (x_grid[0] - x), out)
    if np.any(right):
        out = np.where(right, row[-1], out)
    return out


class TabulatedFamily(MarginalFamily):
    kind = "tabulated"

    def __init__(self, surface: CallSurface):
        self.surface = surface

    def call_price(self, t, x):
        x = _as_array(x)
        row = self.surface.row(t)
        out = _interp_call(self.surface.x_grid, row, np.atleast_1d(x))
        return out if x.ndim else float(out[0])

    def dt_call(self, t, x):
        x = _as_array(x)
        row = self.surface.dt_row(t)
        out = np.interp(np.atleast_1d(x), self.surface.x_grid, row, left=0.0, right=0.0)
        return out if x.ndim else float(out[0])

    def _slopes(self, t: float) -> np.ndarray:
        row = self.surface.row(t)
        return np.diff(row) / np.diff(self.surface.x_grid)

    def cdf(self, t, x):
        x = _as_array(x)
        xg = self.surface.x_grid
        s = self._slopes(t)
        # F is right-continuous and constant on [x_i, x_{i+1}).
        idx = np.searchsorted(xg, np.atleast_1d(x), side="right") - 1
        out = np.empty(idx.shape, dtype=float)
        out[idx < 0] = 0.0
        out[idx >= s.size] = 1.0
        inside = (idx >= 0) & (idx < s.size)
        out[inside] = 1.0 + s[idx[inside]]
        out = np.clip(out, 0.0, 1.0)
        return out if x.ndim else float(out[0])

    def survival(self, t, x):
        x = _as_array(x)
        xg = self.surface.x_grid
        s = self._slopes(t)
        # Tail mass including an atom at x: minus the slope just left of x.
        idx = np.searchsorted(xg, np.atleast_1d(x), side="left") - 1
        out = np.empty(idx.shape, dtype=float)
        out[idx < 0] = 1.0
        out[idx >= s.size] = 0.0
        inside = (idx >= 0) & (idx < s.size)
        out[inside] = -s[idx[inside]]
        out = np.clip(out, 0.0, 1.0)
        return out if x.ndim else float(out[0])

    def quantile(self, t, p):
        p = _as_array(p)
        if np.any((p < 0.0) | (p > 1.0)):
            raise ValueError("quantile level outside [0, 1]")
        xg = self.surface.x_grid
        fcell = np.clip(1.0 + self._slopes(t), 0.0, 1.0)
        idx = np.searchsorted(fcell, np.atleast_1d(p), side="left")
        idx = np.minimum(idx, xg.size - 1)
        out = xg[idx]
        return out if p.ndim else float(out[0])

    def right_endpoint(self, t: float) -> float:
        xg = self.surface.x_grid
        s = self._slopes(t)
        with_mass = np.nonzero(s < -1e-14)[0]
        if with_mass.size == 0:
            return xg[0]
        return float(xg[with_mass[-1] + 1])

    def barycenter(self, t, x):
        if t <= 0.0:
            raise ValueError("barycenter needs t > 0")
        x = _as_array(x)
        call = _as_array(self.call_price(t, x))
        tail = _as_array(self.survival(t, x))
        r = self.right_endpoint(t)
        xa = np.atleast_1d(x)
        out = np.where(xa >= r, xa, xa + np.atleast_1d(call) / np.maximum(np.atleast_1d(tail), 1e-300))
        return out if x.ndim else float(out[0])

    def barycenter_inverse(self, t: float, m: float) -> float:
        if t <= 0.0:
            raise ValueError("barycenter_inverse needs t > 0")
        r = self.right_endpoint(t)
        if not (0.0 < m < r):
            raise ValueError(f"m={m} outside the barycenter range (0, {r})")
        xg = self.surface.x_grid
        row = self.surface.row(t)
        s = np.diff(row) / np.diff(xg)
        # On each cell the barycenter is constant: x_i + c_i / tail_i.
        with np.errstate(divide="ignore", invalid="ignore"):
            bcell = np.where(s < -1e-14, xg[:-1] - row[:-1] / s, np.inf)
        bcell = np.maximum.accumulate(bcell)
        i = int(np.searchsorted(bcell, m, side="left"))
        i = min(i, xg.size - 2)
        return float(xg[i])


# ---------------------------------------------------------------------------
# Surface loading
# ---------------------------------------------------------------------------


def load_call_surface(path: str) -> TabulatedFamily:
    """Load a CSV call surface with header ``t,x,c``.

    Rows may come in any order but must fill a complete rectangular grid.
    A t=0 row is synthesized as (-x)+ when absent.  Parse errors carry the
    offending row number.
    """
    ts: List[float] = []
    xs: List[float] = []
    entries: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file")
        if [h.strip() for h in header] != ["t", "x", "c"]:
            raise ValueError(f"{path}: header must be 't,x,c', got {header!r}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            try:
                t, x, c = (float(f) for f in rec)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field in {rec!r}")
            if (t, x) in entries:
                raise ValueError(f"{path}:{lineno}: duplicate node t={t}, x={x}")
            entries[(t, x)] = c
            ts.append(t)
            xs.append(x)
    t_grid = np.unique(np.asarray(ts))
    x_grid = np.unique(np.asarray(xs))
    if t_grid.size == 0:
        raise ValueError(f"{path}: no data rows")
    missing = [(t, x) for t in t_grid for x in x_grid if (t, x) not in entries]
    if missing:
        t0, x0 = missing[0]
        raise ValueError(
            f"{path}: grid is not rectangular, {len(missing)} missing nodes "
            f"(first: t={t0}, x={x0})"
        )
    values = np.array([[entries[(t, x)] for x in x_grid] for t in t_grid])
    if t_grid[0] > 0.0:
        t_grid = np.concatenate([[0.0], t_grid])
        values = np.vstack([np.maximum(-x_grid, 0.0), values])
    return TabulatedFamily(CallSurface(t_grid, x_grid, values))


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------


def _default_tol(family: MarginalFamily) -> float:
    return TABULATED_TOL if family.kind == "tabulated" else ANALYTIC_TOL


def _default_grids(family: MarginalFamily) -> Tuple[np.ndarray, np.ndarray]:
    t_grid = np.linspace(0.0, 1.0, 21)
    p = np.linspace(1e-9, 1.0 - 1e-9, 201)
    x_grid = np.unique(np.asarray(family.quantile(1.0, p)))
    return t_grid, x_grid


def check_peacock(
    family: MarginalFamily,
    t_grid: Optional[Sequence[float]] = None,
    x_grid: Optional[Sequence[float]] = None,
    tol: Optional[float] = None,
) -> ValidationReport:
    """Check the structural invariants of a call surface on a grid.

    Verified: calls non-decreasing in t, convex in x, slopes in [-1, 0],
    centering asymptotics at the grid edges, the t=0 row degenerate at 0, and
    non-negativity.  One violation entry per failed invariant, carrying the
    worst offending node.
    """
    if tol is None:
        tol = _default_tol(family)
    if t_grid is None or x_grid is None:
        tg, xg = _default_grids(family)
        t_grid = tg if t_grid is None else np.asarray(t_grid, dtype=float)
        x_grid = xg if x_grid is None else np.asarray(x_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    calls = np.vstack([_as_array(family.call_price(t, x_grid)) for t in t_grid])

    violations: List[Violation] = []

    def worst(kind: str, deficit: np.ndarray, ts: np.ndarray, xs: np.ndarray):
        """Record the largest entry of ``deficit`` if it exceeds the tolerance."""
        k = int(np.argmax(deficit))
        mag = float(deficit.flat[k])
        if mag > tol:
            violations.append(Violation(kind, float(ts.flat[k]), float(xs.flat[k]), mag))

    tt = np.broadcast_to(t_grid[:, None], calls.shape)
    xx = np.broadcast_to(x_grid[None, :], calls.shape)

    worst("negative", -calls, tt, xx)
    if t_grid.size > 1:
        drop = calls[:-1] - calls[1:]
        worst("t-monotonicity", drop, tt[1:], xx[1:])
    slopes = np.diff(calls, axis=1) / np.diff(x_grid)[None, :]
    # Slopes must lie in [-1, 0]: deficit is how far they stray outside.
    stray = np.maximum(slopes, -1.0 - slopes)
    worst("slope-range", stray, tt[:, 1:], xx[:, 1:])
    if x_grid.size > 2:
        kink = slopes[:, :-1] - slopes[:, 1:]
        worst("x-convexity", kink, tt[:, 2:], xx[:, 2:])
    intrinsic = np.maximum(-x_grid, 0.0)
    edge_err = np.abs(calls[:, [0, -1]] - intrinsic[[0, -1]][None, :])
    worst("centering", edge_err, tt[:, [0, -1]], xx[:, [0, -1]])
    if np.any(t_grid == 0.0):
        j0 = int(np.nonzero(t_grid == 0.0)[0][0])
        t0_err = np.abs(calls[j0] - intrinsic)
        worst("t0-degenerate", t0_err, tt[j0], xx[j0])

    return ValidationReport(ok=not violations, violations=violations)


def check_imrv(
    family: MarginalFamily,
    t_grid: Optional[Sequence[float]] = None,
    x_grid: Optional[Sequence[float]] = None,
    tol: Optional[float] = None,
) -> ValidationReport:
    """Check that the upper-tail barycenter is non-decreasing in t at each x.

    This is the property that lets the simulator run a single falling-boundary
    stopping rule; families failing it are refused by the simulator.
    """
    if tol is None:
        tol = _default_tol(family)
    if t_grid is None:
        t_grid = np.linspace(0.05, 1.0, 20)
    if x_grid is None:
        p = np.linspace(1e-6, 1.0 - 1e-6, 101)
        x_grid = np.unique(np.asarray(family.quantile(1.0, p)))
    t_grid = np.asarray(t_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    if np.any(t_grid <= 0.0):
        raise ValueError("t_grid for the barycenter check must be positive")
    b = np.vstack([_as_array(family.barycenter(t, x_grid)) for t in t_grid])
    violations: List[Violation] = []
    if t_grid.size > 1:
        drop = b[:-1] - b[1:]
        k = int(np.argmax(drop))
        mag = float(drop.flat[k])
        if mag > tol:
            i, j = np.unravel_index(k, drop.shape)
            violations.append(Violation("barycenter-monotonicity", float(t_grid[i + 1]), float(x_grid[j]), mag))
    return ValidationReport(ok=not violations, violations=violations)
