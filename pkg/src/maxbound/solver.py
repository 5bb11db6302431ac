"""Least-cost falling boundaries and the maximum-exceedance cost curve.

The object being minimized: for a threshold m > 0 and a non-decreasing step
boundary zeta staying below m, the hedge cost

    Psi_m(zeta) = c(0, zeta(0)) / (m - zeta(0))
                  + integral over (0, 1] of dc/dt(s, zeta(s)) / (m - zeta(s)) ds.

On a step boundary the integral telescopes into per-window call increments, so
Psi is evaluated exactly from call prices alone.  C_n(m) minimizes Psi over
boundaries constant on each window of the n-window uniform partition with
values on a fixed level grid; the minimization is a dynamic program in the
(window, level) plane.  C(m) is the limit down a ladder of dyadic refinements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .marginals import MarginalFamily


@dataclass(frozen=True)
class Boundary:
    """Non-decreasing step function on (0, 1].

    ``breakpoints`` are the right edges of the constancy windows, strictly
    increasing with the last equal to 1; ``values`` are the levels, one per
    window, non-decreasing.  The function is left-open right-closed: on
    (s_{k-1}, s_k] it takes values[k], and value_at(0) = values[0].
    """

    breakpoints: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.size == 0 or bp.size != vals.size:
            raise ValueError("breakpoints and values must be equal-length and non-empty")
        if np.any(np.diff(bp) <= 0.0) or bp[0] <= 0.0:
            raise ValueError("breakpoints must be strictly increasing and positive")
        if abs(bp[-1] - 1.0) > 1e-12:
            raise ValueError("the last breakpoint must be 1")
        if np.any(np.diff(vals) < 0.0):
            raise ValueError("boundary values must be non-decreasing")
        object.__setattr__(self, "breakpoints", tuple(float(s) for s in bp))
        object.__setattr__(self, "values", tuple(float(z) for z in vals))

    @classmethod
    def constant(cls, z: float) -> "Boundary":
        return cls((1.0,), (float(z),))

    def value_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        bp = np.asarray(self.breakpoints)
        vals = np.asarray(self.values)
        idx = np.searchsorted(bp, np.atleast_1d(t), side="left")
        idx = np.minimum(idx, vals.size - 1)
        out = vals[idx]
        return out if t.ndim else float(out[0])

    def final_value(self) -> float:
        return self.values[-1]


@dataclass
class Payoff:
    """Non-decreasing payout of the running maximum.

    phi(x) = phi0 + sum of w * 1{x >= m} over atoms + the integral up to x of
    a piecewise-linear density on [density_x[0], density_x[-1]].
    """

    phi0: float = 0.0
    atoms: Tuple[Tuple[float, float], ...] = ()
    density_x: Optional[np.ndarray] = None
    density_w: Optional[np.ndarray] = None

    def __post_init__(self):
        for m, w in self.atoms:
            if m <= 0.0:
                raise ValueError("atom thresholds must be positive")
            if w < 0.0:
                raise ValueError("atom weights must be non-negative")
        if (self.density_x is None) != (self.density_w is None):
            raise ValueError("density grid and weights must come together")
        if self.density_x is not None:
            self.density_x = np.asarray(self.density_x, dtype=float)
            self.density_w = np.asarray(self.density_w, dtype=float)
            if self.density_x.size < 2 or self.density_x.size != self.density_w.size:
                raise ValueError("density needs >= 2 nodes and matching weights")
            if np.any(np.diff(self.density_x) <= 0.0) or self.density_x[0] <= 0.0:
                raise ValueError("density nodes must be positive and increasing")
            if np.any(self.density_w < 0.0):
                raise ValueError("density must be non-negative")

    def levels(self) -> np.ndarray:
        ms = [m for m, _ in self.atoms]
        if self.density_x is not None:
            ms.extend(self.density_x.tolist())
        return np.unique(np.asarray(ms, dtype=float))

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.phi0, dtype=float)
        for m, w in self.atoms:
            out += w * (x >= m)
        if self.density_x is not None:
            cum = integrate.cumulative_trapezoid(self.density_w, self.density_x, initial=0.0)
            out += np.interp(x, self.density_x, cum, left=0.0, right=cum[-1])
        return out if x.ndim else float(out)


@dataclass
class SolverGrid:
    """Discretization controls for the boundary search."""

    n0: int = 16
    rungs: int = 5
    nx: int = 400
    q_lo: float = 1e-3
    delta_frac: float = 1e-3
    tol: float = 1e-4

    def partition(self, n: int) -> np.ndarray:
        return np.linspace(0.0, 1.0, n + 1)

    def x_levels(self, family: MarginalFamily, m: float) -> np.ndarray:
        """Quantile-spaced candidate levels below the threshold.

        Runs from the q_lo-quantile of the final marginal up to m - delta,
        where delta keeps the denominators m - x bounded away from zero.
        """
        lo = float(family.quantile(1.0, self.q_lo))
        ref = float(family.quantile(1.0, 0.01))
        delta = self.delta_frac * max(m - ref, 1e-6)
        hi = m - delta
        if hi <= lo:
            # Threshold deep in the left tail: fall back to a plain linear grid.
            xs = np.linspace(hi - max(abs(hi), 1.0), hi, self.nx)
            return xs[xs < m]
        p_hi = float(np.clip(family.cdf(1.0, hi), self.q_lo + 1e-9, 1.0 - 1e-12))
        ps = np.linspace(self.q_lo, p_hi, self.nx - 1)
        xs = np.asarray(family.quantile(1.0, ps), dtype=float)
        xs = np.append(xs, hi)
        xs = np.unique(xs)
        return xs[xs < m]


def _ratio(num: float, gap: float) -> float:
    """num / gap with the boundary-at-threshold conventions 0/0 = 0, pos/0 = inf."""
    if gap <= 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / gap


def psi(family: MarginalFamily, m: float, boundary: Boundary) -> float:
    """Exact hedge cost of a step boundary, via telescoped call increments."""
    total = _ratio(max(-boundary.values[0], 0.0), m - boundary.values[0])
    prev = 0.0
    for s, z in zip(boundary.breakpoints, boundary.values):
        inc = float(family.call_price(s, z)) - float(family.call_price(prev, z))
        total = total + _ratio(inc, m - z)
        prev = s
    return float(total)


@dataclass
class DPTables:
    partition: np.ndarray
    x_grid: np.ndarray
    stage_values: np.ndarray  # (n, G): least cost through window i ending at level j
    pointers: np.ndarray  # (n, G): best previous level index feeding window i


def dp_value_function(
    family: MarginalFamily,
    m: float,
    partition: Sequence[float],
    x_grid: Sequence[float],
) -> DPTables:
    """Forward dynamic program over (window, level) states.

    Stage cost of window i at level x is the call increment over the window
    divided by m - x; the first window also pays the time-zero intrinsic
    term.  Monotone boundaries make the transition a prefix minimum, so each
    stage is a single cumulative-minimum sweep.
    """
    ts = np.asarray(partition, dtype=float)
    xs = np.asarray(x_grid, dtype=float)
    if ts.ndim != 1 or ts.size < 2 or abs(ts[0]) > 0.0 or abs(ts[-1] - 1.0) > 1e-12:
        raise ValueError("partition must run from 0 to 1")
    if np.any(np.diff(ts) <= 0.0):
        raise ValueError("partition must be strictly increasing")
    if xs.ndim != 1 or xs.size == 0 or np.any(np.diff(xs) <= 0.0):
        raise ValueError("x_grid must be non-empty and strictly increasing")
    n = ts.size - 1
    G = xs.size

    calls = np.vstack([np.asarray(family.call_price(t, xs), dtype=float) for t in ts])
    gap = m - xs
    ok = gap > 0.0
    inc = calls[1:] - calls[:-1]  # (n, G) per-window call increments
    A = np.divide(inc, gap[None, :], out=np.zeros_like(inc), where=ok[None, :])
    A[(~ok)[None, :].repeat(n, axis=0) & (inc != 0.0)] = np.inf
    intrinsic = np.maximum(-xs, 0.0)
    A0 = np.divide(intrinsic, gap, out=np.zeros_like(gap), where=ok)
    A0[(~ok) & (intrinsic != 0.0)] = np.inf

    stage_values = np.empty((n, G), dtype=float)
    pointers = np.empty((n, G), dtype=np.int64)
    f = A0 + A[0]
    stage_values[0] = f
    pointers[0] = np.arange(G)
    cols = np.arange(G)
    for i in range(1, n):
        acc = np.minimum.accumulate(f)
        prev_acc = np.concatenate(([np.inf], acc[:-1]))
        # Index of the first attainer of the running minimum (ties to the left).
        jumped = np.where(f < prev_acc, cols, 0)
        arg = np.maximum.accumulate(jumped)
        f = A[i] + acc
        stage_values[i] = f
        pointers[i] = arg
    return DPTables(partition=ts, x_grid=xs, stage_values=stage_values, pointers=pointers)


@dataclass
class CnResult:
    m: float
    n: int
    value: float
    boundary: Boundary
    partition: np.ndarray
    x_grid: np.ndarray


def solve_Cn(
    family: MarginalFamily,
    m: float,
    n: int,
    grid: Optional[SolverGrid] = None,
    partition: Optional[Sequence[float]] = None,
    x_grid: Optional[Sequence[float]] = None,
) -> CnResult:
    """Least hedge cost over n-window boundaries on the level grid.

    The returned value is psi of the extracted minimizer, so it agrees
    bit-for-bit with evaluating the same boundary by hand.
    """
    if m <= 0.0:
        raise ValueError("threshold must be positive")
    grid = grid if grid is not None else SolverGrid()
    ts = np.linspace(0.0, 1.0, n + 1) if partition is None else np.asarray(partition, float)
    xs = grid.x_levels(family, m) if x_grid is None else np.asarray(x_grid, float)
    tables = dp_value_function(family, m, ts, xs)
    nwin = tables.stage_values.shape[0]
    path = np.empty(nwin, dtype=np.int64)
    path[-1] = int(np.argmin(tables.stage_values[-1]))
    for i in range(nwin - 1, 0, -1):
        path[i - 1] = tables.pointers[i][path[i]]
    boundary = Boundary(tuple(ts[1:]), tuple(xs[path]))
    value = psi(family, m, boundary)
    return CnResult(m=m, n=nwin, value=value, boundary=boundary, partition=ts, x_grid=xs)


@dataclass
class CostResult:
    m: float
    value: float
    boundary: Boundary
    ladder: Tuple[float, ...]
    converged: bool


def solve_C(family: MarginalFamily, m: float, grid: Optional[SolverGrid] = None) -> CostResult:
    """Cost curve value at threshold m, refined down a dyadic window ladder.

    Stops once two consecutive rungs agree within grid.tol; reports the
    ladder either way.  Thresholds at or below the start are certain to be
    exceeded, so C = 1 there.
    """
    grid = grid if grid is not None else SolverGrid()
    if m <= 0.0:
        return CostResult(m=m, value=1.0, boundary=Boundary.constant(m - 1.0), ladder=(), converged=True)
    ladder: List[float] = []
    n = grid.n0
    last: Optional[CnResult] = None
    for _ in range(grid.rungs):
        last = solve_Cn(family, m, n, grid=grid)
        ladder.append(last.value)
        if len(ladder) >= 2 and abs(ladder[-1] - ladder[-2]) < grid.tol:
            return CostResult(m=m, value=last.value, boundary=last.boundary, ladder=tuple(ladder), converged=True)
        n *= 2
    return CostResult(m=m, value=last.value, boundary=last.boundary, ladder=tuple(ladder), converged=False)


def hardy_littlewood_C1(family: MarginalFamily, m: float) -> float:
    """Single-marginal reference value: tail mass of mu_1 above the level
    whose upper-tail barycenter is m."""
    if m <= 0.0:
        return 1.0
    if m >= family.right_endpoint(1.0):
        return 0.0
    zeta = family.barycenter_inverse(1.0, m)
    return float(family.survival(1.0, zeta))


@dataclass
class CostCurve:
    ms: np.ndarray
    values: np.ndarray
    converged: np.ndarray
    boundaries: List[Boundary] = field(default_factory=list)


def cost_curve(
    family: MarginalFamily,
    ms: Sequence[float],
    grid: Optional[SolverGrid] = None,
) -> CostCurve:
    ms = np.asarray(ms, dtype=float)
    values = np.empty(ms.size)
    conv = np.empty(ms.size, dtype=bool)
    boundaries: List[Boundary] = []
    for i, m in enumerate(ms):
        res = solve_C(family, float(m), grid=grid)
        values[i] = res.value
        conv[i] = res.converged
        boundaries.append(res.boundary)
    return CostCurve(ms=ms, values=values, converged=conv, boundaries=boundaries)


@dataclass
class PriceBound:
    total: float
    curve: CostCurve
    payoff: Payoff


def price_bound(
    family: MarginalFamily,
    payoff: Payoff,
    grid: Optional[SolverGrid] = None,
) -> PriceBound:
    """Least upper bound on E[phi(max)] over martingales with these marginals:
    phi(0) plus the threshold mixture integrated against the cost curve."""
    levels = payoff.levels()
    curve = cost_curve(family, levels, grid=grid)
    lookup = {float(m): float(v) for m, v in zip(curve.ms, curve.values)}
    total = payoff.phi0
    for m, w in payoff.atoms:
        total += w * lookup[float(m)]
    if payoff.density_x is not None:
        cs = np.array([lookup[float(m)] for m in payoff.density_x])
        total += float(integrate.trapezoid(payoff.density_w * cs, payoff.density_x))
    return PriceBound(total=float(total), curve=curve, payoff=payoff)


@dataclass
class ZetaSurface:
    """Optimal boundary per threshold level, with integrability diagnostics.

    ``integrability`` is the mixture-weighted sum of (m - zeta_m(1))^-2, the
    quantity whose finiteness keeps the dynamic hedge square-integrable; it is
    reported, not enforced.  ``monotone_in_m`` records whether the boundaries
    are pointwise non-decreasing across levels, with the worst drop.
    """

    levels: np.ndarray
    boundaries: List[Boundary]
    costs: np.ndarray
    integrability: float
    monotone_in_m: bool
    worst_drop: float

    def boundary_for(self, m: float) -> Boundary:
        i = int(np.argmin(np.abs(self.levels - m)))
        if abs(float(self.levels[i]) - m) > 1e-12:
            raise KeyError(f"no boundary stored for level m={m}")
        return self.boundaries[i]


def build_zeta_surface(
    family: MarginalFamily,
    payoff: Payoff,
    grid: Optional[SolverGrid] = None,
) -> ZetaSurface:
    levels = payoff.levels()
    curve = cost_curve(family, levels, grid=grid)
    weights = {float(m): 0.0 for m in levels}
    for m, w in payoff.atoms:
        weights[float(m)] += w
    if payoff.density_x is not None:
        dx = np.gradient(payoff.density_x)
        for m, w, d in zip(payoff.density_x, payoff.density_w, dx):
            weights[float(m)] += w * d
    integ = 0.0
    for m, b in zip(curve.ms, curve.boundaries):
        gap = float(m) - b.final_value()
        if gap > 0.0:
            integ += weights[float(m)] / gap**2
        else:
            integ = float("inf")
    worst = 0.0
    probe = np.linspace(1e-6, 1.0, 101)
    prev_vals = None
    for b in curve.boundaries:
        vals = b.value_at(probe)
        if prev_vals is not None:
            worst = max(worst, float(np.max(prev_vals - vals)))
        prev_vals = vals
    return ZetaSurface(
        levels=curve.ms,
        boundaries=curve.boundaries,
        costs=curve.values,
        integrability=float(integ),
        monotone_in_m=worst <= 1e-9,
        worst_drop=worst,
    )
