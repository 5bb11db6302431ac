"""Hedging portfolios that certify the exceedance bound pathwise.

The certifying portfolio for a threshold m and a non-decreasing step boundary
z_1 <= ... <= z_K < m has a static leg (calls struck at the boundary levels,
rebalanced only at label times) and a dynamic leg (a crossing credit when the
running max first reaches m, plus forward positions afterwards).  The sum
dominates 1{max >= m} for every sequence of label values, and the static
leg's expected cost under the marginals is exactly the solver's cost
functional, which is what closes the duality argument numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import integrate, stats

from .marginals import MarginalFamily
from .simulate import EmbeddingResult, max_exceedance_prob, sample_brownian
from .solver import Boundary, Payoff, psi


def _boundary_values(boundary) -> np.ndarray:
    vals = getattr(boundary, "values", boundary)
    return np.asarray(vals, dtype=float)


@dataclass
class VerifyReport:
    check: str
    n_cases: int
    min_slack: float
    failures: List[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "pass": self.ok,
            "n_cases": int(self.n_cases),
            "min_slack": float(self.min_slack),
            "failures": [
                {"case_id": int(f["case_id"]), "slack": float(f["slack"])}
                for f in self.failures
            ],
        }


# ---------------------------------------------------------------------------
# Portfolio legs
# ---------------------------------------------------------------------------


def static_payout(m: float, boundary, values) -> Union[float, np.ndarray]:
    """Static-leg payout from the label values of one or many paths.

    For values v_1..v_K and boundary levels z_1 <= .. <= z_K < m:
    sum_{k<K} [ (v_k - z_k)+/(m - z_k) - (v_k - z_{k+1})+/(m - z_{k+1}) ]
    + (v_K - z_K)+/(m - z_K).  Its expectation under the marginals equals the
    cost functional of the boundary.
    """
    z = _boundary_values(boundary)
    v = np.asarray(values, dtype=float)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    if v.shape[1] != z.size:
        raise ValueError("values must have one column per boundary level")
    gaps = m - z
    if np.any(gaps <= 0.0):
        raise ValueError("boundary must stay strictly below the threshold")
    out = np.zeros(v.shape[0])
    K = z.size
    for k in range(K - 1):
        out += np.maximum(v[:, k] - z[k], 0.0) / gaps[k]
        out -= np.maximum(v[:, k] - z[k + 1], 0.0) / gaps[k + 1]
    out += np.maximum(v[:, K - 1] - z[K - 1], 0.0) / gaps[K - 1]
    return float(out[0]) if single else out


def dynamic_payout(
    m: float,
    boundary,
    values,
    maxs,
    variant: str = "signed",
) -> Union[float, np.ndarray]:
    """Dynamic-leg payout from label values and running maxes at the stops.

    Crossing credit at the first label whose running max reaches m:
    (m - v)/(m - z) there ("signed"), or its positive part ("clipped", which
    only strengthens the portfolio).  After the max has crossed m, each
    window with the previous value at or above its level contributes the
    negated forward increment -(v_k - v_{k-1})/(m - z_k).
    """
    if variant not in ("signed", "clipped"):
        raise ValueError("variant must be 'signed' or 'clipped'")
    z = _boundary_values(boundary)
    v = np.asarray(values, dtype=float)
    M = np.asarray(maxs, dtype=float)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    M = np.atleast_2d(M)
    if v.shape != M.shape or v.shape[1] != z.size:
        raise ValueError("values and maxs must be (n, K) with K boundary levels")
    gaps = m - z
    if np.any(gaps <= 0.0):
        raise ValueError("boundary must stay strictly below the threshold")
    n, K = v.shape
    out = np.zeros(n)
    crossed = M >= m
    any_crossed = crossed.any(axis=1)
    rows = np.nonzero(any_crossed)[0]
    if rows.size:
        first = np.argmax(crossed[rows], axis=1)
        num = m - v[rows, first]
        if variant == "clipped":
            num = np.maximum(num, 0.0)
        out[rows] = num / gaps[first]
    for k in range(1, K):
        live = (M[:, k - 1] >= m) & (v[:, k - 1] >= z[k])
        out -= np.where(live, (v[:, k] - v[:, k - 1]) / gaps[k], 0.0)
    return float(out[0]) if single else out


def pathwise_rhs(m: float, boundary, xs, variant: str = "signed") -> float:
    """Portfolio payout along one sequence of label values (max floored at 0,
    matching walks started at 0)."""
    xs = np.asarray(xs, dtype=float)
    maxs = np.maximum(np.maximum.accumulate(xs), 0.0)
    return float(
        static_payout(m, boundary, xs) + dynamic_payout(m, boundary, xs, maxs, variant)
    )


def _stable_slack(m: float, z: np.ndarray, x: np.ndarray, variant: str) -> float:
    """Slack of the pathwise inequality, grouped by denominator.

    Algebraically identical to static_payout + dynamic_payout - indicator, but
    each label's net contribution is simplified per regime before dividing by
    its gap m - z_k.  The naive sum cancels quantities of size |x|/(m - z_K),
    which for near-degenerate gaps turns roundoff into spurious negative slack
    far above 1e-12; here every contribution is either a ratio in (-1, 1] or
    a nonnegative term, so the total error stays at a few ulps.
    """
    if m <= 0.0:
        raise ValueError("threshold must be positive (walks start at 0)")
    K = z.size
    total = 0.0
    crossed_prev = False
    M = 0.0
    for j in range(K):
        xj = float(x[j])
        zj = float(z[j])
        gap = m - zj
        M = max(M, xj)
        prev_plus = 0.0 if j == 0 else max(float(x[j - 1]) - zj, 0.0)
        if not crossed_prev:
            if M >= m:
                total += 1.0 - prev_plus / gap
                if variant == "clipped":
                    total += (xj - m) / gap
                crossed_prev = True
            else:
                total += max(xj - zj, 0.0) / gap - prev_plus / gap
        elif j > 0 and float(x[j - 1]) >= zj:
            total += max(zj - xj, 0.0) / gap
        else:
            total += max(xj - zj, 0.0) / gap
    return total - (1.0 if M >= m else 0.0)


def pathwise_check(m: float, boundary, xs, variant: str = "signed", tol: float = 1e-12):
    """Check the pathwise inequality on one label-value sequence.

    Returns (holds, slack) where slack is payout minus the indicator
    1{max >= m}, evaluated in the cancellation-free grouped form.
    """
    if variant not in ("signed", "clipped"):
        raise ValueError("variant must be 'signed' or 'clipped'")
    z = _boundary_values(boundary)
    if np.any(np.diff(z) < 0.0):
        raise ValueError("boundary levels must be non-decreasing")
    if np.any(m - z <= 0.0):
        raise ValueError("boundary must stay strictly below the threshold")
    x = np.asarray(xs, dtype=float)
    if x.shape != z.shape:
        raise ValueError("one label value per boundary level")
    slack = _stable_slack(m, z, x, variant)
    return slack >= -tol, slack


def mixture_payout(payoff: Payoff, level_payouts: dict) -> np.ndarray:
    """Combine per-threshold payout arrays into the payout of an atomic
    mixture payoff; density parts would need payouts on the density grid."""
    if payoff.density_x is not None:
        raise NotImplementedError("density mixtures are priced analytically only")
    if not payoff.atoms:
        raise ValueError("payoff has no atoms")
    total = None
    for m, w in payoff.atoms:
        arr = np.asarray(level_payouts[float(m)], dtype=float)
        total = w * arr if total is None else total + w * arr
    return payoff.phi0 + total


# ---------------------------------------------------------------------------
# Verifications
# ---------------------------------------------------------------------------


def verify_pathwise(
    n_cases: int = 10000,
    seed: int = 0,
    tol: float = 1e-12,
    variant: str = "signed",
) -> VerifyReport:
    """Check the pathwise domination on randomized label sequences.

    Cases draw 1..6 labels, boundaries accumulating toward the threshold
    (sometimes within 1e-9 of it), heavy-tailed walk steps with occasional
    jumps, and exact-touch edits (a value set to its boundary level or to the
    threshold).  slack = payout - indicator must be >= -tol; the slack is
    evaluated in the grouped form of pathwise_check so that near-degenerate
    gaps do not drown the tolerance in roundoff.
    """
    rng = np.random.default_rng(seed)
    failures: List[dict] = []
    min_slack = np.inf
    for case_id in range(n_cases):
        K = int(rng.integers(1, 7))
        m = 0.1 + float(rng.exponential(1.0))
        z = np.sort(m - rng.exponential(1.0, size=K) - 1e-6)
        if rng.random() < 0.1:
            z[-1] = m - 1e-9
        scale = float(rng.choice([0.3, 1.0, 3.0]))
        x = np.cumsum(rng.standard_normal(K) * scale)
        if rng.random() < 0.2:
            x[int(rng.integers(0, K))] += float(rng.choice([-1.0, 1.0])) * float(
                rng.exponential(3.0)
            )
        if rng.random() < 0.15:
            j = int(rng.integers(0, K))
            x[j] = z[j]
        if rng.random() < 0.15:
            x[int(rng.integers(0, K))] = m
        slack = _stable_slack(m, z, x, variant)
        if slack < min_slack:
            min_slack = slack
        if slack < -tol:
            failures.append({"case_id": case_id, "slack": slack})
    return VerifyReport(
        check="pathwise", n_cases=n_cases, min_slack=float(min_slack), failures=failures
    )


def verify_superhedge(
    result: EmbeddingResult,
    m: float,
    boundary: Boundary,
    shortfall: float = 0.02,
    variant: str = "signed",
) -> VerifyReport:
    """Check payout >= indicator - shortfall on simulated embedding paths."""
    payout = static_payout(m, boundary, result.values) + dynamic_payout(
        m, boundary, result.values, result.maxs, variant
    )
    indicator = (result.maxs[:, -1] >= m).astype(float)
    slack = payout - indicator
    bad = np.nonzero(slack < -shortfall)[0]
    failures = [{"case_id": int(i), "slack": float(slack[i])} for i in bad[:100]]
    return VerifyReport(
        check="superhedge",
        n_cases=result.n_paths,
        min_slack=float(slack.min()),
        failures=failures,
    )


def static_cost(family: MarginalFamily, m: float, boundary: Boundary) -> float:
    """Cost functional by direct quadrature of the call's time derivative.

    An independent route to the same number as the telescoped evaluator:
    c(0, z_1)/(m - z_1) plus the integral of dc/dt(s, z(s))/(m - z(s)).

    Each window is integrated in the square-root time variable, which removes
    the 1/sqrt(t) blow-up of dc/dt at t = 0.  The first window also gets a
    geometric ladder of split points: for a level near the center of the
    marginals the integrand turns on only once the marginal has spread past
    the level, a layer at a scale the adaptive rule never finds on its own
    (it converges confidently to the wrong value without the hints).
    """
    z1 = boundary.values[0]
    total = max(-z1, 0.0) / (m - z1)
    prev = 0.0
    for s, z in zip(boundary.breakpoints, boundary.values):

        def integrand(r, zz=z):
            return 2.0 * r * float(family.dt_call(r * r, zz))

        r0, r1 = np.sqrt(prev), np.sqrt(s)
        pts = [r1 * g for g in (1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 0.1)] if prev == 0.0 else None
        val, _ = integrate.quad(
            integrand, r0, r1, epsabs=1e-10, epsrel=1e-10, limit=200, points=pts
        )
        total += val / (m - z)
        prev = s
    return float(total)


def random_boundaries(
    rng: np.random.Generator,
    m: float,
    n: int,
    max_windows: int = 6,
    margin: float = 1e-3,
) -> List[Boundary]:
    """Random non-decreasing step boundaries strictly below m, for route checks."""
    out = []
    for _ in range(n):
        K = int(rng.integers(1, max_windows + 1))
        bp = np.sort(rng.random(K - 1)) if K > 1 else np.array([])
        bp = np.concatenate([bp, [1.0]])
        bp = np.unique(bp)
        vals = np.sort(m - margin - rng.exponential(0.7, size=bp.size))
        out.append(Boundary(tuple(bp), tuple(vals)))
    return out


def verify_dual_routes(
    family: MarginalFamily,
    m: float,
    n_cases: int = 100,
    seed: int = 0,
    tol: float = 1e-6,
) -> VerifyReport:
    """Compare the telescoped and quadrature cost routes on random boundaries.

    slack = tol - |difference| per case, so a passing case has slack >= 0.
    """
    rng = np.random.default_rng(seed)
    boundaries = random_boundaries(rng, m, n_cases)
    failures: List[dict] = []
    min_slack = np.inf
    for i, b in enumerate(boundaries):
        diff = abs(psi(family, m, b) - static_cost(family, m, b))
        slack = tol - diff
        if slack < min_slack:
            min_slack = slack
        if slack < 0.0:
            failures.append({"case_id": i, "slack": slack})
    return VerifyReport(
        check="dual-routes", n_cases=n_cases, min_slack=float(min_slack), failures=failures
    )


# ---------------------------------------------------------------------------
# Martingale-side inequality
# ---------------------------------------------------------------------------


@dataclass
class MartingaleCheck:
    m: float
    n_paths: int
    lhs_mean: float
    lhs_stderr: float
    rhs_mean: float
    rhs_stderr: float
    rhs_analytic: float
    ok: bool

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n_paths": self.n_paths,
            "lhs_mean": self.lhs_mean,
            "lhs_stderr": self.lhs_stderr,
            "rhs_mean": self.rhs_mean,
            "rhs_stderr": self.rhs_stderr,
            "rhs_analytic": self.rhs_analytic,
            "ok": self.ok,
        }


def martingale_ineq_check(
    m: float,
    boundary: Boundary,
    n_paths: int,
    seed: int,
    sigma: float = 1.0,
) -> MartingaleCheck:
    """Monte Carlo check that E[1{max >= m}] for a scaled Brownian motion is
    dominated by the boundary's call portfolio priced on the same paths.

    The left side samples the exact running max on [0, 1] (per-interval
    extremes drawn from the exact conditional law, so there is no grid bias).
    The right side prices the portfolio from empirical calls at the
    boundary's own breakpoints and is compared with the analytic cost of the
    same boundary under the matching Gaussian family.
    """
    from .marginals import GaussianFamily

    times = np.concatenate([[0.0], np.asarray(boundary.breakpoints)])
    W, U = sample_brownian(times, n_paths, seed, sigma=sigma, with_uniforms=True)
    dts = np.diff(times)
    incs = W[:, 1:] - W[:, :-1]
    disc = incs**2 - 2.0 * (sigma**2) * dts[None, :] * np.log(U)
    peaks = 0.5 * (W[:, 1:] + W[:, :-1] + np.sqrt(disc))
    Mstar = peaks.max(axis=1)
    lhs_samples = (Mstar >= m).astype(float)

    z = np.asarray(boundary.values)
    gaps = m - z
    if np.any(gaps <= 0.0):
        raise ValueError("boundary must stay strictly below the threshold")
    nodes = W[:, 1:]  # values at the breakpoints s_1..s_K
    K = z.size
    rhs_samples = np.maximum(nodes[:, K - 1] - z[K - 1], 0.0) / gaps[K - 1]
    for k in range(K - 1):
        rhs_samples = rhs_samples + np.maximum(nodes[:, k] - z[k], 0.0) / gaps[k]
        rhs_samples = rhs_samples - np.maximum(nodes[:, k] - z[k + 1], 0.0) / gaps[k + 1]

    lhs_mean = float(lhs_samples.mean())
    lhs_stderr = float(lhs_samples.std(ddof=1) / np.sqrt(n_paths))
    rhs_mean = float(rhs_samples.mean())
    rhs_stderr = float(rhs_samples.std(ddof=1) / np.sqrt(n_paths))
    rhs_analytic = psi(GaussianFamily(sigma), m, boundary)
    ok = lhs_mean <= rhs_mean + 3.0 * (lhs_stderr + rhs_stderr)
    return MartingaleCheck(
        m=float(m),
        n_paths=int(n_paths),
        lhs_mean=lhs_mean,
        lhs_stderr=lhs_stderr,
        rhs_mean=rhs_mean,
        rhs_stderr=rhs_stderr,
        rhs_analytic=float(rhs_analytic),
        ok=ok,
    )


def remark_bound(family: MarginalFamily, payoff: Payoff, surface) -> float:
    """Analytic portfolio price for a mixture payoff given per-level boundaries."""
    total = payoff.phi0
    for m, w in payoff.atoms:
        total += w * psi(family, float(m), surface.boundary_for(float(m)))
    if payoff.density_x is not None:
        cs = np.array(
            [psi(family, float(m), surface.boundary_for(float(m))) for m in payoff.density_x]
        )
        total += float(integrate.trapezoid(payoff.density_w * cs, payoff.density_x))
    return float(total)


# ---------------------------------------------------------------------------
# Duality gap
# ---------------------------------------------------------------------------


@dataclass
class GapReport:
    m: float
    primal: float
    stderr: float
    ci99: float
    bound: float
    excess: float
    ok: bool
    flag: Optional[str]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "primal": self.primal,
            "stderr": self.stderr,
            "ci99": self.ci99,
            "bound": self.bound,
            "excess": self.excess,
            "ok": self.ok,
            "flag": self.flag,
        }


def gap_report(
    result: EmbeddingResult,
    m: float,
    bound: float,
    allowance: float = 0.01,
) -> GapReport:
    """Compare the simulated exceedance probability with the solver bound.

    The simulation must not beat the bound by more than Monte Carlo noise
    plus the stated allowance (the bound would be no bound at all); it also
    must not fall short of it by more than that budget, since the stopping
    rule is the optimizer and should attain the bound.  The flag names which
    side failed.
    """
    est = max_exceedance_prob(result, m)
    excess = est.p - bound
    budget = est.ci99 + allowance
    if excess > budget:
        flag = "WEAK-DUALITY-VIOLATION"
    elif -excess > budget:
        flag = "SLACK-EXCEEDS-ALLOWANCE"
    else:
        flag = None
    return GapReport(
        m=float(m),
        primal=est.p,
        stderr=est.stderr,
        ci99=est.ci99,
        bound=float(bound),
        excess=float(excess),
        ok=flag is None,
        flag=flag,
    )
