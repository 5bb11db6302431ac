import numpy as np
import pytest

from maxbound.hedging import (
    dynamic_payout,
    gap_report,
    martingale_ineq_check,
    mixture_payout,
    pathwise_check,
    pathwise_rhs,
    random_boundaries,
    remark_bound,
    static_cost,
    static_payout,
    verify_dual_routes,
    verify_pathwise,
    verify_superhedge,
)
from maxbound.simulate import EmbeddingResult, estimate_primal
from maxbound.solver import Boundary, Payoff, build_zeta_surface, price_bound, psi, solve_C


def test_pathwise_rhs_hand_values():
    # A path pinned at 0 with level -1 and threshold 1: static leg alone,
    # (0 + 1) / (1 + 1) = 1/2; the max never reaches the threshold.
    assert pathwise_rhs(1.0, Boundary.constant(-1.0), [0.0]) == pytest.approx(0.5, abs=1e-15)
    # Jump exactly to the threshold with level 0: full unit payout, slack 0.
    assert pathwise_rhs(1.0, Boundary.constant(0.0), [1.0]) == pytest.approx(1.0, abs=1e-15)
    # A level far below everything prices the whole indicator.
    assert pathwise_rhs(1.0, Boundary.constant(-1e6), [0.3]) == pytest.approx(1.0, abs=1e-5)


def test_static_payout_shapes():
    b = Boundary((0.5, 1.0), (-0.5, 0.0))
    one = static_payout(1.0, b, [0.2, 0.4])
    many = static_payout(1.0, b, [[0.2, 0.4], [0.0, 0.0]])
    assert isinstance(one, float)
    assert many.shape == (2,)
    assert many[0] == pytest.approx(one)
    with pytest.raises(ValueError):
        static_payout(1.0, b, [0.2])
    with pytest.raises(ValueError):
        static_payout(-0.6, b, [0.2, 0.4])


def test_dynamic_payout_crossing_credit():
    b = Boundary((1.0,), (0.0,))
    # Overshoot past the threshold: signed credit is negative, clipped is 0.
    signed = dynamic_payout(1.0, b, [1.5], [[1.5]][0], variant="signed")
    clipped = dynamic_payout(1.0, b, [1.5], [1.5], variant="clipped")
    assert signed == pytest.approx(-0.5)
    assert clipped == 0.0
    with pytest.raises(ValueError):
        dynamic_payout(1.0, b, [1.5], [1.5], variant="bogus")


def test_clipped_dominates_signed(rng):
    for _ in range(200):
        K = int(rng.integers(1, 5))
        m = 0.5 + rng.exponential(1.0)
        z = np.sort(m - rng.exponential(1.0, size=K) - 1e-6)
        b = Boundary(tuple(np.linspace(1.0 / K, 1.0, K)), tuple(z))
        x = np.cumsum(rng.standard_normal(K))
        assert pathwise_rhs(m, b, x, "clipped") >= pathwise_rhs(m, b, x, "signed") - 1e-12


def test_pathwise_check_touch_cases():
    b = Boundary((0.5, 1.0), (-0.2, 0.1))
    # Continuous touch of the threshold: the portfolio pays the indicator out
    # exactly, so the slack vanishes.
    holds, slack = pathwise_check(1.0, b, [1.0, 0.1])
    assert holds and slack == pytest.approx(0.0, abs=1e-12)
    # Value resting exactly on its level.
    holds, slack = pathwise_check(1.0, b, [-0.2, -0.5])
    assert holds and slack >= 0.0
    with pytest.raises(ValueError):
        pathwise_check(1.0, b, [0.1, 0.2], variant="nope")
    with pytest.raises(ValueError):
        pathwise_check(0.05, b, [0.1, 0.2])  # level above threshold
    with pytest.raises(ValueError):
        pathwise_check(1.0, b, [0.1])


def test_stable_slack_agrees_with_naive_on_moderate_gaps(rng):
    # With gaps of order one the naive static + dynamic - indicator sum is
    # accurate, so the grouped evaluation must agree with it closely.
    for _ in range(300):
        K = int(rng.integers(1, 6))
        m = 1.0 + rng.exponential(1.0)
        z = np.sort(m - 0.3 - rng.exponential(1.0, size=K))
        b = Boundary(tuple(np.linspace(1.0 / K, 1.0, K)), tuple(z))
        x = np.cumsum(rng.standard_normal(K))
        maxs = np.maximum(np.maximum.accumulate(x), 0.0)
        naive = (
            static_payout(m, b, x)
            + dynamic_payout(m, b, x, maxs, "signed")
            - (1.0 if maxs[-1] >= m else 0.0)
        )
        _, slack = pathwise_check(m, b, x)
        assert slack == pytest.approx(naive, abs=5e-12)


def test_verify_pathwise_clean_and_fast():
    for variant in ("signed", "clipped"):
        rep = verify_pathwise(n_cases=2000, seed=7, variant=variant)
        assert rep.ok, rep.failures[:3]
        assert rep.min_slack >= -1e-12


def test_random_boundaries_are_valid(rng):
    for b in random_boundaries(rng, 1.1, 50):
        assert b.breakpoints[-1] == 1.0
        assert all(z < 1.1 for z in b.values)


def test_dual_routes_agree(gauss, uni):
    rep = verify_dual_routes(gauss, 1.2, n_cases=25, seed=0)
    assert rep.ok, rep.failures[:3]
    rep = verify_dual_routes(uni, 0.8, n_cases=25, seed=1)
    assert rep.ok, rep.failures[:3]


def test_static_cost_resolves_thin_onset_layer(gauss):
    # Regression: a first-window level within ~1e-5 of the start point puts
    # the onset of the time-derivative at depth (z/sigma)^2 ~ 1e-11, which the
    # plain adaptive rule integrates over confidently and wrongly.
    b = Boundary(
        (0.14706430743323462, 0.24389649332303487, 0.2798941543182133, 1.0),
        (-5.4329456813384525e-06, 0.1146623160869138, 0.4425085322107619, 0.46711541917071553),
    )
    m = 1.2
    assert static_cost(gauss, m, b) == pytest.approx(psi(gauss, m, b), abs=1e-9)


def test_static_payout_mean_matches_cost(gauss):
    # Exact-marginal samples via quantile transform at the breakpoints: the
    # sampled static leg must price at its analytic expectation.
    b = Boundary((0.4, 1.0), (-0.3, 0.2))
    m = 1.1
    rng = np.random.default_rng(99)
    n = 40000
    vals = np.column_stack(
        [gauss.quantile(t, rng.random(n)) for t in b.breakpoints]
    )
    pays = static_payout(m, b, vals)
    target = psi(gauss, m, b)
    stderr = pays.std(ddof=1) / np.sqrt(n)
    assert abs(pays.mean() - target) < 3.5 * stderr


def test_verify_superhedge_on_simulated_paths(gauss):
    res = solve_C(gauss, 1.2)
    sim = estimate_primal(
        gauss, list(res.boundary.breakpoints), n_paths=500, dt=2e-4, seed=13, bridge=True
    )
    rep = verify_superhedge(sim, 1.2, res.boundary, shortfall=0.02)
    assert rep.ok, rep.failures[:3]


def test_martingale_check_constant_level():
    # Constant level -10: the portfolio prices c(1,-10)/(m+10), far above the
    # exceedance probability 2 * Phibar(m) of the Brownian max.
    m = 0.7978845608028654
    chk = martingale_ineq_check(m, Boundary.constant(-10.0), n_paths=20000, seed=11)
    assert chk.ok
    assert chk.rhs_analytic == pytest.approx(0.92610732627210646, abs=1e-12)
    assert chk.rhs_mean == pytest.approx(chk.rhs_analytic, abs=4 * chk.rhs_stderr)
    assert chk.lhs_mean == pytest.approx(0.42493748368336193, abs=4 * chk.lhs_stderr)
    with pytest.raises(ValueError):
        martingale_ineq_check(0.5, Boundary.constant(0.7), n_paths=100, seed=1)


def _fake_result(maxs_last, m_label=1.0):
    n = maxs_last.size
    maxs = maxs_last[:, None]
    return EmbeddingResult(
        labels=np.array([m_label]),
        dt=1e-3,
        seed=0,
        n_paths=n,
        values=maxs.copy(),
        maxs=maxs,
        taus=np.ones((n, 1), dtype=np.int64),
        truncated=np.zeros(n, dtype=bool),
        backend="python",
    )


def test_gap_report_flags_both_sides():
    rng = np.random.default_rng(3)
    n = 4000
    # Simulated exceedance ~0.5 against a matching bound: fine.
    maxs = np.where(rng.random(n) < 0.5, 2.0, 0.0)
    ok_rep = gap_report(_fake_result(maxs), 1.0, 0.5, allowance=0.05)
    assert ok_rep.ok and ok_rep.flag is None
    # Bound far below the estimate: the "bound" is violated.
    hi = gap_report(_fake_result(maxs), 1.0, 0.3, allowance=0.01)
    assert not hi.ok and hi.flag == "WEAK-DUALITY-VIOLATION"
    # Estimate far below the bound: the embedding is not attaining it.
    lo = gap_report(_fake_result(maxs), 1.0, 0.8, allowance=0.01)
    assert not lo.ok and lo.flag == "SLACK-EXCEEDS-ALLOWANCE"
    d = lo.to_dict()
    assert d["flag"] == "SLACK-EXCEEDS-ALLOWANCE" and d["ok"] is False


def test_mixture_payout_combines_levels():
    payoff = Payoff(phi0=0.5, atoms=((1.0, 2.0), (2.0, 3.0)))
    a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    out = mixture_payout(payoff, {1.0: a, 2.0: b})
    np.testing.assert_allclose(out, [2.5, 3.5])
    with pytest.raises(ValueError):
        mixture_payout(Payoff(), {})


def test_remark_bound_matches_price_bound(gauss, fast_grid):
    payoff = Payoff(phi0=0.2, atoms=((0.9, 1.0), (1.4, 2.0)))
    surf = build_zeta_surface(gauss, payoff, grid=fast_grid)
    total = remark_bound(gauss, payoff, surf)
    pb = price_bound(gauss, payoff, grid=fast_grid)
    assert total == pytest.approx(pb.total, abs=1e-12)
