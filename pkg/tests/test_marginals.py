import io
import math

import numpy as np
import pytest

from maxbound.marginals import (
    GaussianFamily,
    ScaledUniformFamily,
    TabulatedFamily,
    CallSurface,
    check_imrv,
    check_peacock,
    load_call_surface,
)


def test_gaussian_call_values():
    fam = GaussianFamily(sigma=1.0)
    # 1/sqrt(2*pi) at the money, unit horizon.
    assert fam.call_price(1.0, 0.0) == pytest.approx(0.3989422804014327, abs=1e-12)
    assert fam.call_price(0.25, 0.3) == pytest.approx(0.08433636612087775, abs=1e-12)
    # Deep tails hit the intrinsic value / zero.
    assert fam.call_price(1.0, -40.0) == pytest.approx(40.0, abs=1e-12)
    assert fam.call_price(1.0, 40.0) == pytest.approx(0.0, abs=1e-12)


def test_gaussian_dt_call_matches_finite_differences():
    fam = GaussianFamily(sigma=1.0)
    assert fam.dt_call(1.0, 0.0) == pytest.approx(0.19947114020071635, abs=1e-12)
    for t, x in [(0.3, -0.7), (0.5, 0.0), (1.0, 1.3)]:
        h = 1e-6
        fd = (fam.call_price(t + h, x) - fam.call_price(t - h, x)) / (2 * h)
        assert fam.dt_call(t, x) == pytest.approx(fd, rel=1e-5)


def test_gaussian_barycenter_and_inverse():
    fam = GaussianFamily(sigma=1.0)
    assert fam.barycenter(1.0, 0.0) == pytest.approx(0.7978845608028654, abs=1e-12)
    assert fam.barycenter(0.25, 0.3) == pytest.approx(0.6075128801187718, abs=1e-12)
    for m in [0.1, 0.5, 0.7978845608028654, 2.0, 5.0]:
        x = fam.barycenter_inverse(1.0, m)
        assert fam.barycenter(1.0, x) == pytest.approx(m, abs=1e-9)
    # Far right tail: b(x) ~ x + 1/x.
    assert fam.barycenter(1.0, 50.0) == pytest.approx(50.0 + 1.0 / 50.0, rel=1e-4)


def test_gaussian_quantile_cdf_roundtrip():
    fam = GaussianFamily(sigma=2.0)
    for p in [0.01, 0.3, 0.5, 0.9, 0.999]:
        x = fam.quantile(0.7, p)
        assert fam.cdf(0.7, x) == pytest.approx(p, abs=1e-12)


def test_uniform_closed_forms():
    fam = ScaledUniformFamily(half_width=1.0)
    assert fam.call_price(1.0, 0.0) == pytest.approx(0.25, abs=1e-15)
    assert fam.call_price(0.25, 0.1) == pytest.approx(0.08, abs=1e-15)
    assert fam.call_price(1.0, 2.0) == 0.0
    assert fam.call_price(1.0, -3.0) == pytest.approx(3.0, abs=1e-15)
    # d/dt of sqrt(t) * (1 - u)^2 / 4 with u = x / sqrt(t).
    for t, x in [(0.5, 0.2), (1.0, -0.3), (0.25, 0.0)]:
        h = 1e-7
        fd = (fam.call_price(t + h, x) - fam.call_price(t - h, x)) / (2 * h)
        assert fam.dt_call(t, x) == pytest.approx(fd, rel=1e-4)


def test_uniform_barycenter():
    fam = ScaledUniformFamily(half_width=1.0)
    assert fam.barycenter(1.0, 0.0) == pytest.approx(0.5)
    assert fam.barycenter(1.0, -2.0) == pytest.approx(0.0)
    assert fam.barycenter(0.25, 0.1) == pytest.approx(0.3)
    assert fam.barycenter_inverse(1.0, 0.5) == pytest.approx(0.0, abs=1e-12)
    assert fam.barycenter_inverse(1.0, 0.75) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        fam.barycenter_inverse(1.0, 1.5)
    with pytest.raises(ValueError):
        fam.barycenter_inverse(1.0, -0.2)


def test_right_endpoint():
    assert GaussianFamily().right_endpoint(0.7) == math.inf
    assert ScaledUniformFamily(2.0).right_endpoint(0.25) == pytest.approx(1.0)


def test_peacock_check_passes_for_analytic_families():
    for fam in [GaussianFamily(1.0), GaussianFamily(0.5), ScaledUniformFamily(1.5)]:
        report = check_peacock(fam)
        assert report.ok, report.to_dict()


def test_imrv_check():
    assert check_imrv(GaussianFamily(1.0)).ok
    assert check_imrv(ScaledUniformFamily(1.0)).ok


class ShrinkingFamily(GaussianFamily):
    """A deliberately broken family whose calls shrink with t."""

    def call_price(self, t, x):
        return super().call_price(max(1.0 - t, 1e-6), x)


def test_peacock_check_flags_decreasing_calls():
    report = check_peacock(ShrinkingFamily(1.0), t_grid=np.linspace(0.1, 1.0, 5))
    assert not report.ok
    kinds = {v.kind for v in report.violations}
    assert "t-monotonicity" in kinds
    d = report.to_dict()
    assert d["pass"] is False
    assert d["violations"][0]["magnitude"] > 0


def _surface_csv(tmp_path, rows, header="t,x,c"):
    path = tmp_path / "surface.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return str(path)


def test_load_call_surface_roundtrip(tmp_path):
    fam = GaussianFamily(1.0)
    ts = [0.25, 0.5, 1.0]
    xs = np.linspace(-8.0, 8.0, 321)
    rows = [f"{t},{x},{fam.call_price(t, x)}" for t in ts for x in xs]
    tab = load_call_surface(_surface_csv(tmp_path, rows))
    assert isinstance(tab, TabulatedFamily)
    # t=0 row synthesized.
    assert tab.surface.t_grid[0] == 0.0
    assert tab.call_price(0.0, -1.0) == pytest.approx(1.0)
    # Dense grid keeps interpolation error small at tabulated times.
    assert tab.call_price(0.5, 0.3) == pytest.approx(fam.call_price(0.5, 0.3), abs=1e-3)
    report = check_peacock(tab, t_grid=[0.25, 0.5, 1.0], x_grid=xs)
    assert report.ok, report.to_dict()


def test_load_call_surface_errors(tmp_path):
    with pytest.raises(ValueError, match="header"):
        load_call_surface(_surface_csv(tmp_path, ["0.5,0.0,0.2"], header="a,b,c"))
    with pytest.raises(ValueError, match="rectangular"):
        load_call_surface(_surface_csv(tmp_path, ["0.5,0.0,0.2", "0.5,1.0,0.1", "1.0,0.0,0.3"]))
    with pytest.raises(ValueError, match=":3:"):
        load_call_surface(_surface_csv(tmp_path, ["0.5,0.0,0.2", "0.5,oops,0.1"]))
    with pytest.raises(ValueError, match="duplicate"):
        load_call_surface(_surface_csv(tmp_path, ["0.5,0.0,0.2", "0.5,0.0,0.2"]))


def test_tabulated_quantile_survival_consistency(tmp_path):
    fam = GaussianFamily(1.0)
    xs = np.linspace(-8.0, 8.0, 801)
    rows = [f"{t},{x},{fam.call_price(t, x)}" for t in [0.5, 1.0] for x in xs]
    tab = load_call_surface(_surface_csv(tmp_path, rows))
    for x in [-1.0, 0.0, 0.7]:
        assert tab.cdf(1.0, x) == pytest.approx(fam.cdf(1.0, x), abs=2e-2)
        assert tab.survival(1.0, x) == pytest.approx(fam.survival(1.0, x), abs=2e-2)
    # Quantile inverts the staircase cdf.
    for p in [0.1, 0.5, 0.9]:
        x = tab.quantile(1.0, p)
        assert tab.cdf(1.0, x) >= p - 1e-12
    # Barycenter readouts follow the analytic family closely on a dense grid.
    for x in [-0.5, 0.0, 1.0]:
        assert tab.barycenter(1.0, x) == pytest.approx(fam.barycenter(1.0, x), abs=3e-2)
    m = 1.2
    assert tab.barycenter_inverse(1.0, m) == pytest.approx(fam.barycenter_inverse(1.0, m), abs=3e-2)
