import numpy as np
import pytest

from maxbound import _backend
from maxbound.benchmark import run as benchmark_run
from maxbound.simulate import estimate_primal


def test_available_backends_contains_python():
    names = _backend.available_backends()
    assert "python" in names


def test_resolve():
    name, mod = _backend.resolve("python")
    assert name == "python" and hasattr(mod, "simulate_paths")
    default_name, _ = _backend.resolve(None)
    assert default_name in _backend.available_backends()
    with pytest.raises(ValueError):
        _backend.resolve("fortran")


def test_env_variable_selects_backend(monkeypatch):
    monkeypatch.setenv("MAXBOUND_BACKEND", "python")
    assert _backend.resolve(None)[0] == "python"
    monkeypatch.setenv("MAXBOUND_BACKEND", "nonsense")
    with pytest.raises(ValueError):
        _backend.resolve(None)


needs_compiled = pytest.mark.skipif(
    "compiled" not in _backend.available_backends(),
    reason="compiled kernels not built",
)


@needs_compiled
@pytest.mark.parametrize("bridge", [False, True])
@pytest.mark.parametrize("antithetic", [False, True])
def test_backends_agree_bitwise(gauss, bridge, antithetic):
    kwargs = dict(
        labels=[0.25, 0.5, 1.0],
        n_paths=400,
        dt=1e-3,
        seed=31,
        bridge=bridge,
        antithetic=antithetic,
    )
    a = estimate_primal(gauss, backend="compiled", **kwargs)
    b = estimate_primal(gauss, backend="python", **kwargs)
    assert a.backend == "compiled" and b.backend == "python"
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.maxs, b.maxs)
    np.testing.assert_array_equal(a.taus, b.taus)
    np.testing.assert_array_equal(a.truncated, b.truncated)


def test_thread_count_does_not_change_results(gauss):
    base = estimate_primal(gauss, [0.5, 1.0], n_paths=301, dt=1e-3, seed=5, threads=1)
    multi = estimate_primal(gauss, [0.5, 1.0], n_paths=301, dt=1e-3, seed=5, threads=3)
    np.testing.assert_array_equal(base.values, multi.values)
    np.testing.assert_array_equal(base.taus, multi.taus)


def test_antithetic_pairs_mirror_first_step(gauss):
    res = estimate_primal(gauss, [1.0], n_paths=8, dt=1e-2, seed=2, antithetic=True)
    assert res.n_paths == 8
    # Pairs share a stream with opposite signs, so they cannot be identical.
    assert not np.array_equal(res.values[0::2], res.values[1::2])


def test_benchmark_smoke(capsys):
    rc = benchmark_run(200, 1e-3, [0.5, 1.0], seed=3, bridge=False)
    out = capsys.readouterr().out
    assert rc == 0
    assert "backends:" in out
    if "compiled" in _backend.available_backends():
        assert "matches compiled exactly" in out
