"""Walk simulation of the iterated stopping-rule embedding.

A path is a scaled random walk started at 0.  For each label time t there is
a falling boundary in max-coordinates: stop label t the first time the walk
value drops to or below the boundary evaluated at the walk's running max.
When the barycenter of the marginals is non-decreasing in t, stopping labels
in order this way embeds each marginal at its label while pushing the running
maximum as high as the marginals allow, which is what makes the simulated
exceedance probabilities attain the solver's bound.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import _backend
from .marginals import FamilyValidationError, MarginalFamily, check_imrv


def ay_boundary(family: MarginalFamily, t: float, m: float) -> float:
    """Stop level at label t for a path whose running max is m.

    The inverse of the upper-tail barycenter, extended by -inf below its
    range (never stop while the max is still tiny) and by m at and above the
    right endpoint (stop on touch once the max saturates the support).
    """
    if t <= 0.0:
        raise ValueError("labels must be positive")
    if m <= 0.0:
        return -np.inf
    if m >= family.right_endpoint(t):
        return float(m)
    return family.barycenter_inverse(t, m)


def boundary_tables(
    family: MarginalFamily,
    labels: Sequence[float],
    n_knots: int = 4001,
    q_eps: float = 1e-8,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Monotone lookup tables (max knots, stop levels) per label.

    Built by the forward map: sample quantile-spaced levels x and tabulate
    (barycenter(t, x), x), which inverts the barycenter without root-finding.
    Knots are linear in quantile through the body and log-spaced into both
    tails: the boundary is steep in the max near its endpoints, and evenly
    spaced quantiles leave it badly interpolated exactly where paths with a
    tiny or huge running max consult it.
    """
    tables = []
    n_tail = max(n_knots // 10, 16)
    for t in labels:
        ps = np.linspace(q_eps, 1.0 - q_eps, n_knots)
        tail = np.geomspace(q_eps, 0.05, n_tail)
        ps = np.unique(np.concatenate([ps, tail, 1.0 - tail]))
        xs = np.unique(np.asarray(family.quantile(t, ps), dtype=float))
        ms = np.asarray(family.barycenter(t, xs), dtype=float)
        keep = np.concatenate(([True], np.diff(ms) > 0.0))
        ms, xs = ms[keep], xs[keep]
        if ms.size < 2:
            raise ValueError(f"degenerate boundary table at label t={t}")
        tables.append((ms, xs))
    return tables


def _concat_tables(tables) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    offsets = np.zeros(len(tables) + 1, dtype=np.int64)
    for k, (ms, _) in enumerate(tables):
        offsets[k + 1] = offsets[k] + ms.size
    mcat = np.concatenate([ms for ms, _ in tables])
    xicat = np.concatenate([xs for _, xs in tables])
    return mcat, xicat, offsets


@dataclass
class PathRecord:
    """One fully retained walk with its per-label stops (for diagnostics)."""

    dt: float
    walk: np.ndarray  # positions, walk[0] = 0
    taus: np.ndarray  # steps taken at each label stop
    values: np.ndarray
    maxs: np.ndarray
    truncated: bool


def iterated_ay_embed(
    family: Optional[MarginalFamily],
    labels: Sequence[float],
    walk: np.ndarray,
    tables=None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Reference cascade of label stops along an explicit walk.

    walk[i] is the position after i steps (walk[0] = 0).  Uses exact
    barycenter inversion unless lookup tables are supplied.  Returns
    (taus, values, maxs, truncated).
    """
    labels = np.asarray(labels, dtype=float)
    K = labels.size
    walk = np.asarray(walk, dtype=float)
    if tables is None:
        def level(k, M):
            return ay_boundary(family, float(labels[k]), float(M))
    else:
        from ._kernels_py import _lookup_scalar

        def level(k, M):
            return _lookup_scalar(tables[k][0], tables[k][1], float(M))

    taus = np.zeros(K, dtype=np.int64)
    values = np.zeros(K)
    maxs = np.zeros(K)
    k = 0
    M = 0.0
    for i in range(walk.size):
        w = walk[i]
        M = max(M, w)
        while k < K and w <= level(k, M):
            taus[k] = i
            values[k] = w
            maxs[k] = M
            k += 1
        if k >= K:
            return taus, values, maxs, False
    while k < K:
        # Same settlement as the kernels: still-running labels close on their
        # boundary at the final max rather than on the unstopped walk value.
        fill = level(k, M)
        if not np.isfinite(fill) or fill > walk[-1]:
            fill = walk[-1]
        taus[k] = walk.size - 1
        values[k] = fill
        maxs[k] = M
        k += 1
    return taus, values, maxs, True


@dataclass
class PrimalEstimate:
    p: float
    stderr: float
    ci99: float
    n_paths: int


@dataclass
class EmbeddingResult:
    labels: np.ndarray
    dt: float
    seed: int
    n_paths: int
    values: np.ndarray  # (n_paths, K) stop values
    maxs: np.ndarray  # (n_paths, K) running max at each stop
    taus: np.ndarray  # (n_paths, K) steps taken at each stop
    truncated: np.ndarray  # (n_paths,) bool
    backend: str

    def estimates(self) -> List[dict]:
        out = []
        n = self.n_paths
        for k, t in enumerate(self.labels):
            v = self.values[:, k]
            out.append(
                {
                    "label": float(t),
                    "mean": float(v.mean()),
                    "stderr": float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
                }
            )
        return out

    def ks_stats(self, family: MarginalFamily) -> List[dict]:
        return [
            {"t": float(t), "stat": float(marginal_ks(family, float(t), self.values[:, k]))}
            for k, t in enumerate(self.labels)
        ]

    def to_json_dict(self, family: Optional[MarginalFamily] = None) -> dict:
        out = {
            "n_paths": int(self.n_paths),
            "dt": float(self.dt),
            "seed": int(self.seed),
            "truncated": int(self.truncated.sum()),
            "estimates": self.estimates(),
        }
        out["ks"] = self.ks_stats(family) if family is not None else []
        return out


def estimate_primal(
    family: MarginalFamily,
    labels: Sequence[float],
    n_paths: int,
    dt: float,
    seed: int,
    threads: int = 1,
    cap_time: float = 32.0,
    bridge: bool = False,
    antithetic: bool = False,
    force: bool = False,
    backend: Optional[str] = None,
    boundary_shift: float = 0.0,
    n_knots: int = 4001,
) -> EmbeddingResult:
    """Simulate the embedding and return per-label stop samples.

    Refuses families whose barycenter decreases in t somewhere (the stopping
    rule is only an embedding under that monotonicity) unless ``force`` is
    set.  ``bridge`` adds sub-step resolution: exact Brownian-bridge peaks
    feed the running max and within-step boundary crossings are accepted at
    the exact bridge-hitting probability, which removes most of the step-size
    bias in the recorded stops.  ``boundary_shift`` displaces every stop
    boundary upward; it exists as a harness control to confirm that bound
    violations are detectable, not for production use.
    """
    labels = np.asarray(labels, dtype=float)
    if labels.size == 0 or np.any(np.diff(labels) <= 0.0):
        raise ValueError("labels must be non-empty and strictly increasing")
    if labels[0] <= 0.0 or labels[-1] > 1.0:
        raise ValueError("labels must lie in (0, 1]")
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if not (0 <= int(seed) < 2**63):
        raise ValueError("seed must be a non-negative 63-bit integer")
    if not force:
        report = check_imrv(family)
        if not report.ok:
            raise FamilyValidationError(
                "family barycenter decreases in t; the single-rule embedding "
                "does not apply (pass force=True to simulate anyway)",
                report,
            )
    name, kernel = _backend.resolve(backend)
    tables = boundary_tables(family, labels, n_knots=n_knots)
    if boundary_shift != 0.0:
        tables = [(ms, xs + boundary_shift) for ms, xs in tables]
    mcat, xicat, offsets = _concat_tables(tables)
    K = labels.size
    cap = int(round(cap_time / dt))
    out_vals = np.empty((n_paths, K), dtype=np.float64)
    out_maxs = np.empty((n_paths, K), dtype=np.float64)
    out_taus = np.empty((n_paths, K), dtype=np.int64)
    out_trunc = np.zeros(n_paths, dtype=np.uint8)

    def run(lo: int, hi: int):
        kernel.simulate_paths(
            mcat,
            xicat,
            offsets,
            float(dt),
            cap,
            int(seed),
            lo,
            hi,
            K,
            kernel.BLOCK,
            bool(antithetic),
            bool(bridge),
            out_vals,
            out_maxs,
            out_taus,
            out_trunc,
        )

    threads = max(1, int(threads))
    if threads == 1 or n_paths < 2 * threads:
        run(0, n_paths)
    else:
        bounds = np.linspace(0, n_paths, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(run, int(bounds[i]), int(bounds[i + 1]))
                for i in range(threads)
            ]
            for f in futures:
                f.result()
    return EmbeddingResult(
        labels=labels,
        dt=float(dt),
        seed=int(seed),
        n_paths=int(n_paths),
        values=out_vals,
        maxs=out_maxs,
        taus=out_taus,
        truncated=out_trunc.astype(bool),
        backend=name,
    )


def reference_path(
    family: MarginalFamily,
    labels: Sequence[float],
    dt: float,
    seed: int,
    path_index: int,
    cap_time: float = 32.0,
    antithetic: bool = False,
    n_knots: int = 4001,
) -> PathRecord:
    """Re-run one kernel path while keeping the whole walk (no bridge mode).

    Uses the same per-path stream and tables as the kernels, so its stops can
    be compared to kernel output index for index.
    """
    from ._kernels_py import BLOCK

    labels = np.asarray(labels, dtype=float)
    tables = boundary_tables(family, labels, n_knots=n_knots)
    cap = int(round(cap_time / dt))
    p_eff = (path_index >> 1) if antithetic else path_index
    gen = np.random.Generator(
        np.random.Philox(key=np.array([seed, p_eff], dtype=np.uint64))
    )
    sign = -1.0 if (antithetic and (path_index & 1)) else 1.0
    chunks = [np.zeros(1)]
    w = 0.0
    n_steps = 0
    while n_steps < cap:
        z = gen.standard_normal(BLOCK)
        nuse = min(BLOCK, cap - n_steps)
        seg = w + np.cumsum((sign * np.sqrt(dt)) * z[:nuse])
        chunks.append(seg)
        w = float(seg[-1])
        n_steps += nuse
        taus, values, maxs, trunc = iterated_ay_embed(
            family, labels, np.concatenate(chunks), tables=tables
        )
        if not trunc:
            walk = np.concatenate(chunks)
            return PathRecord(dt=float(dt), walk=walk, taus=taus, values=values, maxs=maxs, truncated=False)
    walk = np.concatenate(chunks)
    taus, values, maxs, trunc = iterated_ay_embed(family, labels, walk, tables=tables)
    return PathRecord(dt=float(dt), walk=walk, taus=taus, values=values, maxs=maxs, truncated=trunc)


def sample_brownian(
    times: Sequence[float],
    n_paths: int,
    seed: int,
    sigma: float = 1.0,
    with_uniforms: bool = False,
):
    """Exact joint samples of a scaled Brownian path at the given times.

    Returns W of shape (n_paths, len(times)); with_uniforms adds a matched
    (n_paths, len(times) - 1) block of uniforms for per-interval extremes.
    The stream key is disjoint from the per-path walk keys.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0.0):
        raise ValueError("times must be an increasing vector with >= 2 nodes")
    if times[0] != 0.0:
        raise ValueError("times must start at 0")
    gen = np.random.Generator(
        np.random.Philox(key=np.array([seed, 0xFFFFFFFFFFFFFFF1], dtype=np.uint64))
    )
    dts = np.diff(times)
    z = gen.standard_normal((n_paths, dts.size))
    W = np.concatenate(
        [np.zeros((n_paths, 1)), np.cumsum(z * (sigma * np.sqrt(dts))[None, :], axis=1)],
        axis=1,
    )
    if with_uniforms:
        U = gen.random((n_paths, dts.size))
        return W, U
    return W


def marginal_ks(family: MarginalFamily, t: float, samples: np.ndarray) -> float:
    """One-sample Kolmogorov-Smirnov distance between samples and mu_t."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    if n == 0:
        raise ValueError("no samples")
    F = np.asarray(family.cdf(t, s), dtype=float)
    grid = np.arange(n, dtype=float)
    d_plus = np.max((grid + 1.0) / n - F)
    d_minus = np.max(F - grid / n)
    return float(max(d_plus, d_minus))


def max_exceedance_prob(result: EmbeddingResult, m: float) -> PrimalEstimate:
    """Fraction of paths whose running max at the final stop reaches m."""
    hits = result.maxs[:, -1] >= m
    n = result.n_paths
    p = float(hits.mean())
    stderr = float(np.sqrt(max(p * (1.0 - p), 0.0) / n))
    z99 = float(stats.norm.ppf(0.995))
    return PrimalEstimate(p=p, stderr=stderr, ci99=z99 * stderr, n_paths=n)
