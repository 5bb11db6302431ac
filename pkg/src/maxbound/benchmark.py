"""Backend benchmark: compiled kernel vs pure-Python fallback.

Runs the same embedding workload through every available backend, checks that
the outputs agree bit for bit, and prints per-backend throughput.

    python -m maxbound.benchmark --n-paths 2000 --dt 1e-3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ._backend import available_backends
from .marginals import GaussianFamily
from .simulate import estimate_primal


def run(n_paths: int, dt: float, labels, seed: int, bridge: bool) -> int:
    family = GaussianFamily()
    names = available_backends()
    print(f"backends: {', '.join(names)}")
    print(f"workload: {n_paths} paths, dt={dt:g}, labels={list(labels)}, bridge={bridge}")
    results = {}
    for name in names:
        t0 = time.perf_counter()
        res = estimate_primal(
            family,
            labels,
            n_paths=n_paths,
            dt=dt,
            seed=seed,
            bridge=bridge,
            backend=name,
        )
        elapsed = time.perf_counter() - t0
        steps = int(res.taus[:, -1].sum())
        results[name] = (res, elapsed)
        print(
            f"  {name:>8}: {elapsed:8.3f}s  "
            f"{n_paths / elapsed:10.0f} paths/s  {steps / elapsed:12.0f} steps/s"
        )
    if len(results) > 1:
        ref_name = names[0]
        ref = results[ref_name][0]
        for name in names[1:]:
            other = results[name][0]
            same = (
                np.array_equal(ref.values, other.values)
                and np.array_equal(ref.maxs, other.maxs)
                and np.array_equal(ref.taus, other.taus)
            )
            if not same:
                print(f"MISMATCH: {name} disagrees with {ref_name}")
                return 1
            ratio = results[name][1] / results[ref_name][1]
            print(f"  {name} matches {ref_name} exactly ({ref_name} is {ratio:.1f}x faster)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-paths", type=int, default=2000)
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--labels", type=float, nargs="+", default=[0.25, 0.5, 1.0])
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--bridge", action="store_true")
    args = parser.parse_args(argv)
    return run(args.n_paths, args.dt, args.labels, args.seed, args.bridge)


if __name__ == "__main__":
    raise SystemExit(main())
