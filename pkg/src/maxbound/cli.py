"""Command-line interface.

Subcommands:
  check-family   validate a family's call surface (exit 3 on violations)
  cost           cost curve at configured thresholds -> CSV + minimizers JSON
  bound          price bound for a mixture payoff -> JSON (+ curve files)
  simulate       run the embedding -> embedding JSON + samples CSV
  verify         run one of the portfolio checks (exit 1 on failure)
  gap            simulated primal vs solver bound (exit 1 on violation)

Configuration is an INI file; every command takes --config.  Exit codes:
0 success, 1 failed check, 2 usage error, 3 family validation failure.
All outputs are deterministic: fixed float formatting, sorted JSON keys, no
timestamps.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from typing import List, Optional

import numpy as np

from .marginals import (
    FamilyValidationError,
    GaussianFamily,
    MarginalFamily,
    ScaledUniformFamily,
    check_imrv,
    check_peacock,
    load_call_surface,
)
from .solver import Boundary, Payoff, SolverGrid, cost_curve, price_bound, solve_C
from .simulate import estimate_primal
from .hedging import (
    gap_report,
    martingale_ineq_check,
    verify_dual_routes,
    verify_pathwise,
    verify_superhedge,
)

USAGE_ERROR = 2
CHECK_FAILURE = 1
VALIDATION_FAILURE = 3


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _load_config(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(path)
    return cp


def _floats(text: str) -> List[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _family_from_config(cp: configparser.ConfigParser) -> MarginalFamily:
    if not cp.has_section("family"):
        raise ValueError("config needs a [family] section")
    kind = cp.get("family", "kind", fallback="gaussian").strip()
    if kind == "gaussian":
        return GaussianFamily(sigma=cp.getfloat("family", "sigma", fallback=1.0))
    if kind == "scaled-uniform":
        return ScaledUniformFamily(half_width=cp.getfloat("family", "half_width", fallback=1.0))
    if kind == "tabulated":
        surface = cp.get("family", "surface", fallback=None)
        if not surface:
            raise ValueError("[family] kind=tabulated needs surface=<csv path>")
        return load_call_surface(surface)
    raise ValueError(f"unknown family kind {kind!r}")


def _grid_from_config(cp: configparser.ConfigParser) -> SolverGrid:
    g = SolverGrid()
    if cp.has_section("solver"):
        g.n0 = cp.getint("solver", "n0", fallback=g.n0)
        g.rungs = cp.getint("solver", "rungs", fallback=g.rungs)
        g.nx = cp.getint("solver", "nx", fallback=g.nx)
        g.q_lo = cp.getfloat("solver", "q_lo", fallback=g.q_lo)
        g.delta_frac = cp.getfloat("solver", "delta_frac", fallback=g.delta_frac)
        g.tol = cp.getfloat("solver", "tol", fallback=g.tol)
    return g


def _payoff_from_config(cp: configparser.ConfigParser) -> Payoff:
    phi0 = cp.getfloat("payoff", "phi0", fallback=0.0) if cp.has_section("payoff") else 0.0
    thresholds = _floats(cp.get("payoff", "thresholds", fallback="")) if cp.has_section("payoff") else []
    weights_text = cp.get("payoff", "weights", fallback="") if cp.has_section("payoff") else ""
    weights = _floats(weights_text) if weights_text else [1.0] * len(thresholds)
    if len(weights) != len(thresholds):
        raise ValueError("[payoff] weights must match thresholds")
    return Payoff(phi0=phi0, atoms=tuple(zip(thresholds, weights)))


def _validate_family(family: MarginalFamily, out_dir: str) -> bool:
    report = check_peacock(family)
    _write_json(os.path.join(out_dir, "validation.json"), report.to_dict())
    return report.ok


def _ensure_out(ns) -> str:
    out = ns.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_curve_files(curve, out_dir: str) -> None:
    rows = [
        [_fmt(m), _fmt(v), "1" if c else "0"]
        for m, v, c in zip(curve.ms, curve.values, curve.converged)
    ]
    _write_csv(os.path.join(out_dir, "cost_curve.csv"), "m,C,converged", rows)
    sidecar = [
        {
            "m": float(m),
            "breakpoints": [float(s) for s in b.breakpoints],
            "values": [float(z) for z in b.values],
        }
        for m, b in zip(curve.ms, curve.boundaries)
    ]
    _write_json(os.path.join(out_dir, "cost_minimizers.json"), sidecar)


def _cmd_check_family(ns) -> int:
    cp = _load_config(ns.config)
    family = _family_from_config(cp)
    out = _ensure_out(ns)
    ok = _validate_family(family, out)
    imrv = check_imrv(family)
    _write_json(os.path.join(out, "imrv.json"), imrv.to_dict())
    if not ok:
        print("family validation: FAIL (see validation.json)")
        return VALIDATION_FAILURE
    print(f"family validation: pass (barycenter monotone in t: {imrv.ok})")
    return 0


def _cmd_cost(ns) -> int:
    cp = _load_config(ns.config)
    family = _family_from_config(cp)
    out = _ensure_out(ns)
    if not _validate_family(family, out):
        print("family validation: FAIL (see validation.json)")
        return VALIDATION_FAILURE
    levels_text = cp.get("solver", "levels", fallback="") if cp.has_section("solver") else ""
    levels = _floats(levels_text)
    if not levels:
        print("error: [solver] levels is required for the cost command", file=sys.stderr)
        return USAGE_ERROR
    grid = _grid_from_config(cp)
    curve = cost_curve(family, levels, grid=grid)
    _write_curve_files(curve, out)
    for m, v, c in zip(curve.ms, curve.values, curve.converged):
        print(f"C({_fmt(m)}) = {_fmt(v)}{'' if c else '  (not converged)'}")
    return 0


def _cmd_bound(ns) -> int:
    cp = _load_config(ns.config)
    family = _family_from_config(cp)
    out = _ensure_out(ns)
    if not _validate_family(family, out):
        print("family validation: FAIL (see validation.json)")
        return VALIDATION_FAILURE
    payoff = _payoff_from_config(cp)
    if not payoff.atoms:
        print("error: [payoff] thresholds is required for the bound command", file=sys.stderr)
        return USAGE_ERROR
    grid = _grid_from_config(cp)
    pb = price_bound(family, payoff, grid=grid)
    _write_curve_files(pb.curve, out)
    _write_json(
        os.path.join(out, "bound.json"),
        {
            "total": pb.total,
            "phi0": payoff.phi0,
            "atoms": [{"m": float(m), "weight": float(w)} for m, w in payoff.atoms],
        },
    )
    print(f"price bound: {_fmt(pb.total)}")
    return 0


def _sim_params(cp, ns):
    sec = "simulation"
    n_paths = cp.getint(sec, "n_paths", fallback=10000)
    dt = cp.getfloat(sec, "dt", fallback=1e-3)
    labels = _floats(cp.get(sec, "labels", fallback="0.25 0.5 1.0"))
    cap_time = cp.getfloat(sec, "cap_time", fallback=32.0)
    bridge = cp.getboolean(sec, "bridge", fallback=False)
    antithetic = cp.getboolean(sec, "antithetic", fallback=False)
    seed = ns.seed
    if seed is None and cp.has_option(sec, "seed"):
        seed = cp.getint(sec, "seed")
    return n_paths, dt, labels, cap_time, bridge, antithetic, seed


def _cmd_simulate(ns) -> int:
    cp = _load_config(ns.config)
    family = _family_from_config(cp)
    out = _ensure_out(ns)
    n_paths, dt, labels, cap_time, bridge, antithetic, seed = _sim_params(cp, ns)
    if seed is None:
        print("error: simulate needs --seed (or [simulation] seed)", file=sys.stderr)
        return USAGE_ERROR
    if not _validate_family(family, out):
        print("family validation: FAIL (see validation.json)")
        return VALIDATION_FAILURE
    try:
        result = estimate_primal(
            family,
            labels,
            n_paths=n_paths,
            dt=dt,
            seed=seed,
            threads=ns.threads,
            cap_time=cap_time,
            bridge=bridge,
            antithetic=antithetic,
            force=ns.force,
        )
    except FamilyValidationError as exc:
        if exc.report is not None:
            _write_json(os.path.join(out, "imrv.json"), exc.report.to_dict())
        print(f"family validation: FAIL ({exc})")
        return VALIDATION_FAILURE
    _write_json(os.path.join(out, "embedding.json"), result.to_json_dict(family))
    rows = []
    for p in range(result.n_paths):
        for k, t in enumerate(result.labels):
            rows.append(
                [
                    str(p),
                    _fmt(t),
                    _fmt(result.values[p, k]),
                    _fmt(result.maxs[p, k]),
                    str(int(result.taus[p, k])),
                ]
            )
    _write_csv(os.path.join(out, "samples.csv"), "path_id,label,value,max,tau_steps", rows)
    print(
        f"simulated {result.n_paths} paths ({result.backend} backend), "
        f"{int(result.truncated.sum())} truncated"
    )
    return 0


def _cmd_verify(ns) -> int:
    cp = _load_config(ns.config)
    out = _ensure_out(ns)
    sec = "verify"
    check = cp.get(sec, "check", fallback="pathwise") if cp.has_section(sec) else "pathwise"
    seed = ns.seed if ns.seed is not None else (
        cp.getint(sec, "seed", fallback=0) if cp.has_section(sec) else 0
    )
    if check == "pathwise":
        n_cases = cp.getint(sec, "n_cases", fallback=10000) if cp.has_section(sec) else 10000
        tol = cp.getfloat(sec, "tol", fallback=1e-12) if cp.has_section(sec) else 1e-12
        report = verify_pathwise(n_cases=n_cases, seed=seed, tol=tol)
        extras = {}
    elif check == "dual-routes":
        family = _family_from_config(cp)
        m = cp.getfloat(sec, "m", fallback=1.2)
        n_cases = cp.getint(sec, "n_cases", fallback=100)
        tol = cp.getfloat(sec, "tol", fallback=1e-6)
        report = verify_dual_routes(family, m, n_cases=n_cases, seed=seed, tol=tol)
        extras = {}
    elif check == "superhedge":
        family = _family_from_config(cp)
        m = cp.getfloat(sec, "m", fallback=1.2)
        n_paths = cp.getint(sec, "n_paths", fallback=10000)
        grid = _grid_from_config(cp)
        res = solve_C(family, m, grid=grid)
        boundary = res.boundary
        _, dt, _, cap_time, bridge, antithetic, _ = _sim_params(cp, ns)
        sim = estimate_primal(
            family,
            list(boundary.breakpoints),
            n_paths=n_paths,
            dt=dt,
            seed=seed,
            threads=ns.threads,
            cap_time=cap_time,
            bridge=bridge,
            antithetic=antithetic,
            force=ns.force,
        )
        report = verify_superhedge(sim, m, boundary)
        extras = {"bound": res.value}
    elif check == "martingale":
        family = _family_from_config(cp)
        m = cp.getfloat(sec, "m", fallback=1.2)
        n_paths = cp.getint(sec, "n_paths", fallback=100000)
        grid = _grid_from_config(cp)
        res = solve_C(family, m, grid=grid)
        mc = martingale_ineq_check(m, res.boundary, n_paths=n_paths, seed=seed)
        payload = mc.to_dict()
        payload.update(
            {
                "check": "martingale",
                "n_cases": n_paths,
                "min_slack": mc.rhs_mean - mc.lhs_mean,
                "failures": [] if mc.ok else [{"case_id": 0, "slack": mc.rhs_mean - mc.lhs_mean}],
            }
        )
        _write_json(os.path.join(out, "verify_martingale.json"), payload)
        print(
            f"martingale check: lhs={_fmt(mc.lhs_mean)} rhs={_fmt(mc.rhs_mean)} "
            f"(analytic {_fmt(mc.rhs_analytic)}) -> {'pass' if mc.ok else 'FAIL'}"
        )
        return 0 if mc.ok else CHECK_FAILURE
    else:
        print(f"error: unknown verify check {check!r}", file=sys.stderr)
        return USAGE_ERROR
    payload = report.to_dict()
    payload.update(extras)
    _write_json(os.path.join(out, f"verify_{report.check}.json"), payload)
    print(
        f"{report.check} check: {report.n_cases} cases, min slack {_fmt(report.min_slack)}, "
        f"{len(report.failures)} failures -> {'pass' if report.ok else 'FAIL'}"
    )
    return 0 if report.ok else CHECK_FAILURE


def _cmd_gap(ns) -> int:
    cp = _load_config(ns.config)
    family = _family_from_config(cp)
    out = _ensure_out(ns)
    n_paths, dt, labels, cap_time, bridge, antithetic, seed = _sim_params(cp, ns)
    if seed is None:
        print("error: gap needs --seed (or [simulation] seed)", file=sys.stderr)
        return USAGE_ERROR
    sec = "verify"
    m = cp.getfloat(sec, "m", fallback=1.2) if cp.has_section(sec) else 1.2
    allowance = cp.getfloat(sec, "allowance", fallback=0.01) if cp.has_section(sec) else 0.01
    grid = _grid_from_config(cp)
    res = solve_C(family, m, grid=grid)
    try:
        sim = estimate_primal(
            family,
            labels,
            n_paths=n_paths,
            dt=dt,
            seed=seed,
            threads=ns.threads,
            cap_time=cap_time,
            bridge=bridge,
            antithetic=antithetic,
            force=ns.force,
            boundary_shift=ns.shift,
        )
    except FamilyValidationError as exc:
        if exc.report is not None:
            _write_json(os.path.join(out, "imrv.json"), exc.report.to_dict())
        print(f"family validation: FAIL ({exc})")
        return VALIDATION_FAILURE
    report = gap_report(sim, m, res.value, allowance=allowance)
    _write_json(os.path.join(out, "gap.json"), report.to_dict())
    status = "ok" if report.ok else report.flag
    print(
        f"primal {_fmt(report.primal)} vs bound {_fmt(report.bound)} "
        f"(ci99 {_fmt(report.ci99)}) -> {status}"
    )
    return 0 if report.ok else CHECK_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxbound",
        description="Sharp bounds on maximum-exceedance probabilities: solver, "
        "simulator, and portfolio verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_seed=False):
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=None, help="random seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument(
            "--force",
            action="store_true",
            help="simulate even if the barycenter monotonicity check fails",
        )

    p = sub.add_parser("check-family", help="validate the family's call surface")
    common(p)
    p.set_defaults(func=_cmd_check_family)

    p = sub.add_parser("cost", help="cost curve at configured thresholds")
    common(p)
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("bound", help="price bound for a mixture payoff")
    common(p)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("simulate", help="run the embedding simulation")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify", help="run a portfolio check from [verify]")
    common(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("gap", help="simulated primal vs solver bound")
    common(p)
    p.add_argument(
        "--shift",
        type=float,
        default=0.0,
        help="diagnostic upward shift of the simulation boundaries",
    )
    p.set_defaults(func=_cmd_gap)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return ns.func(ns)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (ValueError, KeyError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
