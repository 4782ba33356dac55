"""Command line entry point: ``odecover <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .covering import (
    SOLUTIONS,
    TARGETS,
    BoundReport,
    ClassConstants,
    formula_report,
    general_bound,
    kolmogorov_lower,
    kolmogorov_upper,
    parametric_bound,
    separable_lower,
    solution_class_bound,
)
from .derivs import certify_bounds, solution_derivatives
from .errors import OdeCoverError
from .odes import AUTONOMOUS, KINDS, load_ode

FORMULAS = ("kolmogorov", "general", "parametric", "z", "w", "solution", "separable")


def _print_json(obj):
    sys.stdout.write(artifacts.json_text(obj))


def parse_sweep(spec: str) -> list:
    """``lo:hi:count`` (geometric grid) or a comma-separated list."""
    if ":" in spec:
        lo, hi, count = spec.split(":")
        return [float(v) for v in np.geomspace(float(lo), float(hi), int(count))]
    return [float(v) for v in spec.split(",") if v.strip()]


# ------------------------------------------------------------------ derivs

def cmd_derivs(args):
    ode = load_ode(args.ode)
    certs = certify_bounds(ode, args.kmax, grid_points=args.grid_points)
    at_x0 = solution_derivatives(ode, args.kmax, ode.x0, ode.y0)
    out = {
        "ode": ode.name,
        "kind": ode.kind,
        "x0": ode.x0,
        "y0": ode.y0,
        "existence_interval": ode.existence_interval(),
        "derivatives_at_x0": np.asarray(at_x0, float).ravel().tolist(),
        "certificates": [c.to_dict() for c in certs],
    }
    if args.json_out:
        artifacts.write_json(args.json_out, out)
    for c in certs:
        print(f"k={c.order:2d}  max|y^(k)|={c.observed_max:.6g}  bound={c.bound:.6g}  slack={c.slack:.6g}")
    return 0


# ------------------------------------------------------------------ bounds

def _load_consts(path):
    if path is None:
        return ClassConstants()
    with open(path, encoding="utf-8") as fh:
        return ClassConstants.from_dict(json.load(fh))


def bound_reports(formula, delta, gamma, consts, kind=AUTONOMOUS, target=SOLUTIONS) -> list:
    if formula == "kolmogorov":
        return [
            BoundReport(kolmogorov_upper(delta, gamma), "KolmogorovUpper", {"value": kolmogorov_upper(delta, gamma)}, delta, gamma),
            BoundReport(kolmogorov_lower(delta, gamma), "KolmogorovLower", {"value": kolmogorov_lower(delta, gamma)}, delta, gamma),
        ]
    if formula == "general":
        rep = general_bound(delta, lambda d: kolmogorov_upper(d, gamma), consts)
        return [BoundReport(rep.value, rep.formula, rep.terms, delta, gamma)]
    if formula == "parametric":
        return [parametric_bound(delta, consts)]
    if formula in ("z", "w"):
        fam = formula.upper()
        return [formula_report(f"{fam}{i}", delta, gamma, consts) for i in (1, 2, 3)]
    if formula == "solution":
        return [solution_class_bound(delta, gamma, consts, kind, target)]
    if formula == "separable":
        v = separable_lower(delta, gamma, target)
        return [BoundReport(v, "SeparableLower", {"value": v}, delta, gamma)]
    raise ValueError(f"unknown formula {formula!r}")


def cmd_bounds(args):
    consts = _load_consts(args.consts)
    gamma = args.gamma if args.gamma is not None else args.beta
    deltas = parse_sweep(args.sweep) if args.sweep else [args.delta]
    reports = []
    for d in deltas:
        reports.extend(bound_reports(args.formula, d, gamma, consts, args.kind, args.target))
    header, rows = artifacts.bound_rows(reports)
    if args.csv_out:
        artifacts.write_csv(args.csv_out, header, rows)
    sys.stdout.write(artifacts.csv_text(header, rows))
    return 0


# ------------------------------------------------------------------- rates

def cmd_rates(args):
    from .rates import RateParams, critical_radius, figure1_series, figure2_series, kernel_radius

    if args.figure == 1:
        series = figure1_series(args.delta, args.gamma_max)
        rows = artifacts.series_rows(series)
        if args.csv_out:
            artifacts.write_csv(args.csv_out, artifacts.SERIES_COLUMNS, rows)
        sys.stdout.write(artifacts.csv_text(artifacts.SERIES_COLUMNS, rows))
        print(f"# crossover gamma: {series.crossover}", file=sys.stderr)
        return 0
    p = RateParams(args.n, args.sigma, args.beta)
    if args.figure == 2:
        rows = artifacts.series_rows(figure2_series(p, args.gamma_max))
        if args.csv_out:
            artifacts.write_csv(args.csv_out, artifacts.SERIES_COLUMNS, rows)
        sys.stdout.write(artifacts.csv_text(artifacts.SERIES_COLUMNS, rows))
        return 0
    out = {"critical_radius": critical_radius(p, args.kind).to_dict(),
           "kernel_radius": kernel_radius(p).to_dict(), "n": p.n, "sigma": p.sigma, "beta": p.beta}
    if args.csv_out:
        rows = [("critical_radius", out["critical_radius"]["r_squared"]),
                ("kernel_radius", out["kernel_radius"]["r_squared"])]
        artifacts.write_csv(args.csv_out, ("quantity", "r_squared"), rows)
    _print_json(out)
    return 0


# --------------------------------------------------------------------- fit

def _read_xy(path):
    header, rows = artifacts.read_csv(path)
    try:
        ix, iy = header.index("x"), header.index("y")
    except ValueError:
        raise ValueError("data CSV needs columns x and y") from None
    xs = np.array([float(r[ix]) for r in rows])
    ys = np.array([float(r[iy]) for r in rows])
    order = np.argsort(xs, kind="stable")
    return xs[order], ys[order]


def cmd_fit(args):
    from .estimators import DesignSample, in_sample_mse
    from .experiment import run_fit

    xs, ys = _read_xy(args.data)
    data = DesignSample(xs, ys)
    params = {"beta": args.beta, "variant": args.variant, "C": args.C, "cv": args.cv,
              "R": args.R, "T": args.T, "model": args.model, "radius": args.radius}
    fit = run_fit(args.method, data, params)
    out = fit.to_dict()
    if args.truth:
        ode = load_ode(args.truth)
        if ode.solution is not None:
            truth = ode.solution
        else:
            from .derivs import taylor_integrate
            truth = lambda x: taylor_integrate(ode, x).y  # noqa: E731
        out["mse"] = in_sample_mse(fit, truth, xs)
    if args.json_out:
        artifacts.write_json(args.json_out, out)
    _print_json(out)
    return 0


# ---------------------------------------------------------------- gronwall

def cmd_gronwall(args):
    from .gronwall import load_pair, verify_pair

    pair = load_pair(args.pair)
    right = pair.domain[1] if not args.enforce_domain else min(pair.domain[1], pair.existence_interval())
    grid = np.linspace(pair.a0, pair.a0 + right, args.grid_points)
    rep = verify_pair(pair, grid, args.m, args.k, enforce_domain=args.enforce_domain)
    out = rep.to_dict()
    out["pair"] = pair.name
    if args.json_out:
        artifacts.write_json(args.json_out, out)
    _print_json(out)
    return 0


# ---------------------------------------------------------------- simulate

def cmd_simulate(args):
    from .experiment import ExperimentConfig, rate_regression, simulate, theory_rows

    cfg = ExperimentConfig.from_ini(args.config)
    out_dir = Path(args.out_dir)
    records = simulate(cfg, jobs=args.jobs)
    artifacts.emit(records, "csv", out_dir / cfg.runs_path)
    beta = int(dict(cfg.method_params).get("beta", 0))
    try:
        rates = rate_regression(records, cfg.method, cfg.aggregate, beta=beta).to_dict()
    except OdeCoverError as exc:
        rates = {"error": f"{type(exc).__name__}: {exc}"}
    rates.update(config_hash=cfg.config_hash, design=cfg.design,
                 failed=sum(r.failed for r in records), records=len(records))
    artifacts.write_json(out_dir / cfg.rates_path, rates)
    if cfg.bounds_path:
        artifacts.emit(theory_rows(cfg, records, beta), "csv", out_dir / cfg.bounds_path)
    _print_json(rates)
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="odecover", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derivs", help="solution derivatives and factorial-bound certificates")
    p.add_argument("--ode", required=True, help="builtin name (e.g. extremal, linear:0.5, separable:sin) or JSON file")
    p.add_argument("--kmax", type=int, default=6)
    p.add_argument("--grid-points", type=int, default=101)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_derivs)

    p = sub.add_parser("bounds", help="covering-number bounds")
    p.add_argument("--formula", choices=FORMULAS, required=True)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--beta", type=int, default=0)
    p.add_argument("--gamma", type=int)
    p.add_argument("--consts", help="JSON file with C0, b, L, L_K, K, m, alpha, Cbar")
    p.add_argument("--sweep", help="delta grid: lo:hi:count (geometric) or a comma list")
    p.add_argument("--kind", choices=KINDS, default=AUTONOMOUS)
    p.add_argument("--target", choices=TARGETS, default=SOLUTIONS)
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("rates", help="critical radii and figure series")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--beta", type=int, default=0)
    p.add_argument("--kind", choices=KINDS, default=AUTONOMOUS)
    p.add_argument("--figure", type=int, choices=(1, 2))
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--gamma-max", type=int, default=8)
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("fit", help="fit an estimator to x,y data")
    p.add_argument("--method", choices=("krr", "spline", "nls", "picard"), required=True)
    p.add_argument("--data", required=True, help="CSV with columns x,y")
    p.add_argument("--beta", type=int, default=0)
    p.add_argument("--variant", choices=KINDS, default=AUTONOMOUS)
    c = p.add_mutually_exclusive_group()
    c.add_argument("--C", type=float, default=1.0)
    c.add_argument("--cv", action="store_true", help="choose C by 5-fold cross-validation")
    p.add_argument("--R", type=int, default=8)
    p.add_argument("--T", type=int, default=256)
    p.add_argument("--model", default="linear", help="parametric family for nls/picard")
    p.add_argument("--radius", type=float, default=1.0, help="norm bound for the spline fit")
    p.add_argument("--truth", help="builtin ODE whose solution is the truth; enables MSE")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gronwall", help="check a Gronwall bound on a pair of ODEs")
    p.add_argument("--pair", required=True, help='JSON file {"builtin": "linear"|"sin_perturbed"|"harmonic", ...}')
    p.add_argument("--m", type=int, help="bound formula order (default: order of the pair)")
    p.add_argument("--k", type=int, default=0, help="derivative index to compare")
    p.add_argument("--grid-points", type=int, default=101)
    p.add_argument("--no-domain-check", dest="enforce_domain", action="store_false",
                   help="use the whole domain instead of the guaranteed existence interval")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_gronwall)

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment from an INI config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OdeCoverError, ValueError, OSError) as exc:
        print(f"odecover {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
