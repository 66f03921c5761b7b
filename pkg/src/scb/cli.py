"""Command-line interface: ``scb <subcommand> ...``.

Exit codes: 0 success, 2 input error, 3 numeric precondition failure,
4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .asymptotics import (
    calibrate_gumbel, check_bandwidth_conditions, grid_count, halfwidth_l2, lrd_limit_scale,
)
from .bands import gof_test, scb_density, scb_regression, scb_volatility
from .calibration import eta_sampler, simulate_pi_n, smoothed_bootstrap_sampler
from .errors import InputError, ScbError
from .estimators import EvaluationGrid, kde
from .harness import run_experiment
from .io import (
    DEFAULT_DELTA, dumps_json, export_band, load_columns, load_series, make_regression_pairs,
    write_columns, write_json,
)
from .kernels import get_kernel
from .pipeline import run_pipeline
from .processes import ProcessModel


def _interval(text: str):
    try:
        l, u = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"interval must look like l:u, got {text!r}")
    return l, u


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("SCB_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InputError(f"SCB_SEED must be an integer, got {env!r}")


def _emit(obj, out):
    if out:
        write_json(obj, out)
    else:
        sys.stdout.write(dumps_json(obj))


def _add_data(p, pairs=False):
    p.add_argument("--input", required=True, help="delimited text file with a header row")
    p.add_argument("--column", default="rate", help="series column (default: rate)")
    p.add_argument("--delim", default=",")
    if pairs:
        p.add_argument("--x-column", help="regressor column; with --y-column skips pairing")
        p.add_argument("--y-column")
        p.add_argument("--delta", type=float, default=DEFAULT_DELTA,
                       help="time step between observations (default 1/250)")


def _add_band(p):
    p.add_argument("--bandwidth", type=float, required=True)
    p.add_argument("--interval", type=_interval, required=True, help="l:u")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--kernel", default="epanechnikov")
    p.add_argument("--method", choices=("gumbel", "simulated"), default="simulated")
    p.add_argument("--reps", type=int, default=1000, help="Pi_n replicates")
    p.add_argument("--multiplier", choices=("normal", "rademacher"), default="normal",
                   help="law of the Pi_n multipliers")
    p.add_argument("--seed", type=int)
    p.add_argument("--l1-log-arg", choices=("b", "bbar"), default="bbar")
    p.add_argument("--out", help="band output (.csv or .json); JSON to stdout if omitted")


def _pairs(args):
    if args.x_column or args.y_column:
        if not (args.x_column and args.y_column):
            raise InputError("--x-column and --y-column go together")
        (x, y), dropped, _ = load_columns(args.input, [args.x_column, args.y_column],
                                          args.delim)
        return x, y, {"dropped": dropped}
    data = make_regression_pairs(load_series(args.input, args.column, args.delim),
                                 args.delta)
    return data.x, data.y, data.to_dict()


def _write_band(band, args, extra=None):
    if args.out:
        export_band(band, args.out, extra=extra)
    else:
        d = band.to_dict()
        d.update(extra or {})
        sys.stdout.write(dumps_json(d))


def cmd_constants(args):
    k = get_kernel(args.kernel)
    out = {"kernel": {"name": k.name, "A": k.A, "lambda_K": k.lambda_K, "K1": k.K1,
                      "K2": k.K2, "psi_K": k.psi_K, "alpha": k.alpha, "C0": k.C0}}
    if args.bandwidth is not None:
        if args.interval is None:
            raise InputError("--bandwidth needs --interval")
        l, u = args.interval
        cal = calibrate_gumbel(args.alpha, args.bandwidth, args.interval, k, args.l1_log_arg)
        out["calibration"] = cal.to_dict()
        out["l1"] = cal.halfwidth_scale
        J = grid_count(args.bandwidth, u - l)
        out["J_n"] = J
        out["l2"] = halfwidth_l2(args.alpha, args.bandwidth, u - l) if J >= 2 else None
        if args.n is not None:
            delta1 = args.delta1 if args.delta1 is not None else \
                -math.log(args.bandwidth) / math.log(args.n)
            lrd = lrd_limit_scale(args.beta, args.ell) if args.beta is not None else None
            out["bandwidth_conditions"] = check_bandwidth_conditions(
                args.n, args.bandwidth, delta1, args.delta2, lrd).to_dict()
    if args.beta is not None:
        out["lrd"] = lrd_limit_scale(args.beta, args.ell).to_dict()
    _emit(out, args.out)


def cmd_density(args):
    data = load_series(args.input, args.column, args.delim)
    band = scb_density(data.values, args.bandwidth, args.interval, args.alpha, args.kernel,
                       args.method, reps=args.reps, seed=_seed(args), eta=args.multiplier,
                       clip=not args.no_clip, bias_correct=args.density_bias_correct,
                       l1_log_arg=args.l1_log_arg)
    _write_band(band, args, {"data": data.to_dict()})


def cmd_regress(args):
    x, y, info = _pairs(args)
    band = scb_regression(x, y, args.bandwidth, args.interval, args.alpha, args.kernel,
                          args.method, h=args.h, bias_correct=not args.no_bias_correct,
                          reps=args.reps, seed=_seed(args), eta=args.multiplier,
                          l1_log_arg=args.l1_log_arg)
    extra = {"data": info}
    if args.gof:
        extra["gof"] = [gof_test(band, fam, x=x, y=y).to_dict() for fam in args.gof]
    _write_band(band, args, extra)


def cmd_volatility(args):
    x, y, info = _pairs(args)
    seed = _seed(args)
    reg = scb_regression(x, y, args.bandwidth, args.interval, args.alpha, args.kernel,
                         args.method, h=args.h, bias_correct=not args.no_bias_correct,
                         reps=args.reps, seed=seed, eta=args.multiplier,
                         l1_log_arg=args.l1_log_arg)
    h = args.bandwidth if args.h is None else args.h
    res = reg.residuals
    band = scb_volatility(res.x, res.values, h, args.interval, args.alpha, args.kernel,
                          args.method, args.nu_eta, eta_law=args.eta,
                          bias_correct=not args.no_bias_correct, reps=args.reps, seed=seed,
                          eta=args.multiplier, l1_log_arg=args.l1_log_arg, design=x,
                          pi_sample=reg.pi_sample if h == args.bandwidth else None)
    _write_band(band, args, {"data": info})


def cmd_calibrate(args):
    data = load_series(args.input, args.column, args.delim)
    k = get_kernel(args.kernel)
    l, u = args.interval
    grid = EvaluationGrid.default(l, u, args.bandwidth)
    f = kde(data.values, args.bandwidth, grid, k)
    pi = simulate_pi_n(smoothed_bootstrap_sampler(data.values, args.bandwidth, k),
                       eta_sampler(args.multiplier), data.values.size, args.bandwidth, grid,
                       k, f, args.reps, _seed(args), level=args.alpha)
    if args.dump:
        write_columns(args.dump, {"pi": pi.values})
    _emit({**pi.summary(), "data": data.to_dict()}, args.out)


MODEL_ARGS = ("a", "b", "beta", "ell", "coeffs", "mu", "sigma", "delta", "x0", "loc", "scale",
              "y0")


def cmd_simulate(args):
    params = {}
    for name in MODEL_ARGS:
        v = getattr(args, name)
        if v is None:
            continue
        if name == "coeffs":
            v = [float(c) for c in v.split(",")]
        elif name in ("mu", "sigma"):
            try:
                v = float(v)
            except ValueError:
                pass
        params[name] = v
    model = ProcessModel(args.model, params, args.innovation, args.burn_in, args.truncation)
    seed = _seed(args)
    if args.model == "diffusion_discrete":
        x, y = model.pairs(args.n, seed)
        cols = {"rate": np.concatenate([x, [x[-1] + y[-1]]])}
    elif model.is_regression:
        x, y = model.pairs(args.n, seed)
        cols = {"x": x, "y": y}
    else:
        cols = {"x": model.series(args.n, seed)}
    if args.out:
        write_columns(args.out, cols)
    else:
        names = list(cols)
        sys.stdout.write(",".join(names) + "\n")
        for row in zip(*cols.values()):
            sys.stdout.write(",".join(f"{v:.12g}" for v in row) + "\n")


def cmd_experiment(args):
    with open(args.config) as fh:
        config = json.load(fh)
    if args.seed is not None or "seed" not in config:
        config["seed"] = _seed(args)
    report = run_experiment(args.kind, config)
    _emit(report.to_dict(with_statistics=not args.summary_only), args.out)
    if args.text or args.out:
        sys.stderr.write(report.render_text() + "\n")


def cmd_pipeline(args):
    with open(args.config) as fh:
        config = json.load(fh)
    if args.seed is not None or "seed" not in config:
        config["seed"] = _seed(args)
    summary = run_pipeline(config, args.out_dir)
    sys.stdout.write(dumps_json({k: summary[k] for k in ("config_hash", "gof", "stages",
                                                          "warnings")}))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scb", description="Simultaneous confidence bands for "
                                 "densities, regression and volatility functions.")
    ap.add_argument("--version", action="version", version=f"scb {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="kernel constants and Gumbel calibration")
    p.add_argument("--kernel", default="epanechnikov")
    p.add_argument("--n", type=int)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--interval", type=_interval)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, help="long-memory exponent in (1/2, 1)")
    p.add_argument("--ell", type=float, default=1.0)
    p.add_argument("--delta1", type=float)
    p.add_argument("--delta2", type=float)
    p.add_argument("--l1-log-arg", choices=("b", "bbar"), default="bbar")
    p.add_argument("--out")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("density", help="density band")
    _add_data(p)
    _add_band(p)
    p.add_argument("--density-bias-correct", action="store_true")
    p.add_argument("--no-clip", action="store_true", help="allow negative lower envelope")
    p.set_defaults(func=cmd_density)

    for name, func in (("regress", cmd_regress), ("volatility", cmd_volatility)):
        p = sub.add_parser(name, help=f"{'regression' if name == 'regress' else 'volatility'}"
                           " band from a series or (x, y) columns")
        _add_data(p, pairs=True)
        _add_band(p)
        p.add_argument("--h", type=float, help="variance bandwidth (default: bandwidth)")
        p.add_argument("--no-bias-correct", action="store_true")
        if name == "regress":
            p.add_argument("--gof", action="append",
                           help="family to test, e.g. affine or poly:2 (repeatable)")
        else:
            p.add_argument("--nu-eta", type=float, help="E eta^4 - 1 (estimated if omitted)")
            p.add_argument("--eta", choices=("normal",),
                           help="assume normal errors, so nu_eta = 2")
        p.set_defaults(func=func)

    p = sub.add_parser("calibrate", help="simulate Pi_n and report its quantile")
    _add_data(p)
    p.add_argument("--bandwidth", type=float, required=True)
    p.add_argument("--interval", type=_interval, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--kernel", default="epanechnikov")
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--multiplier", choices=("normal", "rademacher"), default="normal")
    p.add_argument("--seed", type=int)
    p.add_argument("--dump", help="write every Pi_n value to this CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="generate a synthetic series")
    p.add_argument("--model", required=True,
                   choices=("iid", "linear", "lrd_linear", "arch", "nonlinear_ar",
                            "diffusion_discrete"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--innovation", default="normal",
                   choices=("normal", "uniform_centered", "rademacher"))
    p.add_argument("--burn-in", type=int)
    p.add_argument("--truncation", type=int)
    for name in ("a", "b", "beta", "ell", "delta", "x0", "loc", "scale", "y0"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--coeffs", help="comma separated linear coefficients")
    p.add_argument("--mu", help="drift: number or expression in x")
    p.add_argument("--sigma", help="volatility: number or expression in x")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="Monte Carlo experiment from a JSON config")
    p.add_argument("kind", choices=("coverage", "gumbel", "dichotomy"))
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--text", action="store_true", help="also print a text table to stderr")
    p.add_argument("--summary-only", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("pipeline", help="drift and volatility bands end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ScbError as exc:
        sys.stderr.write(f"scb: error: {exc}\n")
        return exc.exit_code
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        sys.stderr.write(f"scb: error: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"scb: error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
