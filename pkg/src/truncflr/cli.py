"""Command line entry point: ``truncflr {fit,tune,simulate,bootstrap,predict}``.

Every command writes ``results.json`` into ``--out`` holding the fully
resolved configuration next to the results, plus flat CSV files for traces,
bands or predictions. Errors exit with the code of their exception class.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict, fields
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import io as tio
from .bootstrap import residual_bootstrap
from .errors import DimensionError, ParseError, TruncFLRError
from .flm import predict as predict_values
from .numerics import Grid
from .simstudy import SimConfig, run_study, theta_table, ise_table
from .truncated import fit_method_b
from .tuning import TuningContext, TuningOptions, run_method_a, select_lambda


def parse_m_range(text):
    """'2..9' -> (2, ..., 9); a single integer is a one-element range."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad m range {text!r}; use a..b") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad m range {text!r}")
    return tuple(range(lo, hi + 1))


def parse_lambda_grid(text):
    """Comma list '0.1,1,10' or geometric 'geom:lo:hi:count'."""
    try:
        if text.startswith("geom:"):
            lo, hi, k = text[5:].split(":")
            vals = np.geomspace(float(lo), float(hi), int(k))
        else:
            vals = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lambda grid {text!r}") from None
    if vals.size == 0 or np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise argparse.ArgumentTypeError(f"lambda values must be finite and >= 0: {text!r}")
    return tuple(float(v) for v in vals)


def _nonneg(text):
    v = float(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _unit(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1]")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="truncflr", description="Truncated functional linear regression.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        if data:
            sp.add_argument("--curves", required=True, help="CSV: grid row, then one curve per row")
            sp.add_argument("--responses", required=True, help="single-column CSV")
            sp.add_argument("--method", choices=("A", "B"), default="A")
        sp.add_argument("--options", help="JSON file with tuning options (flags override it)")
        sp.add_argument("--m-range", type=parse_m_range)
        sp.add_argument("--lambda-grid", type=parse_lambda_grid)
        sp.add_argument("--theta-min", type=_unit)
        sp.add_argument("--theta-max", type=_unit)
        sp.add_argument("--bic-form", choices=("standard", "log_mse"))
        sp.add_argument("--sy-target", choices=("noiseless", "observed"))
        sp.add_argument("--sb-b-eigs", choices=("truncated", "full"))
        sp.add_argument("--refit-b", action="store_true", default=None)
        sp.add_argument("--threads", type=_positive_int, default=1)
        sp.add_argument("--out", default=".", help="output directory")

    fit = sub.add_parser("fit", help="tuned (or fixed-lambda) truncated fit")
    common(fit)
    fit.add_argument("--lambda", dest="lam", type=_nonneg, help="fixed penalty, skips tuning")

    tune = sub.add_parser("tune", help="lambda selection report")
    common(tune)

    boot = sub.add_parser("bootstrap", help="residual bootstrap bands")
    common(boot)
    boot.add_argument("--lambda", dest="lam", type=_nonneg)
    boot.add_argument("--reps", type=_positive_int, default=200)
    boot.add_argument("--seed", type=int, default=0)
    boot.add_argument("--freeze-theta", action="store_true")
    boot.add_argument("--retries", type=int, default=5)

    sim = sub.add_parser("simulate", help="Monte Carlo study")
    common(sim, data=False)
    sim.add_argument("--model", type=int, choices=(1, 2, 3), nargs="+", default=[1])
    sim.add_argument("--n", type=_positive_int, default=SimConfig.n)
    sim.add_argument("--grid-size", type=_positive_int, default=SimConfig.G)
    sim.add_argument("--replicates", type=_positive_int, default=SimConfig.replicates)
    sim.add_argument("--seed", type=int, default=SimConfig.seed)
    sim.add_argument("--snr", type=float, default=SimConfig.snr)
    sim.add_argument("--theta0", type=float, default=SimConfig.theta0)

    pred = sub.add_parser("predict", help="predict responses for new curves")
    pred.add_argument("--fit", required=True, help="results.json written by fit")
    pred.add_argument("--curves", required=True)
    pred.add_argument("--out", default=".")
    return p


def resolve_options(args):
    base = TuningOptions()
    if getattr(args, "options", None):
        raw = tio.read_json(args.options)
        raw = raw.get("options", raw)
        known = {f.name for f in fields(TuningOptions)}
        unknown = set(raw) - known
        if unknown:
            raise ParseError(f"unknown option keys {sorted(unknown)}", args.options)
        base = TuningOptions.from_dict(raw)
    over = {}
    for flag, key in (("m_range", "m_range"), ("lambda_grid", "lambda_grid"), ("theta_min", "theta_min"),
                      ("theta_max", "theta_max"), ("bic_form", "bic_form"), ("sy_target", "sy_target"),
                      ("sb_b_eigs", "sb_b_eigs"), ("refit_b", "refit_b")):
        v = getattr(args, flag, None)
        if v is not None:
            over[key] = v
    opts = base.with_(**over)
    if opts.theta_min > opts.theta_max:
        raise ParseError(f"theta-min {opts.theta_min} exceeds theta-max {opts.theta_max}")
    return opts


def _load(args):
    curves = tio.load_curves(args.curves)
    y = tio.load_responses(args.responses, curves.n)
    return curves, y


def _fit_record(fit):
    return {
        "method": fit.method,
        "a_hat": fit.a_hat,
        "theta_hat": fit.theta_hat,
        "m": fit.m,
        "lambda": fit.lam,
        "rss": fit.rss,
        "penalty_power": fit.penalty_power,
        "grid": fit.grid.points,
        "b_hat": fit.b_hat,
    }


def _fixed_lambda_fit(ctx, method, lam):
    if method == "A":
        sel, _ = run_method_a(ctx, lam=lam)
        return sel.fit, {"bic_table": sel.table}
    fit = fit_method_b(ctx.pilot, ctx.curves, ctx.y, lam, ctx.theta_grid,
                       ctx.options.penalty_power, refit=ctx.options.refit_b)
    return fit, {"bic_table": ctx.pilot_selection.table}


def _tuned_fit(curves, y, args, opts):
    ctx = TuningContext.build(curves, y, opts)
    if getattr(args, "lam", None) is not None:
        fit, extra = _fixed_lambda_fit(ctx, args.method, args.lam)
        return fit, None, extra, ctx
    rep = select_lambda(curves, y, args.method, options=opts, context=ctx)
    return rep.fit, rep, {"bic_table": rep.bic_table}, ctx


def _report_record(rep):
    return {
        "method": rep.method,
        "m": rep.m,
        "m_star": rep.m_star,
        "lambda_star": rep.lambda_star,
        "pilot_m": rep.pilot_m,
        "sigma2_hat": rep.sigma2_hat,
        "a_check": rep.a_check,
        "bic_table": rep.bic_table,
        "bsimp": {"k": rep.bsimp.k, "c": rep.bsimp.coefficients, "theta_bar": rep.bsimp.theta_bar,
                  "a": rep.bsimp.a},
        "records": rep.records(),
    }


def _config(args, opts, ctx=None):
    cfg = {k: v for k, v in vars(args).items() if k not in ("options",)}
    cfg["options"] = opts.to_dict() if opts is not None else None
    if ctx is not None:
        cfg["theta_grid"] = ctx.theta_grid.candidates
        cfg["lambda_grid_resolved"] = ctx.lambda_grid
    return cfg


def cmd_fit(args, out):
    opts = resolve_options(args)
    curves, y = _load(args)
    fit, rep, extra, ctx = _tuned_fit(curves, y, args, opts)
    res = {"config": _config(args, opts, ctx), "fit": _fit_record(fit), **extra}
    if rep is not None:
        res["tuning"] = _report_record(rep)
    tio.write_json(out / "results.json", res)
    tio.write_columns(out / "objective_trace.csv", ["theta", "objective"], [fit.thetas, fit.objective])
    tio.write_columns(out / "slope.csv", ["t", "b_hat"], [curves.grid.points, fit.b_hat])
    return (f"method {fit.method}: theta_hat={fit.theta_hat:.4f} m={fit.m} "
            f"lambda={fit.lam:.4g} a_hat={fit.a_hat:.6g}")


def cmd_tune(args, out):
    opts = resolve_options(args)
    curves, y = _load(args)
    ctx = TuningContext.build(curves, y, opts)
    rep = select_lambda(curves, y, args.method, options=opts, context=ctx)
    tio.write_json(out / "results.json", {"config": _config(args, opts, ctx), "tuning": _report_record(rep),
                                          "fit": _fit_record(rep.fit)})
    recs = rep.records()
    tio.write_columns(out / "tuning.csv", ["lambda", "theta_lambda", "V", "P_b", "degenerate"],
                      [[r[k] for r in recs] for k in ("lambda", "theta_lambda", "V", "P_b", "degenerate")])
    tio.write_columns(out / "risk.csv", ["theta", "S_Y", "S_b"], [rep.risk.thetas, rep.risk.S_Y, rep.risk.S_b])
    return f"method {rep.method}: lambda*={rep.lambda_star:.4g} m*={rep.m_star} theta_hat={rep.fit.theta_hat:.4f}"


def cmd_bootstrap(args, out):
    opts = resolve_options(args)
    curves, y = _load(args)
    fit, _, extra, ctx = _tuned_fit(curves, y, args, opts)
    bands = residual_bootstrap(
        curves, y, fit, B=args.reps, seed=args.seed, m_range=opts.m_range, theta_grid=ctx.theta_grid,
        freeze_theta=args.freeze_theta, bic_form=opts.bic_form, refit_b=opts.refit_b,
        max_retries=args.retries, threads=args.threads,
    )
    res = {
        "config": _config(args, opts, ctx),
        "fit": _fit_record(fit),
        "bootstrap": {"B": bands.B, "pointwise_sd": bands.pointwise_sd, "thetas": bands.thetas,
                      "ms": bands.ms, "retries": bands.retries},
        **extra,
    }
    tio.write_json(out / "results.json", res)
    (out / "bands.csv").write_text(bands.to_csv())
    return f"bootstrap B={bands.B}: theta_hat={fit.theta_hat:.4f}, max sd {bands.pointwise_sd.max():.4g}"


def cmd_simulate(args, out):
    opts = resolve_options(args)
    reports = []
    for model in args.model:
        cfg = SimConfig(model_id=model, n=args.n, G=args.grid_size, replicates=args.replicates,
                        seed=args.seed, snr=args.snr, theta0=args.theta0)
        rep = run_study(cfg, opts, threads=args.threads)
        reports.append(rep)
        (out / f"study_model{model}.json").write_text(rep.to_json() + "\n")
        (out / f"records_model{model}.csv").write_text(rep.records_csv())
    t1, t2 = theta_table(reports), ise_table(reports)
    (out / "theta_table.txt").write_text(t1)
    (out / "ise_table.txt").write_text(t2)
    tio.write_json(out / "results.json", {
        "config": _config(args, opts),
        "studies": {str(r.config.model_id): {"config": asdict(r.config), "summary": r.summary,
                                             "failures": r.failures} for r in reports},
    })
    return t1 + "\n" + t2


def cmd_predict(args, out):
    res = tio.read_json(args.fit)
    try:
        f = res["fit"]
        grid = Grid.from_points(f["grid"])
        a, b, theta = float(f["a_hat"]), np.array(f["b_hat"], dtype=float), float(f["theta_hat"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"not a fit results file ({exc})", args.fit) from None
    curves = tio.load_curves(args.curves)
    if curves.grid != grid:
        raise DimensionError("curves are not on the grid of the fit")
    fit = SimpleNamespace(intercept=a, slope=b, grid=grid)
    yhat = np.atleast_1d(predict_values(fit, curves.values, theta))
    tio.write_columns(out / "predictions.csv", ["index", "prediction"], [range(len(yhat)), yhat])
    tio.write_json(out / "results.json", {"config": vars(args), "predictions": yhat})
    return f"{len(yhat)} predictions written"


COMMANDS = {
    "fit": cmd_fit,
    "tune": cmd_tune,
    "bootstrap": cmd_bootstrap,
    "simulate": cmd_simulate,
    "predict": cmd_predict,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](args, out)
    except TruncFLRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 10
    (out / "summary.txt").write_text(summary + "\n")
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
