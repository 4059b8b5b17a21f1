"""Command-line batch runner.

Exit codes: 0 success, 1 usage error, 2 data or model error.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .data import read_csv, simulate_hetero, holdout_seed, write_csv, write_table
from .diagnostics import feature_importance, partial_dependence, qq_points, quantile_residuals
from .errors import LssError
from .families import get_family, rank_families
from .scoring import empirical_coverage, predict_params, predict_quantiles, score
from .serialize import load_model, save_model
from .trainer import TrainConfig, train
from .tuner import SearchSpace, default_params, random_search

log = logging.getLogger("lssboost")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pairs(text):
    """``5:95,10:90`` (percent) -> [(0.05, 0.95), (0.10, 0.90)]."""
    out = []
    for chunk in text.split(","):
        lo, sep, hi = chunk.partition(":")
        if not sep:
            raise argparse.ArgumentTypeError(f"pair {chunk!r} must look like LO:HI")
        try:
            out.append((float(lo) / 100.0, float(hi) / 100.0))
        except ValueError:
            raise argparse.ArgumentTypeError(f"pair {chunk!r} must be numeric") from None
    return out


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def _emit(path, header, rows):
    fh, close = _open_out(path)
    try:
        write_table(fh, header, rows)
    finally:
        if close:
            fh.close()


def _load_config(path):
    if path is None:
        return TrainConfig()
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "config" in doc and "boost" not in doc:
        doc = doc["config"]
    return TrainConfig.from_dict(doc)


def cmd_simulate(args):
    data = simulate_hetero(args.n, args.seed, args.scale_is_variance)
    write_csv(data, args.out)
    if args.test_out:
        write_csv(simulate_hetero(args.test_n, holdout_seed(args.seed), args.scale_is_variance), args.test_out)


def cmd_train(args):
    data = read_csv(args.data, args.response)
    family = get_family(args.family)
    config = _load_config(args.config)
    model = train(family, data, config, np.random.default_rng(args.seed))
    model.metadata["seed"] = args.seed
    model.metadata["n_rows"] = data.n_rows
    save_model(model, args.out)


def cmd_tune(args):
    data = read_csv(args.data, args.response)
    family = get_family(args.family)
    result = random_search(
        family, data, SearchSpace(), n_trials=args.trials, folds=args.folds,
        time_budget_minutes=args.budget, seed=args.seed, max_rounds=args.max_rounds,
        early_stopping_rounds=args.early_stopping,
        initial_params=[default_params()] if args.include_default else (),
    )
    if args.log:
        _emit(args.log, *result.log_rows())
    if result.best_params is None:
        raise LssError("every tuning trial failed")
    doc = {
        "config": result.best_config().to_dict(),
        "cv_deviance": result.best_score,
        "trial": result.best_trial.index,
        "budget_exhausted": result.budget_exhausted,
    }
    fh, close = _open_out(args.out)
    try:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    finally:
        if close:
            fh.close()


def cmd_predict(args):
    model = load_model(args.model)
    data = read_csv(args.data, args.response, require_response=False)
    pred = predict_params(model, data)
    header = list(model.family.param_names)
    cols = [pred.params[:, k] for k in range(model.family.n_params)]
    if args.quantiles:
        q = predict_quantiles(pred, None, args.quantiles)
        header += [f"q{p:g}" for p in args.quantiles]
        cols += [q[:, j] for j in range(q.shape[1])]
    _emit(args.out, header, zip(*cols))


def cmd_score(args):
    model = load_model(args.model)
    data = read_csv(args.data, args.response)
    report = score(model, data, data.y)
    _emit(args.out, ["metric", "value"], report.rows())
    for name, msg in report.metrics.errors.items():
        log.warning("%s: %s", name, msg)


def cmd_coverage(args):
    model = load_model(args.model)
    data = read_csv(args.data, args.response)
    rows = empirical_coverage(model, data, data.y, args.pairs)
    _emit(args.out, ["lower_level", "upper_level", "total_coverage", "upper_bound", "lower_bound"],
          [(f"{100 * r.lo:g}", f"{100 * r.hi:g}", r.total, r.upper, r.lower) for r in rows])


def cmd_residuals(args):
    model = load_model(args.model)
    data = read_csv(args.data, args.response)
    rep = quantile_residuals(model, data, data.y)
    theo, emp = qq_points(rep.residuals)
    _emit(args.out, ["theoretical", "residual"], zip(theo, emp))
    log.info("KS statistic %.6f (p=%.4g)", rep.ks_statistic, rep.ks_pvalue)


def cmd_importance(args):
    model = load_model(args.model)
    rows = [
        (param, feat, share)
        for param, shares in feature_importance(model).items()
        for feat, share in shares.items()
    ]
    _emit(args.out, ["param", "feature", "gain_share"], rows)


def cmd_pd(args):
    model = load_model(args.model)
    data = read_csv(args.data, args.response, require_response=False)
    X = data.columns(model.feature_names)
    if args.feature not in model.feature_names:
        raise LssError(f"unknown feature {args.feature!r}; model has: {', '.join(model.feature_names)}")
    if args.grid:
        grid = args.grid
    else:
        col = X[:, model.feature_names.index(args.feature)]
        grid = np.linspace(np.nanmin(col), np.nanmax(col), args.grid_points)
    param = args.param
    if param.isdigit():
        param = int(param)
    curve = partial_dependence(model, X, args.feature, grid, param)
    _emit(args.out, [args.feature, f"mean_{args.param}"], curve)


def cmd_gaic(args):
    data = read_csv(args.data, args.response)
    families = [get_family(n) for n in args.families.split(",") if n.strip()]
    rows = rank_families(families, data.y, args.penalty)
    _emit(args.out, ["rank", "family", "gaic", "note"],
          [(i + 1, name, val, msg or "") for i, (name, val, msg) in enumerate(rows)])


def build_parser():
    p = _Parser(prog="lssboost", description="Distributional gradient boosting.")
    p.add_argument("--version", action="version", version=f"lssboost {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, parents=[common])
        sp.set_defaults(func=func)
        return sp

    sp = add("simulate", cmd_simulate, "write the heteroskedastic simulation design as CSV")
    sp.add_argument("--n", type=int, default=7000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--test-n", type=int, default=3000)
    sp.add_argument("--test-out")
    sp.add_argument("--scale-is-variance", action="store_true",
                    help="read the step function as a variance instead of a standard deviation")

    sp = add("train", cmd_train, "fit a distributional model")
    sp.add_argument("--data", required=True)
    sp.add_argument("--response", required=True)
    sp.add_argument("--family", default="normal")
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("tune", cmd_tune, "random-search hyper-parameters by cross-validated deviance")
    sp.add_argument("--data", required=True)
    sp.add_argument("--response", required=True)
    sp.add_argument("--family", default="normal")
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--folds", type=int, default=3)
    sp.add_argument("--budget", type=float, help="time budget in minutes")
    sp.add_argument("--max-rounds", type=int, default=500)
    sp.add_argument("--early-stopping", type=int, default=20)
    sp.add_argument("--include-default", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-")
    sp.add_argument("--log", help="trial log CSV")

    sp = add("predict", cmd_predict, "predict distribution parameters and quantiles")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--response", default="y")
    sp.add_argument("--quantiles", type=_floats)
    sp.add_argument("--out", default="-")

    for name, func, text in (
        ("score", cmd_score, "CRPS, log score and point metrics"),
        ("coverage", cmd_coverage, "empirical interval coverage"),
        ("residuals", cmd_residuals, "quantile residual QQ data"),
    ):
        sp = add(name, func, text)
        sp.add_argument("--model", required=True)
        sp.add_argument("--data", required=True)
        sp.add_argument("--response", required=True)
        sp.add_argument("--out", default="-")
        if name == "coverage":
            sp.add_argument("--pairs", type=_pairs,
                            default=_pairs("5:95,10:90,20:80,30:70,40:60,50:50"))

    sp = add("importance", cmd_importance, "gain importance per parameter")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", default="-")

    sp = add("pd", cmd_pd, "partial dependence of one parameter on one feature")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--response", default="y")
    sp.add_argument("--feature", required=True)
    sp.add_argument("--param", default="variance",
                    help="parameter name or index, or 'variance' / 'mean'")
    sp.add_argument("--grid", type=_floats)
    sp.add_argument("--grid-points", type=int, default=50)
    sp.add_argument("--out", default="-")

    sp = add("gaic", cmd_gaic, "rank candidate families by GAIC")
    sp.add_argument("--data", required=True)
    sp.add_argument("--response", required=True)
    sp.add_argument("--families", default="normal,gamma,lognormal,studentt")
    sp.add_argument("--penalty", type=float, default=2.0)
    sp.add_argument("--out", default="-")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except BrokenPipeError:
        # downstream reader closed early (e.g. `| head`); not an error
        sys.stdout = open(os.devnull, "w")
        return 0
    except (LssError, OSError, ValueError) as exc:
        sys.stderr.write(f"lssboost {args.command}: error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
