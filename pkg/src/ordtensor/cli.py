"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Diagnostics go to stderr; stdout carries only data or output paths.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import simulate_ordinal
from .estimator import FitOptions, fit
from .experiment import (cross_validate, merge_config, run_experiment, sampling_plan,
                         write_csv)
from .io import (DataError, fit_from_dict, fit_to_dict, read_json, read_tensor, write_json,
                 write_tensor)
from .likelihood import OrdinalTensor
from .links import LinkSpec
from .metrics import metric_report
from .prediction import predict_labels
from .selection import bic_score, select_rank_bic

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("ordtensor")


class UsageError(Exception):
    pass


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.replace(" ", ",").split(",") if v)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _grid(text: str) -> list:
    return [_ints(part) for part in text.split(";") if part.strip()]


def _load_ordinal(path) -> OrdinalTensor:
    y = read_tensor(path)
    if not isinstance(y, OrdinalTensor):
        raise DataError(f"{path}: expected an ordinal tensor file (with 'levels')")
    return y


def _fit_opts(args) -> FitOptions:
    return FitOptions(alpha=args.alpha, beta=args.beta, delta=args.delta,
                      max_outer_iters=args.max_iter, inner_steps=args.inner_steps, tol=args.tol,
                      seed=args.seed, estimate_cutoffs=args.estimate_cutoffs, init=args.init)


def _rank_for(y, rank):
    if len(rank) == 1:
        rank = rank * len(y.dims)
    return rank


def cmd_simulate(args) -> None:
    cfg = merge_config(read_json(args.config) if args.config else None)
    gen = cfg["generator"]
    for key in ("dims", "rank"):
        if getattr(args, key) is not None:
            gen[key] = list(getattr(args, key))
    for key, attr in (("alpha", "alpha"), ("family", "link"), ("sigma", "sigma"),
                      ("levels", "levels")):
        if getattr(args, attr) is not None:
            gen[key] = getattr(args, attr)
    if args.rho is not None:
        cfg["sampling"] = {"kind": "bernoulli", "rho": args.rho}
    seed = args.seed if args.seed is not None else int(cfg["replication"]["base_seed"])
    if len(gen["rank"]) == 1:
        gen["rank"] = gen["rank"] * len(gen["dims"])
    spec = LinkSpec.default(gen["family"], float(gen["sigma"]), int(gen["levels"]))
    plan = sampling_plan(cfg["sampling"])
    _, theta, y = simulate_ordinal(gen["dims"], gen["rank"], float(gen["alpha"]), spec, plan,
                                   seed=seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "truth.json", theta)
    write_tensor(out / "observed.json", y)
    manifest = {"generator": gen, "sampling": cfg["sampling"], "seed": seed,
                "cutoffs": [float(b) for b in spec.cutoffs], "n_observed": y.n_observed,
                "files": {"truth": "truth.json", "observed": "observed.json"}}
    write_json(out / "manifest.json", manifest)
    print(out / "truth.json")
    print(out / "observed.json")


def cmd_fit(args) -> None:
    y = _load_ordinal(args.input)
    rank = _rank_for(y, args.rank)
    res = fit(y, rank, args.link, args.sigma, _fit_opts(args), args.cutoffs)
    _check_finite(res.theta_hat)
    bic = bic_score(y, res, rank)
    write_json(args.out, fit_to_dict(res, bic))
    if not res.converged:
        log.warning("no convergence within %d outer iterations", res.iterations)
    print(args.out)


def cmd_rank_select(args) -> None:
    y = _load_ordinal(args.input)
    grid = [_rank_for(y, r) for r in args.grid]
    best, table = select_rank_bic(y, grid, args.link, args.sigma, _fit_opts(args))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "objective", "p_e", "bic"])
        for row in table:
            w.writerow(["x".join(map(str, row["rank"])), repr(row["objective"]), row["p_e"],
                        repr(row["bic"])])
    print(",".join(map(str, best)))


def cmd_cv(args) -> None:
    y = _load_ordinal(args.input)
    rank = _rank_for(y, args.rank)
    out = cross_validate(y, rank, args.link, args.sigma, _fit_opts(args), args.folds,
                         args.rule, args.seed, args.cutoffs)
    if args.metric != "both":
        out["summary"] = {k: v for k, v in out["summary"].items() if k.endswith(args.metric)}
    text = json.dumps(out, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(args.out)
    else:
        print(text)


def cmd_predict(args) -> None:
    res = fit_from_dict(read_json(args.fit))
    write_tensor(args.out, predict_labels(res.theta_hat, res.spec, args.rule), "dense")
    print(args.out)


def cmd_metrics(args) -> None:
    truth = read_tensor(args.truth)
    if isinstance(truth, OrdinalTensor):
        raise DataError(f"{args.truth}: expected a real-valued truth tensor")
    res = fit_from_dict(read_json(args.fit))
    spec = LinkSpec.default(res.family, res.sigma, res.cutoffs_hat.size + 1)
    if args.cutoffs:
        spec = spec.with_cutoffs(args.cutoffs)
    rep = metric_report(res.theta_hat, truth, spec, args.rule, spec_hat=res.spec)
    print(json.dumps(rep.__dict__))


def cmd_experiment(args) -> None:
    cfg = read_json(args.config)
    if args.replicates is not None:
        cfg.setdefault("replication", {})["n_replicates"] = args.replicates
    out = args.out or cfg.get("output")
    if not out:
        raise UsageError("no output path: pass --out or set 'output' in the config")
    rows = run_experiment(cfg, jobs=args.jobs)
    write_csv(out, rows)
    print(out)


def _check_finite(t) -> None:
    if not np.all(np.isfinite(t)):
        raise FloatingPointError("estimate contains non-finite values")


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _add_fit_flags(p, rank_required=True):
    if rank_required:
        p.add_argument("--rank", type=_ints, required=True,
                       help="Tucker rank, e.g. 3,3,3 (a single value applies to every mode)")
    p.add_argument("--alpha", type=float, default=10.0, help="entrywise bound on the signal")
    p.add_argument("--beta", type=float, default=None, help="bound on the cut-offs (default 2*alpha)")
    p.add_argument("--delta", type=float, default=1e-3, help="minimum cut-off gap")
    p.add_argument("--link", choices=("probit", "logistic"), default="probit")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--cutoffs", type=_floats, default=None,
                   help="known or initial cut-offs (default f^-1(l/L))")
    p.add_argument("--estimate-cutoffs", action="store_true")
    p.add_argument("--init", choices=("hosvd", "random"), default="hosvd")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--inner-steps", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ordtensor",
                                     description="Low-rank estimation from ordinal tensors.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a signal tensor and ordinal observations")
    p.add_argument("--config", help="experiment config JSON (generator/sampling blocks)")
    p.add_argument("--dims", type=_ints)
    p.add_argument("--rank", type=_ints)
    p.add_argument("--alpha", type=float)
    p.add_argument("--link", choices=("probit", "logistic"))
    p.add_argument("--sigma", type=float)
    p.add_argument("--levels", type=int)
    p.add_argument("--rho", type=float, help="observation fraction (uniform sampling)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the ordinal tensor model")
    p.add_argument("input")
    _add_fit_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("rank-select", help="choose the rank by BIC over a grid")
    p.add_argument("input")
    p.add_argument("--grid", type=_grid, required=True, help="ranks separated by ';', e.g. '1,1,1;2,2,2'")
    _add_fit_flags(p, rank_required=False)
    p.add_argument("--out", required=True, help="CSV output")
    p.set_defaults(func=cmd_rank_select)

    p = sub.add_parser("cv", help="stratified cross-validated prediction error")
    p.add_argument("input")
    _add_fit_flags(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--metric", choices=("mad", "mcr", "both"), default="both")
    p.add_argument("--rule", choices=("mode", "median"), default="mode")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="predict labels from a fit file")
    p.add_argument("fit")
    p.add_argument("--rule", choices=("mode", "median"), default="mode")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("metrics", help="compare a fit against a truth tensor")
    p.add_argument("--truth", required=True)
    p.add_argument("--fit", required=True)
    p.add_argument("--rule", choices=("mode", "median"), default="mode")
    p.add_argument("--cutoffs", type=_floats, default=None, help="true cut-offs (default f^-1(l/L))")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("experiment", help="run a simulation sweep and write a CSV")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--replicates", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
