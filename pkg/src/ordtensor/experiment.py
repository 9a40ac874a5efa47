"""Simulation sweeps and cross-validation."""

from __future__ import annotations

import copy
import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from typing import Optional

import numpy as np

from .datagen import SamplingPlan, simulate_ordinal
from .estimator import FitOptions, fit
from .likelihood import OrdinalTensor
from .links import LinkSpec
from .metrics import mad, mcr, metric_report
from .prediction import continuous_tucker_fit, predict_labels, round_to_levels

CSV_HEADER = ["axis", "value", "replicate", "seed", "mse", "relative_mse", "mad", "mcr",
              "objective", "converged"]
SWEEP_AXES = ("d", "alpha", "rho", "L")

DEFAULT_CONFIG = {
    "generator": {"dims": [20, 20, 20], "rank": [3, 3, 3], "alpha": 10.0,
                  "family": "probit", "sigma": 1.0, "levels": 5},
    "sampling": {"kind": "full"},
    "fit": {},
    "replication": {"n_replicates": 10, "base_seed": 0},
}


def merge_config(config: Optional[dict]) -> dict:
    out = copy.deepcopy(DEFAULT_CONFIG)
    for key, value in (config or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key].update(value)
        else:
            out[key] = value
    return out


def sampling_plan(block: dict) -> SamplingPlan:
    kind = block.get("kind", "full")
    if kind == "full":
        return SamplingPlan.full()
    if kind == "bernoulli":
        rho = float(block["rho"])
        return SamplingPlan.full() if rho == 1 else SamplingPlan.bernoulli(rho)
    if kind == "with_replacement":
        return SamplingPlan.with_replacement(np.asarray(block["pi_weights"]), int(block["m"]))
    raise ValueError(f"unknown sampling kind {kind!r}")


def fit_options(block: dict, alpha: float) -> FitOptions:
    known = {f.name for f in fields(FitOptions)}
    unknown = set(block) - known - {"rank"}
    if unknown:
        raise ValueError(f"unknown fit options: {sorted(unknown)}")
    kwargs = {k: v for k, v in block.items() if k in known}
    kwargs.setdefault("alpha", alpha)
    return FitOptions(**kwargs)


def apply_sweep(config: dict, axis: str, value) -> dict:
    """Copy of ``config`` with the swept quantity set to ``value``."""
    cfg = copy.deepcopy(config)
    gen = cfg["generator"]
    if axis == "d":
        gen["dims"] = [int(value)] * len(gen["dims"])
    elif axis == "alpha":
        gen["alpha"] = float(value)
        cfg["fit"].pop("alpha", None)
    elif axis == "rho":
        cfg["sampling"] = {"kind": "bernoulli", "rho": float(value)}
    elif axis == "L":
        gen["levels"] = int(value)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    return cfg


def run_replicate(config: dict, seed: int, baseline: bool = False) -> dict:
    """Simulate, fit and score one replicate; returns a flat dict of results."""
    gen = config["generator"]
    spec = LinkSpec.default(gen["family"], float(gen["sigma"]), int(gen["levels"]))
    plan = sampling_plan(config["sampling"])
    alpha = float(gen["alpha"])
    _, theta, y = simulate_ordinal(gen["dims"], gen["rank"], alpha, spec, plan, seed=seed)
    opts = fit_options(config["fit"], alpha)
    rank = config["fit"].get("rank", gen["rank"])
    res = fit(y, rank, spec.family, spec.sigma, opts, initial_cutoffs=spec.cutoffs)
    uniform = np.full(theta.shape, 1.0 / theta.size)
    rep = metric_report(res.theta_hat, theta, spec, pi_weights=uniform, spec_hat=res.spec)
    row = {
        "seed": seed, "mse": rep.mse, "relative_mse": rep.relative_mse, "mad": rep.mad,
        "mcr": rep.mcr, "objective": res.final_objective, "converged": res.converged,
        "weighted_error": rep.weighted_error, "kl": rep.kl_total, "iterations": res.iterations,
    }
    if baseline:
        truth = predict_labels(theta, spec)
        cont = round_to_levels(continuous_tucker_fit(y, rank), spec.levels)
        row["baseline_mad"] = mad(truth, cont)
        row["baseline_mcr"] = mcr(truth, cont)
    return row


def _sweep_task(args):
    cfg, axis, value, replicate, seed = args
    row = run_replicate(cfg, seed)
    return {"axis": axis, "value": value, "replicate": replicate, **row}


def run_experiment(config: dict, jobs: int = 1) -> list:
    """Run every (sweep value, replicate) pair; rows sorted by value then replicate."""
    config = merge_config(config)
    sweep = config.get("sweep")
    rep = config["replication"]
    n_rep = int(rep["n_replicates"])
    base = int(rep["base_seed"])
    if n_rep < 1:
        raise ValueError("n_replicates must be at least 1")
    if sweep:
        axis = sweep["axis"]
        values = list(sweep["values"])
        if not values:
            raise ValueError("sweep needs at least one value")
        cfgs = [(apply_sweep(config, axis, v), v) for v in values]
    else:
        axis, values = "none", [""]
        cfgs = [(config, "")]
    tasks = [(cfg, axis, v, r, base + r) for cfg, v in cfgs for r in range(n_rep)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(t) for t in tasks]
    rows.sort(key=lambda r: (values.index(r["value"]), r["replicate"]))
    return rows


def write_csv(path, rows, header=CSV_HEADER) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in header})


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return v


def loglog_slope(x, y) -> float:
    """OLS slope of ``log y`` on ``log x``."""
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)


# --- cross-validation ----------------------------------------------------

def stratified_folds(y: OrdinalTensor, n_folds: int, seed=None) -> np.ndarray:
    """Fold id per cell (-1 where unobserved), stratified by label.

    Within every label the fold sizes differ by at most one; the running
    offset across labels keeps the overall fold sizes balanced too.
    """
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    if y.n_observed < n_folds:
        raise ValueError(f"{y.n_observed} observed entries cannot fill {n_folds} folds")
    rng = np.random.default_rng(seed)
    folds = np.full(y.mask.size, -1, dtype=np.int64)
    flat_labels = y.labels.ravel()
    flat_mask = y.mask.ravel()
    offset = 0
    for level in range(1, y.levels + 1):
        idx = np.flatnonzero(flat_mask & (flat_labels == level))
        idx = rng.permutation(idx)
        folds[idx] = (offset + np.arange(idx.size)) % n_folds
        offset = (offset + idx.size) % n_folds
    return folds.reshape(y.dims)


def cross_validate(y: OrdinalTensor, rank, family: str = "probit", sigma: float = 1.0,
                   opts: Optional[FitOptions] = None, n_folds: int = 5, rule: str = "mode",
                   seed=None, initial_cutoffs=None) -> dict:
    """Stratified K-fold prediction error of held-out labels (MAD and MCR)."""
    folds = stratified_folds(y, n_folds, seed)
    per_fold = []
    for f in range(n_folds):
        test = folds == f
        train = y.with_mask(y.mask & ~test)
        if train.n_observed == 0:
            raise ValueError(f"fold {f + 1} leaves no training entries")
        res = fit(train, rank, family, sigma, opts, initial_cutoffs)
        pred = predict_labels(res.theta_hat, res.spec, rule)
        per_fold.append({
            "fold": f + 1,
            "n_test": int(test.sum()),
            "mad": mad(y, pred, test),
            "mcr": mcr(y, pred, test),
            "train_mad": mad(y, pred, train.mask),
            "train_mcr": mcr(y, pred, train.mask),
            "converged": bool(res.converged),
        })
    summary = {}
    for key in ("mad", "mcr", "train_mad", "train_mcr"):
        vals = np.array([row[key] for row in per_fold])
        summary[key] = {"mean": float(vals.mean()),
                        "stderr": float(vals.std(ddof=1) / math.sqrt(vals.size))}
    return {"folds": per_fold, "summary": summary, "rule": rule, "n_folds": n_folds}
