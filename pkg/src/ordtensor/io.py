"""JSON tensor files.

A tensor file is a JSON object::

    {"dims": [d1, ..., dK],
     "levels": L,                 # ordinal tensors only
     "format": "dense" | "long",
     "entries": [...]}

Dense entries are a flat array in first-index-fastest order, with ``null``
marking unobserved cells.  Long entries are records
``{"index": [i1, ..., iK], "value": v}`` with 1-based indices and an
optional ``"count"`` (number of times the cell was drawn); absent cells are
unobserved.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .estimator import FitResult
from .likelihood import OrdinalTensor
from .tensor import TuckerFactors, from_flat, to_flat


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def _dims(doc) -> tuple:
    try:
        dims = tuple(int(d) for d in doc["dims"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError("tensor file needs an integer 'dims' array") from exc
    if not dims or any(d < 1 for d in dims):
        raise DataError(f"invalid dims {dims}")
    return dims


def ordinal_to_dict(y: OrdinalTensor, fmt: str | None = None) -> dict:
    """Serialize labels; picks dense when at least half the cells are observed."""
    if fmt is None:
        fmt = "dense" if y.mask.mean() >= 0.5 and y.counts is None else "long"
    doc = {"dims": list(y.dims), "levels": int(y.levels), "format": fmt}
    if fmt == "dense":
        if y.counts is not None:
            raise DataError("draw counts can only be stored in long format")
        labels = to_flat(y.labels)
        mask = to_flat(y.mask)
        doc["entries"] = [int(v) if m else None for v, m in zip(labels, mask)]
    else:
        idx = np.argwhere(y.mask)
        # first index fastest, matching the dense layout
        idx = idx[np.lexsort(idx.T)]
        records = []
        for ix in idx:
            rec = {"index": [int(i) + 1 for i in ix], "value": int(y.labels[tuple(ix)])}
            if y.counts is not None:
                rec["count"] = int(y.counts[tuple(ix)])
            records.append(rec)
        doc["entries"] = records
    return doc


def dense_to_dict(t: np.ndarray) -> dict:
    return {"dims": list(t.shape), "format": "dense",
            "entries": [float(v) for v in to_flat(np.asarray(t, dtype=float))]}


def _parse_entries(doc, dims):
    entries = doc.get("entries")
    if not isinstance(entries, list):
        raise DataError("tensor file needs an 'entries' array")
    fmt = doc.get("format")
    if fmt is None:
        fmt = "long" if entries and isinstance(entries[0], dict) else "dense"
    n = int(np.prod(dims))
    values = np.zeros(n)
    mask = np.zeros(n, dtype=bool)
    counts = None
    if fmt == "dense":
        if len(entries) != n:
            raise DataError(f"dense entries have length {len(entries)}, dims {dims} need {n}")
        for i, v in enumerate(entries):
            if v is not None:
                values[i] = float(v)
                mask[i] = True
        return from_flat(values, dims), from_flat(mask, dims), None
    if fmt != "long":
        raise DataError(f"unknown tensor format {fmt!r}")
    values = np.zeros(dims)
    mask = np.zeros(dims, dtype=bool)
    for rec in entries:
        try:
            ix = tuple(int(i) - 1 for i in rec["index"])
            v = float(rec["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed long-format record {rec!r}") from exc
        if len(ix) != len(dims) or any(not 0 <= i < d for i, d in zip(ix, dims)):
            raise DataError(f"index {rec['index']} out of range for dims {dims}")
        if mask[ix]:
            raise DataError(f"duplicate index {rec['index']}")
        values[ix] = v
        mask[ix] = True
        if "count" in rec:
            if counts is None:
                counts = np.zeros(dims, dtype=np.int64)
            counts[ix] = int(rec["count"])
    if counts is not None:
        counts = np.where(mask & (counts == 0), 1, counts)
    return values, mask, counts


def tensor_from_dict(doc: dict):
    """``OrdinalTensor`` when the document has ``levels``, else a dense ndarray."""
    dims = _dims(doc)
    values, mask, counts = _parse_entries(doc, dims)
    if "levels" not in doc:
        if not mask.all():
            raise DataError("real-valued tensor files must be fully observed")
        return values
    levels = int(doc["levels"])
    obs = values[mask]
    if np.any(obs != np.round(obs)) or np.any((obs < 1) | (obs > levels)):
        raise DataError(f"ordinal values must be integers in 1..{levels}")
    try:
        return OrdinalTensor(np.where(mask, values, 0).astype(np.int64), mask, levels, counts)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from exc


def write_json(path, doc) -> None:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n")


def read_tensor(path):
    return tensor_from_dict(read_json(path))


def write_tensor(path, t, fmt: str | None = None) -> None:
    if isinstance(t, OrdinalTensor):
        write_json(path, ordinal_to_dict(t, fmt))
    else:
        write_json(path, dense_to_dict(t))


def fit_to_dict(res: FitResult, bic: float | None = None) -> dict:
    return {
        "rank": list(res.rank),
        "family": res.family,
        "sigma": res.sigma,
        "levels": int(res.cutoffs_hat.size + 1),
        "alpha": res.alpha,
        "cutoffs": [float(b) for b in res.cutoffs_hat],
        "offset": res.offset,
        "theta": dense_to_dict(res.theta_hat),
        "core": dense_to_dict(res.factors.core),
        "factors": [m.tolist() for m in res.factors.factors],
        "objective_trace": [float(v) for v in res.objective_trace],
        "converged": bool(res.converged),
        "iterations": int(res.iterations),
        "final_objective": float(res.final_objective),
        "bic": bic,
    }


def fit_from_dict(doc: dict) -> FitResult:
    try:
        factors = TuckerFactors(tensor_from_dict(doc["core"]),
                                [np.asarray(m, dtype=float) for m in doc["factors"]])
        return FitResult(
            factors=factors,
            theta_hat=tensor_from_dict(doc["theta"]),
            cutoffs_hat=np.asarray(doc["cutoffs"], dtype=float),
            objective_trace=np.asarray(doc["objective_trace"], dtype=float),
            converged=bool(doc["converged"]),
            iterations=int(doc["iterations"]),
            final_objective=float(doc["final_objective"]),
            family=doc["family"],
            sigma=float(doc["sigma"]),
            offset=float(doc.get("offset", 0.0)),
            alpha=float(doc.get("alpha", 0.0)),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed fit file: {exc}") from exc
