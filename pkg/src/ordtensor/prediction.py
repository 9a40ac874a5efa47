"""Label prediction from a fitted signal, and the continuous Tucker baseline."""

from __future__ import annotations

import numpy as np

from .datagen import quantize
from .likelihood import OrdinalTensor
from .links import LinkSpec, category_probs
from .tensor import (TuckerFactors, check_rank, frobenius_norm, hosvd,
                     leading_left_singular_vectors, multi_mode_multiply, tucker_compose, unfold)

# probabilities within this of the maximum count as tied for the mode
_TIE = 1e-12


def predict_labels(theta, spec: LinkSpec, rule: str = "mode") -> OrdinalTensor:
    """Fully observed label tensor predicted entrywise from ``theta``.

    ``mode``: most probable level, ties to the smallest level.
    ``median``: smallest level whose cumulative probability reaches 1/2.  For
    the built-in links (symmetric noise) this is the noiseless quantization
    of ``theta`` and is computed that way.
    """
    theta = np.asarray(theta, dtype=float)
    if rule == "mode":
        probs = category_probs(spec, theta)
        top = probs.max(axis=-1, keepdims=True)
        labels = np.argmax(probs >= top - _TIE, axis=-1) + 1
    elif rule == "median":
        labels = quantize(theta, spec.cutoffs)
    else:
        raise ValueError(f"unknown prediction rule {rule!r}")
    return OrdinalTensor.full(labels, spec.levels)


def hooi(x: np.ndarray, rank, max_sweeps: int = 50, tol: float = 1e-8):
    """Least-squares Tucker approximation by higher-order orthogonal iteration.

    Returns ``(TuckerFactors, errors)`` where ``errors`` lists the squared
    residual after HOSVD initialization and after each sweep.
    """
    rank = check_rank(x.shape, rank)
    tf = hosvd(x, rank)
    norm2 = frobenius_norm(x) ** 2
    errors = [max(norm2 - frobenius_norm(tf.core) ** 2, 0.0)]
    for _ in range(max_sweeps):
        factors = list(tf.factors)
        for k, r in enumerate(rank):
            proj = multi_mode_multiply(x, factors, skip=k, transpose=True)
            factors[k] = leading_left_singular_vectors(unfold(proj, k), r)
        core = multi_mode_multiply(x, factors, transpose=True)
        tf = TuckerFactors(core, factors)
        errors.append(max(norm2 - frobenius_norm(core) ** 2, 0.0))
        if abs(errors[-2] - errors[-1]) <= tol * max(errors[-2], 1e-300) or errors[-1] == 0:
            break
    return tf, errors


def continuous_tucker_fit(y: OrdinalTensor, rank, max_sweeps: int = 50,
                          tol: float = 1e-8) -> np.ndarray:
    """Tucker fit to the labels treated as real numbers; missing cells get the observed mean."""
    rank = check_rank(y.dims, rank)
    obs = y.labels[y.mask].astype(float)
    if obs.size == 0:
        raise ValueError("no observed entries")
    x = np.where(y.mask, y.labels, obs.mean()).astype(float)
    tf, _ = hooi(x, rank, max_sweeps, tol)
    return tucker_compose(tf)


def round_to_levels(values, levels: int) -> OrdinalTensor:
    """Nearest-integer labels clipped into ``1..levels``."""
    labels = np.clip(np.rint(values), 1, levels).astype(np.int64)
    return OrdinalTensor.full(labels, levels)
