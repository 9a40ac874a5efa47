"""Error metrics and Tucker principal-component clustering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .likelihood import OrdinalTensor
from .links import PROB_FLOOR, LinkSpec, category_probs
from .tensor import TuckerFactors, unfold


def _same_shape(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _same_shape(a, b)
    return float(np.mean((a - b) ** 2))


def relative_mse(estimate, truth) -> float:
    """``||estimate - truth||_F^2 / ||truth||_F^2``."""
    a, b = _same_shape(estimate, truth)
    denom = float(np.sum(b ** 2))
    if denom == 0:
        raise ValueError("relative error undefined for a zero reference tensor")
    return float(np.sum((a - b) ** 2)) / denom


def weighted_error(a, b, pi_weights) -> float:
    """Sampling-weighted squared error ``sum_w pi_w (a_w - b_w)^2``."""
    a, b = _same_shape(a, b)
    w = np.asarray(pi_weights, dtype=float)
    if w.shape != a.shape:
        raise ValueError(f"weights of shape {w.shape} do not match {a.shape}")
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise ValueError("weights must be non-negative and sum to 1")
    return float(np.sum(w * (a - b) ** 2))


def _labels(x):
    return x.labels if isinstance(x, OrdinalTensor) else np.asarray(x)


def _label_pair(a, b, mask):
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        return a[mask], b[mask]
    return a.ravel(), b.ravel()


def mad(labels_a, labels_b, mask=None) -> float:
    """Mean absolute label deviation, over all cells or over ``mask``."""
    a, b = _label_pair(labels_a, labels_b, mask)
    return float(np.mean(np.abs(a.astype(float) - b))) if a.size else 0.0


def mcr(labels_a, labels_b, mask=None) -> float:
    """Misclassification rate, over all cells or over ``mask``."""
    a, b = _label_pair(labels_a, labels_b, mask)
    return float(np.mean(a != b)) if a.size else 0.0


def kl_categorical(theta_a, theta_b, spec: LinkSpec) -> float:
    """Summed KL divergence between the entrywise level distributions."""
    ta, tb = _same_shape(theta_a, theta_b)
    p = np.maximum(category_probs(spec, ta), PROB_FLOOR)
    q = np.maximum(category_probs(spec, tb), PROB_FLOOR)
    return float(max(np.sum(p * (np.log(p) - np.log(q))), 0.0))


@dataclass
class MetricReport:
    mse: float
    relative_mse: float
    mad: float
    mcr: float
    kl_total: float
    weighted_error: Optional[float] = None


def metric_report(theta_hat, theta_true, spec: LinkSpec, rule: str = "mode",
                  pi_weights=None, spec_hat: Optional[LinkSpec] = None) -> MetricReport:
    """All error metrics of an estimate against the truth.

    Labels are predicted from both tensors with ``rule`` and compared; the
    estimate uses ``spec_hat`` (estimated cut-offs) when given.
    """
    from .prediction import predict_labels

    truth_labels = predict_labels(theta_true, spec, rule)
    hat_labels = predict_labels(theta_hat, spec_hat or spec, rule)
    return MetricReport(
        mse=mse(theta_hat, theta_true),
        relative_mse=relative_mse(theta_hat, theta_true),
        mad=mad(truth_labels, hat_labels),
        mcr=mcr(truth_labels, hat_labels),
        kl_total=kl_categorical(theta_true, theta_hat, spec),
        weighted_error=None if pi_weights is None else weighted_error(theta_hat, theta_true, pi_weights),
    )


# --- clustering -----------------------------------------------------------

def principal_components(factors: TuckerFactors, mode: int) -> np.ndarray:
    """Mode-``mode`` principal component matrix ``M_k C_(k)`` (``d_k`` rows)."""
    return factors.factors[mode] @ unfold(factors.core, mode)


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        # all points coincide with a center: any choice is equivalent
        i = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(x[i])
        d2 = np.minimum(d2, np.sum((x - x[i]) ** 2, axis=1))
    return np.array(centers)


def lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 100):
    """Lloyd iterations from given centers: ``(labels, centers, inertia_trace)``."""
    x = np.asarray(x, dtype=float)
    centers = np.array(centers, dtype=float)
    trace = []
    labels = None
    for _ in range(max_iter):
        dist = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dist, axis=1)
        trace.append(float(dist[np.arange(x.shape[0]), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(centers.shape[0]):
            members = x[labels == j]
            # an emptied cluster keeps its old center
            if members.size:
                centers[j] = members.mean(axis=0)
    return labels, centers, trace


def kmeans(x: np.ndarray, k: int, seed=None, n_init: int = 50, max_iter: int = 100):
    """Best-of-``n_init`` K-means with k-means++ seeding: ``(labels, inertia)``."""
    x = np.asarray(x, dtype=float)
    if not 1 <= k <= x.shape[0]:
        raise ValueError(f"cannot form {k} clusters from {x.shape[0]} points")
    best = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        rng = np.random.default_rng(child)
        labels, _, trace = lloyd(x, _kmeans_pp(x, k, rng), max_iter)
        if best is None or trace[-1] < best[1]:
            best = (labels, trace[-1])
    return _canonical(best[0]), best[1]


def _canonical(labels):
    """Relabel clusters 0, 1, ... in order of first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    mapping = np.empty(labels.max() + 1, dtype=np.int64)
    mapping[np.unique(labels)[order]] = np.arange(order.size)
    return mapping[labels]


def cluster_mode(factors: TuckerFactors, mode: int, k_clusters: int, seed=None,
                 n_init: int = 50, max_iter: int = 100):
    """K-means on the rows of the mode principal component matrix.

    Returns ``(assignments, within_cluster_ss)``.
    """
    d = factors.factors[mode].shape[0]
    if not 1 <= k_clusters <= d:
        raise ValueError(f"k_clusters={k_clusters} must lie in 1..{d}")
    return kmeans(principal_components(factors, mode), k_clusters, seed, n_init, max_iter)


def elbow_curve(factors: TuckerFactors, mode: int, max_k: int, seed=None):
    """Within-cluster sum of squares for k = 1..max_k."""
    return [cluster_mode(factors, mode, k, seed)[1] for k in range(1, max_k + 1)]
