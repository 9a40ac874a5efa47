"""Log-likelihood of ordinal tensor observations and its derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .links import LinkSpec, link_deriv, link_deriv2, log_prob_derivs


@dataclass
class OrdinalTensor:
    """Labels in ``1..L`` on an observation mask.

    ``labels`` may hold anything (conventionally 0) where ``mask`` is False.
    ``counts`` optionally records how many times each cell was drawn when the
    observation set is sampled with replacement; the likelihood weights each
    observed cell by its count.
    """

    labels: np.ndarray
    mask: np.ndarray
    levels: int
    counts: Optional[np.ndarray] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.labels.shape != self.mask.shape:
            raise ValueError(f"labels {self.labels.shape} and mask {self.mask.shape} differ in shape")
        if self.levels < 2:
            raise ValueError(f"need at least 2 levels, got {self.levels}")
        obs = self.labels[self.mask]
        if obs.size and (obs.min() < 1 or obs.max() > self.levels):
            raise ValueError(f"observed labels must lie in 1..{self.levels}")
        if self.counts is not None:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != self.mask.shape:
                raise ValueError("counts must have the same shape as the mask")
            if np.any(self.counts[self.mask] < 1) or np.any(self.counts[~self.mask] != 0):
                raise ValueError("counts must be positive exactly on observed cells")

    @classmethod
    def full(cls, labels, levels: int) -> "OrdinalTensor":
        labels = np.asarray(labels)
        return cls(labels, np.ones(labels.shape, dtype=bool), levels)

    @property
    def dims(self) -> tuple:
        return self.labels.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    @property
    def weights(self) -> np.ndarray:
        """Per-cell likelihood weight: the draw count, or the 0/1 mask."""
        if self.counts is not None:
            return self.counts.astype(float)
        return self.mask.astype(float)

    def with_mask(self, mask) -> "OrdinalTensor":
        mask = np.asarray(mask, dtype=bool) & self.mask
        counts = None if self.counts is None else np.where(mask, self.counts, 0)
        return OrdinalTensor(np.where(mask, self.labels, 0), mask, self.levels, counts)


def _check(y: OrdinalTensor, theta: np.ndarray, spec: LinkSpec) -> None:
    if tuple(theta.shape) != tuple(y.dims):
        raise ValueError(f"theta dims {theta.shape} do not match data dims {y.dims}")
    if spec.levels != y.levels:
        raise ValueError(f"link has {spec.levels} levels but data has {y.levels}")


def _observed(y: OrdinalTensor, theta: np.ndarray):
    idx = np.flatnonzero(y.mask)
    return idx, y.labels.ravel()[idx], np.asarray(theta, dtype=float).ravel()[idx], y.weights.ravel()[idx]


def log_likelihood(y: OrdinalTensor, theta: np.ndarray, spec: LinkSpec) -> float:
    """Sum over observed cells of ``log P(y_w | theta_w)`` (probabilities floored at 1e-12)."""
    theta = np.asarray(theta, dtype=float)
    _check(y, theta, spec)
    _, lab, th, w = _observed(y, theta)
    if lab.size == 0:
        return 0.0
    g, _, _ = log_prob_derivs(spec, th, lab)
    return float(np.dot(w, np.log(g)))


def grad_theta(y: OrdinalTensor, theta: np.ndarray, spec: LinkSpec) -> np.ndarray:
    """Entrywise score; zero on unobserved cells."""
    theta = np.asarray(theta, dtype=float)
    _check(y, theta, spec)
    idx, lab, th, w = _observed(y, theta)
    out = np.zeros(theta.size)
    if idx.size:
        g, dg, _ = log_prob_derivs(spec, th, lab)
        out[idx] = w * dg / g
    return out.reshape(theta.shape)


def hessian_theta_diag(y: OrdinalTensor, theta: np.ndarray, spec: LinkSpec) -> np.ndarray:
    """Diagonal of the (diagonal) Hessian in ``theta``; zero on unobserved cells."""
    theta = np.asarray(theta, dtype=float)
    _check(y, theta, spec)
    idx, lab, th, w = _observed(y, theta)
    out = np.zeros(theta.size)
    if idx.size:
        g, dg, d2g = log_prob_derivs(spec, th, lab)
        out[idx] = w * (d2g * g - dg * dg) / (g * g)
    return out.reshape(theta.shape)


def theta_derivatives(y: OrdinalTensor, theta: np.ndarray, spec: LinkSpec):
    """Objective, score tensor and Hessian diagonal in one pass."""
    theta = np.asarray(theta, dtype=float)
    _check(y, theta, spec)
    idx, lab, th, w = _observed(y, theta)
    grad = np.zeros(theta.size)
    hess = np.zeros(theta.size)
    if idx.size == 0:
        return 0.0, grad.reshape(theta.shape), hess.reshape(theta.shape)
    g, dg, d2g = log_prob_derivs(spec, th, lab)
    score = dg / g
    grad[idx] = w * score
    hess[idx] = w * (d2g / g - score * score)
    return float(np.dot(w, np.log(g))), grad.reshape(theta.shape), hess.reshape(theta.shape)


def _cutoff_terms(y, theta, spec):
    _, lab, th, w = _observed(y, theta)
    b = spec.padded_cutoffs
    upper = b[lab] - th
    lower = b[lab - 1] - th
    g, _, _ = log_prob_derivs(spec, th, lab)
    has_upper = lab < spec.levels
    has_lower = lab > 1
    with np.errstate(invalid="ignore"):
        du = np.where(has_upper, link_deriv(spec, upper), 0.0)
        dl = np.where(has_lower, link_deriv(spec, lower), 0.0)
    return lab, w, g, upper, lower, du, dl, has_upper, has_lower


def grad_cutoffs(y: OrdinalTensor, theta: np.ndarray, spec: LinkSpec) -> np.ndarray:
    """Gradient of the log-likelihood with respect to ``b_1..b_{L-1}``."""
    theta = np.asarray(theta, dtype=float)
    _check(y, theta, spec)
    n = spec.levels - 1
    lab, w, g, _, _, du, dl, has_upper, has_lower = _cutoff_terms(y, theta, spec)
    out = np.zeros(n)
    # label l pushes b_l up and b_{l-1} down
    np.add.at(out, lab[has_upper] - 1, (w * du / g)[has_upper])
    np.add.at(out, lab[has_lower] - 2, -(w * dl / g)[has_lower])
    return out


def hessian_cutoffs(y: OrdinalTensor, theta: np.ndarray, spec: LinkSpec) -> np.ndarray:
    """Tridiagonal Hessian of the log-likelihood in the cut-offs, as a dense matrix."""
    theta = np.asarray(theta, dtype=float)
    _check(y, theta, spec)
    n = spec.levels - 1
    lab, w, g, upper, lower, du, dl, has_upper, has_lower = _cutoff_terms(y, theta, spec)
    with np.errstate(invalid="ignore"):
        d2u = np.where(has_upper, link_deriv2(spec, upper), 0.0)
        d2l = np.where(has_lower, link_deriv2(spec, lower), 0.0)
    g2 = g * g
    h = np.zeros((n, n))
    diag = np.zeros(n)
    np.add.at(diag, lab[has_upper] - 1, (w * (d2u * g - du * du) / g2)[has_upper])
    np.add.at(diag, lab[has_lower] - 2, (w * (-d2l * g - dl * dl) / g2)[has_lower])
    both = has_upper & has_lower
    off = np.zeros(max(n - 1, 0))
    np.add.at(off, lab[both] - 2, (w * du * dl / g2)[both])
    h[np.diag_indices(n)] = diag
    if n > 1:
        i = np.arange(n - 1)
        h[i, i + 1] = off
        h[i + 1, i] = off
    return h
