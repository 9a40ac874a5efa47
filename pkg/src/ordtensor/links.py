"""Cumulative link functions, cut-off points and category probabilities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.optimize import minimize_scalar

FAMILIES = ("logistic", "probit")

# probabilities are floored here before any log or division
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LinkSpec:
    """Link family, scale and cut-offs of a cumulative link model.

    ``cutoffs`` holds the interior points ``b_1 < ... < b_{L-1}``; the outer
    points are implicitly ``-inf`` and ``+inf``.  ``sigma == 0`` is accepted
    only as the noiseless limit used by :func:`ordtensor.datagen.quantize_latent`.
    """

    family: str
    sigma: float
    cutoffs: np.ndarray = field(repr=False)
    levels: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown link family {self.family!r}; expected one of {FAMILIES}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        b = np.asarray(self.cutoffs, dtype=float).ravel()
        if b.size < 1:
            raise ValueError("at least one cut-off is required (L >= 2)")
        if not np.all(np.isfinite(b)):
            raise ValueError("cut-offs must be finite")
        if np.any(np.diff(b) <= 0):
            raise ValueError(f"cut-offs must be strictly increasing, got {b}")
        b.setflags(write=False)
        object.__setattr__(self, "cutoffs", b)
        levels = b.size + 1
        if self.levels and self.levels != levels:
            raise ValueError(f"{b.size} cut-offs imply {levels} levels, not {self.levels}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def default(cls, family: str = "probit", sigma: float = 1.0, levels: int = 5) -> "LinkSpec":
        return cls(family, sigma, default_cutoffs(family, sigma, levels))

    def with_cutoffs(self, cutoffs) -> "LinkSpec":
        return LinkSpec(self.family, self.sigma, cutoffs)

    @property
    def padded_cutoffs(self) -> np.ndarray:
        """``(-inf, b_1, ..., b_{L-1}, +inf)``."""
        return np.concatenate(([-np.inf], self.cutoffs, [np.inf]))


def _scale(spec: LinkSpec) -> float:
    if spec.sigma == 0:
        raise ValueError("link functions are undefined for sigma = 0")
    return spec.sigma


def link_eval(spec: LinkSpec, x):
    """The link ``f``: a CDF mapping the real line into (0, 1)."""
    z = np.asarray(x, dtype=float) / _scale(spec)
    if spec.family == "logistic":
        return special.expit(z)
    return special.ndtr(z)


def link_survival(spec: LinkSpec, x):
    """``1 - f(x)`` computed without cancellation."""
    return link_eval(spec, -np.asarray(x, dtype=float))


def link_deriv(spec: LinkSpec, x):
    """Density ``f'``."""
    s = _scale(spec)
    z = np.asarray(x, dtype=float) / s
    if spec.family == "logistic":
        p = special.expit(z)
        return p * special.expit(-z) / s
    return np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi) / s


def link_deriv2(spec: LinkSpec, x):
    """Second derivative ``f''``."""
    s = _scale(spec)
    z = np.asarray(x, dtype=float) / s
    dens = link_deriv(spec, x)
    if spec.family == "logistic":
        return dens * np.tanh(-z / 2) / s
    return -z * dens / s


def link_inverse(spec: LinkSpec, p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("link_inverse requires probabilities strictly inside (0, 1)")
    s = _scale(spec)
    if spec.family == "logistic":
        return s * special.logit(p)
    return s * special.ndtri(p)


def default_cutoffs(family: str, sigma: float, levels: int) -> np.ndarray:
    """Cut-offs ``f^{-1}(l / L)``, l = 1..L-1, making the levels equiprobable at 0."""
    if int(levels) < 2:
        raise ValueError(f"need at least 2 levels, got {levels}")
    levels = int(levels)
    probe = LinkSpec(family, sigma, [0.0])
    q = np.arange(1, levels) / levels
    b = link_inverse(probe, q)
    # exact antisymmetry about zero
    return (b - b[::-1]) / 2


def _interval_probs(spec: LinkSpec, upper, lower):
    """``f(upper) - f(lower)`` with cancellation-free evaluation in the right tail."""
    upper = np.asarray(upper, dtype=float)
    lower = np.asarray(lower, dtype=float)
    left = link_eval(spec, upper) - link_eval(spec, lower)
    right = link_survival(spec, lower) - link_survival(spec, upper)
    return np.where(lower > 0, right, left)


def level_bounds(spec: LinkSpec, theta, level):
    """Latent interval ``(b_{l-1} - theta, b_l - theta)`` for each entry."""
    padded = spec.padded_cutoffs
    level = np.asarray(level)
    theta = np.asarray(theta, dtype=float)
    return padded[level] - theta, padded[level - 1] - theta


def _check_levels(spec: LinkSpec, level):
    level = np.asarray(level)
    if np.any((level < 1) | (level > spec.levels)):
        raise ValueError(f"levels must lie in 1..{spec.levels}")
    return level


def category_prob(spec: LinkSpec, theta, level):
    """``P(y = level | theta) = f(b_l - theta) - f(b_{l-1} - theta)`` (unfloored)."""
    level = _check_levels(spec, level)
    upper, lower = level_bounds(spec, theta, level)
    return _interval_probs(spec, upper, lower)


def category_probs(spec: LinkSpec, theta) -> np.ndarray:
    """All level probabilities, stacked along a new trailing axis of length L."""
    theta = np.asarray(theta, dtype=float)
    cdf = link_eval(spec, spec.cutoffs - theta[..., None])
    sf = link_survival(spec, spec.cutoffs - theta[..., None])
    zeros = np.zeros(theta.shape + (1,))
    ones = np.ones(theta.shape + (1,))
    cdf = np.concatenate((zeros, cdf, ones), axis=-1)
    sf = np.concatenate((ones, sf, zeros), axis=-1)
    lower = np.concatenate((np.full(theta.shape + (1,), -np.inf),
                            spec.cutoffs - theta[..., None]), axis=-1)
    return np.where(lower > 0, sf[..., :-1] - sf[..., 1:], cdf[..., 1:] - cdf[..., :-1])


def log_prob_derivs(spec: LinkSpec, theta, level):
    """Value, first and second ``theta``-derivatives of ``g_l(theta)``.

    ``g_l(theta) = f(b_l - theta) - f(b_{l-1} - theta)``; infinite cut-offs
    contribute zero density.  Returns ``(g, dg, d2g)`` with ``g`` floored.
    """
    level = _check_levels(spec, level)
    upper, lower = level_bounds(spec, theta, level)
    g = np.maximum(_interval_probs(spec, upper, lower), PROB_FLOOR)
    with np.errstate(invalid="ignore"):
        du = np.where(np.isfinite(upper), link_deriv(spec, upper), 0.0)
        dl = np.where(np.isfinite(lower), link_deriv(spec, lower), 0.0)
        d2u = np.where(np.isfinite(upper), link_deriv2(spec, upper), 0.0)
        d2l = np.where(np.isfinite(lower), link_deriv2(spec, lower), 0.0)
    return g, -(du - dl), d2u - d2l


@dataclass(frozen=True)
class LinkConstants:
    """Extremal curvature constants of the link over ``|theta| <= alpha``.

    ``a_alpha`` is the smallest level probability, ``u_alpha`` the largest
    score magnitude and ``l_alpha`` the smallest negative log-curvature.
    """

    a_alpha: float
    u_alpha: float
    l_alpha: float
    alpha: float


def _score_and_curvature(spec, theta, level):
    g, dg, d2g = log_prob_derivs(spec, theta, level)
    score = dg / g
    return g, score, score * score - d2g / g


def link_constants(spec: LinkSpec, alpha: float) -> LinkConstants:
    """Grid search over ``theta in [-alpha, alpha]`` (step ``1e-3 * alpha``).

    Each grid extremum is polished with a bounded scalar search between its
    neighbouring grid points so that the returned constants bound the true
    extrema, not just the grid values.
    """
    if not alpha >= 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    grid = np.linspace(-alpha, alpha, 2001) if alpha > 0 else np.zeros(1)
    a_min, u_max, l_min = np.inf, 0.0, np.inf
    for level in range(1, spec.levels + 1):
        g, score, curv = _score_and_curvature(spec, grid, level)
        a_min = min(a_min, g.min())
        u_max = max(u_max, _polish(spec, level, grid, np.abs(score), 1, maximize=True))
        l_min = min(l_min, _polish(spec, level, grid, curv, 2, maximize=False))
    return LinkConstants(float(a_min), float(u_max), float(l_min), float(alpha))


def _polish(spec, level, grid, values, which, maximize):
    i = int(np.argmax(values) if maximize else np.argmin(values))
    best = values[i]
    if grid.size < 3 or i in (0, grid.size - 1):
        return best
    sign = -1.0 if maximize else 1.0

    def objective(t):
        out = _score_and_curvature(spec, np.array([t]), level)[which][0]
        return sign * (abs(out) if which == 1 else out)

    res = minimize_scalar(objective, bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                          options={"xatol": 1e-14})
    polished = sign * res.fun
    return max(best, polished) if maximize else min(best, polished)
