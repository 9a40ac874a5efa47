"""Seeded simulator: low-rank signals, latent-noise quantization, sampling masks.

All randomness flows from ``numpy.random.default_rng(seed)`` (PCG64), so a
fixed seed reproduces every output exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .likelihood import OrdinalTensor
from .links import LinkSpec
from .tensor import TuckerFactors, check_rank, infinity_norm, tucker_compose


def haar_orthonormal(rng: np.random.Generator, d: int, r: int) -> np.ndarray:
    """A ``d x r`` matrix with orthonormal columns, Haar distributed."""
    q, r_ = np.linalg.qr(rng.standard_normal((d, r)))
    return q * np.sign(np.diag(r_))


def simulate_signal(dims: Sequence[int], rank: Sequence[int], alpha: Optional[float] = None,
                    seed=None):
    """Random Tucker signal with N(0, 1) core and Haar factors.

    If ``alpha`` is given the core is rescaled so the signal has sup-norm
    exactly ``alpha``.  Returns ``(TuckerFactors, theta)``.
    """
    dims = tuple(int(d) for d in dims)
    rank = check_rank(dims, rank)
    rng = np.random.default_rng(seed)
    core = rng.standard_normal(rank)
    factors = [haar_orthonormal(rng, d, r) for d, r in zip(dims, rank)]
    tf = TuckerFactors(core, factors)
    theta = tucker_compose(tf)
    if alpha is not None:
        if alpha <= 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        scale = alpha / infinity_norm(theta)
        tf = TuckerFactors(core * scale, factors)
        theta = theta * scale
    return tf, theta


def latent_noise(spec: LinkSpec, size, rng: np.random.Generator) -> np.ndarray:
    """Noise whose CDF is the link: logistic(sigma) or N(0, sigma^2)."""
    if spec.family == "logistic":
        u = rng.random(size)
        # inverse CDF; u == 0 has probability 2**-53 and is nudged off the boundary
        u = np.clip(u, np.finfo(float).tiny, None)
        return spec.sigma * np.log(u / (1 - u))
    return spec.sigma * rng.standard_normal(size)


def quantize(values, cutoffs) -> np.ndarray:
    """Label ``l`` such that ``values`` lies in ``(b_{l-1}, b_l]``."""
    return np.searchsorted(np.asarray(cutoffs), values, side="left") + 1


def quantize_latent(theta, spec: LinkSpec, seed=None) -> OrdinalTensor:
    """Fully observed ordinal tensor from ``theta + noise`` binned at the cut-offs.

    ``spec.sigma == 0`` gives the noiseless quantization of ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    if spec.sigma == 0:
        latent = theta
    else:
        rng = np.random.default_rng(seed)
        latent = theta + latent_noise(spec, theta.shape, rng)
    return OrdinalTensor.full(quantize(latent, spec.cutoffs), spec.levels)


@dataclass(frozen=True)
class SamplingPlan:
    """How the observed index set is drawn.

    ``kind`` is ``"full"``, ``"bernoulli"`` (each cell observed independently
    with probability ``rho``) or ``"with_replacement"`` (``m`` draws from the
    cell distribution ``pi_weights``).
    """

    kind: str = "full"
    rho: float = 1.0
    pi_weights: Optional[np.ndarray] = None
    m: int = 0

    def __post_init__(self):
        if self.kind not in ("full", "bernoulli", "with_replacement"):
            raise ValueError(f"unknown sampling plan {self.kind!r}")
        if self.kind == "bernoulli" and not 0 < self.rho <= 1:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if self.kind == "with_replacement":
            if self.pi_weights is None:
                raise ValueError("with_replacement sampling needs pi_weights")
            w = np.asarray(self.pi_weights, dtype=float)
            if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
                raise ValueError("pi_weights must be non-negative and sum to 1")
            if self.m < 1:
                raise ValueError(f"draw count m must be >= 1, got {self.m}")

    @classmethod
    def full(cls) -> "SamplingPlan":
        return cls("full")

    @classmethod
    def bernoulli(cls, rho: float) -> "SamplingPlan":
        return cls("bernoulli", rho=rho)

    @classmethod
    def with_replacement(cls, pi_weights, m: int) -> "SamplingPlan":
        return cls("with_replacement", pi_weights=np.asarray(pi_weights, dtype=float), m=int(m))


def sample_mask(dims: Sequence[int], plan: SamplingPlan, seed=None):
    """Observation mask and per-cell draw counts ``(mask, counts)``."""
    dims = tuple(int(d) for d in dims)
    rng = np.random.default_rng(seed)
    if plan.kind == "full":
        mask = np.ones(dims, dtype=bool)
        counts = mask.astype(np.int64)
    elif plan.kind == "bernoulli":
        mask = rng.random(dims) < plan.rho
        counts = mask.astype(np.int64)
    else:
        w = np.asarray(plan.pi_weights, dtype=float)
        if w.shape != dims:
            raise ValueError(f"pi_weights shape {w.shape} does not match dims {dims}")
        flat = rng.choice(w.size, size=plan.m, p=w.ravel(order="F") / w.sum())
        counts = np.bincount(flat, minlength=w.size).reshape(dims, order="F")
        mask = counts > 0
    return mask, counts


def observe(y: OrdinalTensor, mask, counts=None) -> OrdinalTensor:
    """Restrict a fully observed tensor to a sampled mask."""
    mask = np.asarray(mask, dtype=bool)
    keep_counts = counts is not None and np.any(np.asarray(counts)[mask] > 1)
    return OrdinalTensor(np.where(mask, y.labels, 0), mask, y.levels,
                         np.asarray(counts) if keep_counts else None)


def simulate_ordinal(dims, rank, alpha, spec: LinkSpec, plan: SamplingPlan = SamplingPlan(),
                     seed=None):
    """One replicate of the simulation protocol: ``(factors, theta, observed labels)``.

    Independent child seeds are spawned for the signal, the noise and the mask.
    """
    s_signal, s_noise, s_mask = np.random.SeedSequence(seed).spawn(3)
    tf, theta = simulate_signal(dims, rank, alpha, seed=s_signal)
    y = quantize_latent(theta, spec, seed=s_noise)
    mask, counts = sample_mask(dims, plan, seed=s_mask)
    return tf, theta, observe(y, mask, counts)
