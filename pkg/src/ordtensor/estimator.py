"""Rank-constrained maximum likelihood for ordinal tensors by block ascent.

The parameter tensor is kept in Tucker form ``C x_1 M_1 ... x_K M_K`` and the
objective is increased one block at a time: each factor matrix, then the
core, then (optionally) the cut-offs.  Every block problem is concave, and a
block step is a damped Newton step with backtracking; a step is accepted only
if it does not lower the objective, so the objective trace is monotone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from .likelihood import (OrdinalTensor, grad_cutoffs, hessian_cutoffs, log_likelihood,
                         theta_derivatives)
from .links import LinkSpec, default_cutoffs
from .tensor import (TuckerFactors, check_rank, hosvd, multi_mode_multiply,
                     orthonormalize, tucker_compose, unfold)

log = logging.getLogger(__name__)

ARMIJO = 1e-4
MAX_HALVINGS = 40
FEAS_RTOL = 1e-12
# dense core Hessians beyond this many entries fall back to a scaled gradient step
_MAX_CORE_DESIGN = 2e7


@dataclass
class FitOptions:
    """Settings for :func:`fit`.

    ``beta`` defaults to ``2 * alpha``.  ``identifiability_centering``
    defaults to ``estimate_cutoffs``: with unknown cut-offs the pair
    ``(theta, b)`` is only determined up to a common shift, and the returned
    estimate is the representative whose entries average to zero.
    """

    alpha: float = 10.0
    beta: Optional[float] = None
    delta: float = 1e-3
    max_outer_iters: int = 200
    inner_steps: int = 5
    tol: float = 1e-6
    seed: int = 0
    estimate_cutoffs: bool = False
    identifiability_centering: Optional[bool] = None
    init: str = "hosvd"
    step: str = "newton"

    def __post_init__(self):
        if self.beta is None:
            self.beta = 2.0 * self.alpha
        if self.identifiability_centering is None:
            self.identifiability_centering = self.estimate_cutoffs
        for name in ("alpha", "beta", "delta", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_outer_iters < 1 or self.inner_steps < 1:
            raise ValueError("max_outer_iters and inner_steps must be at least 1")
        if self.init not in ("hosvd", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.step not in ("newton", "gradient"):
            raise ValueError(f"unknown step rule {self.step!r}")


@dataclass
class FitResult:
    """Output of :func:`fit`.

    ``theta_hat == tucker_compose(factors) - offset``; the offset is nonzero
    only under identifiability centering.  ``objective_trace[0]`` is the
    objective at the starting point, followed by one value per outer
    iteration.
    """

    factors: TuckerFactors
    theta_hat: np.ndarray
    cutoffs_hat: np.ndarray
    objective_trace: np.ndarray
    converged: bool
    iterations: int
    final_objective: float
    family: str = "probit"
    sigma: float = 1.0
    offset: float = 0.0
    alpha: float = 0.0

    @property
    def rank(self) -> tuple:
        return self.factors.rank

    @property
    def spec(self) -> LinkSpec:
        return LinkSpec(self.family, self.sigma, self.cutoffs_hat)


@dataclass
class BlockState:
    """Mutable iterate of the block ascent."""

    y: OrdinalTensor
    spec: LinkSpec
    tf: TuckerFactors
    opts: FitOptions
    theta: np.ndarray = field(init=False)
    objective: float = field(init=False)

    def __post_init__(self):
        self.refresh()

    def refresh(self):
        self.theta = tucker_compose(self.tf)
        self.objective = log_likelihood(self.y, self.theta, self.spec)

    @property
    def shift(self) -> float:
        return float(self.theta.mean()) if self.opts.identifiability_centering else 0.0


def _sup_norm(theta: np.ndarray, centered: bool) -> float:
    t = theta - theta.mean() if centered else theta
    return float(np.max(np.abs(t)))


def _feasible(tf: TuckerFactors, theta: np.ndarray, opts: FitOptions):
    """Shrink the core so the (possibly centered) sup-norm is at most alpha."""
    sup = _sup_norm(theta, opts.identifiability_centering)
    if sup <= opts.alpha:
        return tf, theta
    scale = opts.alpha / sup
    return TuckerFactors(tf.core * scale, tf.factors), theta * scale


def _ensure_feasible(state: BlockState) -> None:
    """Project an infeasible starting iterate (only reachable from outside :func:`fit`).

    Iterates produced by a rescale sit on the boundary up to rounding, so a
    relative slack keeps them from being rescaled (and re-evaluated) again.
    """
    sup = _sup_norm(state.theta, state.opts.identifiability_centering)
    if sup <= state.opts.alpha * (1 + FEAS_RTOL):
        return
    tf, _ = _feasible(state.tf, state.theta, state.opts)
    state.tf = tf
    state.refresh()


def _try_theta_step(state: BlockState, grad: np.ndarray, candidate) -> bool:
    """Backtracking on ``candidate(t)`` (a TuckerFactors) from ``t = 1``.

    Accepts the first step satisfying the Armijo condition measured in theta
    space; leaves the state untouched if none does.
    """
    t = 1.0
    for _ in range(MAX_HALVINGS):
        tf, theta = _feasible(*_with_theta(candidate(t)), state.opts)
        obj = log_likelihood(state.y, theta, state.spec)
        gain = float(np.sum(grad * (theta - state.theta)))
        if obj >= state.objective + ARMIJO * max(gain, 0.0):
            if obj == state.objective and gain <= 0:
                return False
            state.tf, state.theta, state.objective = tf, theta, obj
            return True
        t *= 0.5
    return False


def _with_theta(tf: TuckerFactors):
    return tf, tucker_compose(tf)


def _ridge_solve(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve ``(h + lam I) x = g`` for symmetric PSD ``h`` (batched over leading axes)."""
    r = h.shape[-1]
    scale = np.trace(h, axis1=-2, axis2=-1)[..., None, None] / r
    lam = 1e-8 * scale + 1e-12
    return np.linalg.solve(h + lam * np.eye(r), g[..., None])[..., 0]


def update_factor_block(state: BlockState, k: int) -> BlockState:
    """Ascent on factor ``M_k`` with the other blocks fixed, then re-orthonormalize."""
    _ensure_feasible(state)
    for _ in range(state.opts.inner_steps):
        _, grad, hess = theta_derivatives(state.y, state.theta, state.spec)
        tf = state.tf
        # theta_(k) = M_k @ basis, one small regression per row of M_k
        basis = unfold(multi_mode_multiply(tf.core, tf.factors, skip=k), k)
        g_rows = unfold(grad, k) @ basis.T
        if not np.any(np.abs(g_rows) > 1e-12):
            break
        if state.opts.step == "gradient":
            direction = g_rows
        else:
            w = np.maximum(-unfold(hess, k), 0.0)
            h_rows = (w[:, None, :] * basis[None, :, :]) @ basis.T
            direction = _ridge_solve(h_rows, g_rows)

        def candidate(t, tf=tf, direction=direction):
            factors = list(tf.factors)
            factors[k] = tf.factors[k] + t * direction
            return TuckerFactors(tf.core, factors)

        if not _try_theta_step(state, grad, candidate):
            break
    state.tf = orthonormalize(state.tf, k)
    state.theta = tucker_compose(state.tf)
    return state


def _kron_design(factors) -> np.ndarray:
    """``M_K kron ... kron M_1``: maps vec(core) to vec(theta), first index fastest."""
    out = np.ones((1, 1))
    for m in factors:
        out = np.kron(m, out)
    return out


def update_core_block(state: BlockState) -> BlockState:
    """Ascent on the core tensor with the factors fixed."""
    _ensure_feasible(state)
    for _ in range(state.opts.inner_steps):
        _, grad, hess = theta_derivatives(state.y, state.theta, state.spec)
        tf = state.tf
        g_core = multi_mode_multiply(grad, tf.factors, transpose=True)
        if not np.any(np.abs(g_core) > 1e-12):
            break
        w = np.maximum(-hess, 0.0)
        n_design = w.size * tf.core.size
        if state.opts.step == "gradient":
            direction = g_core
        elif n_design <= _MAX_CORE_DESIGN:
            x = _kron_design(tf.factors)
            h = x.T @ (w.ravel(order="F")[:, None] * x)
            step = _ridge_solve(h, g_core.ravel(order="F"))
            direction = np.reshape(step, tf.core.shape, order="F")
        else:
            # orthonormal factors: the core Hessian is bounded by max(w)
            direction = g_core / (w.max() + 1e-12)

        def candidate(t, tf=tf, direction=direction):
            return TuckerFactors(tf.core + t * direction, tf.factors)

        if not _try_theta_step(state, grad, candidate):
            break
    return state


def project_cutoffs(b, beta: float, delta: float) -> np.ndarray:
    """Euclidean projection onto ``{|b|_inf <= beta, b_{l+1} - b_l >= delta}``.

    With ``c_l = b_l - l * delta`` the gap constraints become monotonicity of
    ``c``; and for a monotone vector the box reduces to constant bounds on
    ``c``, so isotonic regression followed by clipping is the exact projection.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if (n - 1) * delta > 2 * beta:
        raise ValueError(f"no cut-offs with gap {delta} fit inside [-{beta}, {beta}]")
    steps = delta * np.arange(1, n + 1)
    c = isotonic_regression(b - steps).x
    c = np.clip(c, -beta - delta, beta - n * delta)
    return c + steps


def update_cutoff_block(state: BlockState) -> BlockState:
    """Projected Newton ascent on the cut-offs with theta fixed."""
    opts = state.opts
    for _ in range(opts.inner_steps):
        shift = state.shift
        b = state.spec.cutoffs
        g = grad_cutoffs(state.y, state.theta, state.spec)
        if not np.any(np.abs(g) > 1e-12):
            break
        if opts.step == "gradient":
            direction = g
        else:
            direction = _ridge_solve(-hessian_cutoffs(state.y, state.theta, state.spec), g)
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            cand = project_cutoffs(b + t * direction - shift, opts.beta, opts.delta) + shift
            spec = state.spec.with_cutoffs(cand)
            obj = log_likelihood(state.y, state.theta, spec)
            gain = float(np.dot(g, cand - b))
            if obj >= state.objective + ARMIJO * max(gain, 0.0) and (obj > state.objective or gain > 0):
                state.spec, state.objective = spec, obj
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    return state


def _initial_factors(y: OrdinalTensor, rank, opts: FitOptions) -> TuckerFactors:
    if opts.init == "random":
        from .datagen import simulate_signal
        tf, _ = simulate_signal(y.dims, rank, seed=opts.seed)
        return tf
    obs = y.labels[y.mask].astype(float)
    surrogate = np.where(y.mask, y.labels - obs.mean(), 0.0) * (y.mask.size / y.mask.sum())
    return hosvd(surrogate, rank)


def fit(y: OrdinalTensor, rank: Sequence[int], family: str = "probit", sigma: float = 1.0,
        opts: Optional[FitOptions] = None, initial_cutoffs=None) -> FitResult:
    """Estimate a rank-``rank`` signal tensor (and optionally the cut-offs)."""
    opts = replace(opts) if opts is not None else FitOptions()
    rank = check_rank(y.dims, rank)
    if y.n_observed == 0:
        raise ValueError("no observed entries")
    if initial_cutoffs is None:
        b0 = default_cutoffs(family, sigma, y.levels)
    else:
        b0 = np.asarray(initial_cutoffs, dtype=float)
        if b0.size != y.levels - 1:
            raise ValueError(f"expected {y.levels - 1} cut-offs, got {b0.size}")
        if np.any(np.diff(b0) <= 0):
            raise ValueError("initial cut-offs must be strictly increasing")
    if opts.estimate_cutoffs:
        b0 = project_cutoffs(b0, opts.beta, opts.delta)
    spec = LinkSpec(family, sigma, b0)

    tf = _initial_factors(y, rank, opts)
    theta0 = tucker_compose(tf)
    tf, _ = _feasible(tf, theta0, opts)
    state = BlockState(y, spec, tf, opts)
    if opts.estimate_cutoffs:
        # start the cut-offs inside the feasible set around the current shift
        b = project_cutoffs(state.spec.cutoffs - state.shift, opts.beta, opts.delta) + state.shift
        state.spec = state.spec.with_cutoffs(b)
        state.refresh()

    trace = [state.objective]
    converged = False
    iterations = 0
    for it in range(opts.max_outer_iters):
        for k in range(len(rank)):
            update_factor_block(state, k)
        update_core_block(state)
        if opts.estimate_cutoffs:
            update_cutoff_block(state)
        iterations = it + 1
        prev = trace[-1]
        trace.append(state.objective)
        change = abs(state.objective - prev) / max(abs(prev), 1e-300)
        log.debug("iteration %d objective %.6f change %.3g", iterations, state.objective, change)
        if change < opts.tol:
            converged = True
            break

    offset = state.shift
    theta_hat = state.theta - offset
    return FitResult(
        factors=state.tf,
        theta_hat=theta_hat,
        cutoffs_hat=np.array(state.spec.cutoffs) - offset,
        objective_trace=np.asarray(trace),
        converged=converged,
        iterations=iterations,
        final_objective=float(trace[-1]),
        family=family,
        sigma=float(sigma),
        offset=offset,
        alpha=float(opts.alpha),
    )
