"""Dense tensor kernel: unfolding, mode products, Tucker composition, HOSVD.

Tensors are plain ``numpy.ndarray`` objects.  Whenever a tensor is flattened
(file I/O, vectorisation) the first index varies fastest, and the mode-k
unfolding orders its columns the same way: among the remaining modes the one
with the smallest number varies fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _check_mode(ndim: int, mode: int) -> None:
    if not 0 <= mode < ndim:
        raise ValueError(f"mode {mode} out of range for an order-{ndim} tensor")


def from_flat(values, dims: Sequence[int]) -> np.ndarray:
    """Build a tensor from a flat array stored first-index-fastest."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 1 or any(d < 1 for d in dims):
        raise ValueError(f"invalid dimensions {dims}")
    values = np.asarray(values)
    if values.size != int(np.prod(dims)):
        raise ValueError(f"{values.size} values do not fill dims {dims}")
    return np.reshape(values, dims, order="F")


def to_flat(t: np.ndarray) -> np.ndarray:
    """Flatten a tensor first-index-fastest (inverse of :func:`from_flat`)."""
    return np.ravel(t, order="F")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization, shape ``(d_mode, prod of other dims)``.

    Modes are 0-based.
    """
    _check_mode(t.ndim, mode)
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order="F")


def refold(m: np.ndarray, mode: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    dims = tuple(int(d) for d in dims)
    _check_mode(len(dims), mode)
    m = np.asarray(m)
    rest = int(np.prod(dims)) // dims[mode]
    if m.shape != (dims[mode], rest):
        raise ValueError(
            f"matrix of shape {m.shape} cannot be refolded along mode {mode} into {dims}"
        )
    moved = (dims[mode],) + dims[:mode] + dims[mode + 1:]
    return np.moveaxis(np.reshape(m, moved, order="F"), 0, mode)


def mode_multiply(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Tensor-times-matrix along ``mode``: replaces ``d_mode`` by ``m.shape[0]``."""
    _check_mode(t.ndim, mode)
    m = np.atleast_2d(m)
    if m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix with {m.shape[1]} columns cannot multiply mode {mode} of size {t.shape[mode]}"
        )
    # tensordot puts the new axis last; move it back into place
    return np.moveaxis(np.tensordot(t, m, axes=([mode], [1])), -1, mode)


def multi_mode_multiply(t: np.ndarray, matrices, skip: int | None = None,
                        transpose: bool = False) -> np.ndarray:
    """Multiply ``t`` by one matrix per mode, optionally skipping one mode."""
    out = t
    for k, m in enumerate(matrices):
        if k == skip:
            continue
        out = mode_multiply(out, m.T if transpose else m, k)
    return out


@dataclass
class TuckerFactors:
    """Tucker representation ``core x_1 M_1 ... x_K M_K``.

    ``factors[k]`` has shape ``(d_k, r_k)`` with orthonormal columns.
    """

    core: np.ndarray
    factors: list

    @property
    def rank(self) -> tuple:
        return tuple(self.core.shape)

    @property
    def dims(self) -> tuple:
        return tuple(m.shape[0] for m in self.factors)

    def copy(self) -> "TuckerFactors":
        return TuckerFactors(self.core.copy(), [m.copy() for m in self.factors])


def tucker_compose(tf: TuckerFactors) -> np.ndarray:
    if tf.core.ndim != len(tf.factors):
        raise ValueError(
            f"core of order {tf.core.ndim} needs {tf.core.ndim} factors, got {len(tf.factors)}"
        )
    for k, m in enumerate(tf.factors):
        if m.ndim != 2 or m.shape[1] != tf.core.shape[k]:
            raise ValueError(f"factor {k} of shape {m.shape} does not match core {tf.core.shape}")
    return multi_mode_multiply(tf.core, tf.factors)


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(t))))


def infinity_norm(t: np.ndarray) -> float:
    return float(np.max(np.abs(t))) if np.size(t) else 0.0


def check_rank(dims: Sequence[int], rank: Sequence[int]) -> tuple:
    """Validate a Tucker rank against tensor dimensions; returns it as a tuple."""
    rank = tuple(int(r) for r in rank)
    if len(rank) != len(dims):
        raise ValueError(f"rank {rank} has {len(rank)} modes, tensor has {len(dims)}")
    for k, (r, d) in enumerate(zip(rank, dims)):
        if not 1 <= r <= d:
            raise ValueError(f"rank {r} invalid for mode {k + 1} of dimension {d}")
    return rank


def leading_left_singular_vectors(a: np.ndarray, r: int) -> np.ndarray:
    """Top-``r`` left singular vectors of ``a``, signs fixed for reproducibility."""
    u, _, _ = np.linalg.svd(a, full_matrices=False)
    u = u[:, :r]
    # make the largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def hosvd(t: np.ndarray, ranks: Sequence[int]) -> TuckerFactors:
    """Truncated higher-order SVD."""
    ranks = check_rank(t.shape, ranks)
    factors = [leading_left_singular_vectors(unfold(t, k), r) for k, r in enumerate(ranks)]
    core = multi_mode_multiply(t, factors, transpose=True)
    return TuckerFactors(core, factors)


def orthonormalize(tf: TuckerFactors, mode: int) -> TuckerFactors:
    """QR-orthonormalize one factor, absorbing the triangular part into the core.

    The represented tensor is unchanged.
    """
    q, r = np.linalg.qr(tf.factors[mode])
    # positive diagonal keeps the factorization unique
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    q = q * s
    r = r * s[:, None]
    factors = list(tf.factors)
    factors[mode] = q
    return TuckerFactors(mode_multiply(tf.core, r, mode), factors)
