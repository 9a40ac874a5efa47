"""BIC rank selection."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .estimator import FitOptions, FitResult, fit
from .likelihood import OrdinalTensor, log_likelihood
from .tensor import check_rank


def effective_params(dims: Sequence[int], rank: Sequence[int]) -> int:
    """Free parameters of a Tucker model: ``sum_k (d_k - r_k) r_k + prod_k r_k``."""
    return int(sum((d - r) * r for d, r in zip(dims, rank)) + np.prod(rank))


def bic_value(loglik: float, dims: Sequence[int], rank: Sequence[int]) -> float:
    return -2.0 * loglik + effective_params(dims, rank) * float(np.sum(np.log(dims)))


def bic_score(y: OrdinalTensor, result: FitResult, rank: Optional[Sequence[int]] = None) -> float:
    rank = tuple(rank) if rank is not None else result.rank
    loglik = log_likelihood(y, result.theta_hat, result.spec)
    return bic_value(loglik, y.dims, rank)


def select_rank_bic(y: OrdinalTensor, rank_grid, family: str = "probit", sigma: float = 1.0,
                    opts: Optional[FitOptions] = None):
    """Fit every rank in ``rank_grid`` and return ``(best_rank, table)``.

    ``table`` is a list of dicts with keys ``rank``, ``objective``, ``p_e``
    and ``bic``, sorted so the winner comes first: by BIC, then by parameter
    count, then lexicographically by rank.
    """
    rank_grid = [check_rank(y.dims, r) for r in rank_grid]
    if not rank_grid:
        raise ValueError("rank grid is empty")
    table = []
    for rank in rank_grid:
        res = fit(y, rank, family, sigma, opts)
        table.append({
            "rank": rank,
            "objective": res.final_objective,
            "p_e": effective_params(y.dims, rank),
            "bic": bic_score(y, res, rank),
        })
    table = sort_bic_table(table)
    return table[0]["rank"], table


def sort_bic_table(table):
    return sorted(table, key=lambda row: (row["bic"], row["p_e"], tuple(row["rank"])))
