"""Slow reference solvers for testing.

The univariate objective is

    sum_k n_k (ybar_k - beta_k)**2 + lam * sum_{k != l} w_kl |beta_k - beta_l|

with every unordered pair counted twice. Its stationarity conditions give
exactly the slopes and fusion times used by :mod:`fusetree.path`, so the two
modules share a lambda scale.

Nothing here imports the weight code of the solver: the weight formulas are
written out again on purpose.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractError
from .model import GroupStats
from .weights import WeightScheme

MAX_GROUPS = 15


def weight_matrix(scheme: WeightScheme, stats: GroupStats, n: int | None = None) -> np.ndarray:
    """Dense K x K weights, zero on the diagonal.

    Cas-ANOVA pairs with equal means get ``inf``.
    """
    n = stats.n if n is None else n
    nk = stats.sizes.astype(float)
    dist = np.abs(stats.means[:, None] - stats.means[None, :])
    if scheme.variant == "default":
        w = np.outer(nk, nk)
    elif scheme.variant == "adaptive":
        w = np.outer(nk, nk) * np.exp(-scheme.alpha * np.sqrt(n) * dist ** scheme.gamma)
    else:
        with np.errstate(divide="ignore"):
            w = np.sqrt(nk[:, None] + nk[None, :]) / dist
    np.fill_diagonal(w, 0.0)
    return w


def slopes_direct(scheme: WeightScheme, stats: GroupStats, n: int | None = None) -> np.ndarray:
    """Literal double sum for the initial slopes, in the order of ``stats``.

    Pairs with equal means contribute nothing.
    """
    w = weight_matrix(scheme, stats, n)
    sign = np.sign(stats.means[:, None] - stats.means[None, :])
    terms = np.where(sign == 0, 0.0, w * sign)
    return -terms.sum(axis=1) / stats.sizes


def _penalty(w: np.ndarray, beta: np.ndarray) -> np.ndarray:
    # beta may be (K,) or (M, K); 0 * inf counts as 0
    diff = np.abs(beta[..., :, None] - beta[..., None, :])
    with np.errstate(invalid="ignore"):
        terms = w * diff
    terms[diff == 0] = 0.0
    return terms.sum(axis=(-2, -1))


def objective(stats: GroupStats, scheme: WeightScheme, n: int | None, lam: float,
              beta) -> float:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != stats.means.shape:
        raise ContractError("beta must have one entry per group")
    loss = float(np.sum(stats.sizes * (stats.means - beta) ** 2))
    if lam == 0:
        return loss
    return loss + lam * float(_penalty(weight_matrix(scheme, stats, n), beta))


class ExactSolver:
    """Enumerates every ordered partition of the sorted groups once, so that
    many lambdas can be solved for the same instance cheaply.

    Groups sharing a mean always share a coefficient at the optimum, so they
    are glued into blocks first; the enumeration runs over the
    ``2**(B-1)`` ways of cutting the ``B`` sorted blocks.
    """

    def __init__(self, stats: GroupStats, scheme: WeightScheme, n: int | None = None):
        K = stats.k
        if K > MAX_GROUPS:
            raise ContractError(f"exact enumeration refuses K={K} > {MAX_GROUPS}")
        if K == 0:
            raise ContractError("no groups")
        self.stats, self.scheme = stats, scheme
        self.n = stats.n if n is None else int(n)
        self.w = weight_matrix(scheme, stats, self.n)

        order = np.lexsort((np.arange(K), -stats.means))
        means = stats.means[order]
        block_of_sorted = np.concatenate(([0], np.cumsum(means[1:] != means[:-1])))
        B = int(block_of_sorted[-1]) + 1
        block = np.empty(K, dtype=np.int64)
        block[order] = block_of_sorted

        sizes = stats.sizes.astype(float)
        bsize = np.bincount(block, weights=sizes, minlength=B)
        bsum = np.bincount(block, weights=sizes * stats.means, minlength=B)
        finite_w = np.where(block[:, None] == block[None, :], 0.0, self.w)
        onehot = np.zeros((K, B))
        onehot[np.arange(K), block] = 1.0
        bw = onehot.T @ finite_w @ onehot

        masks = 1 << max(B - 1, 0)
        self.intercepts = np.empty((masks, K))
        self.drifts = np.empty((masks, K))
        for mask in range(masks):
            cluster = [0] * B
            for b in range(1, B):
                cluster[b] = cluster[b - 1] + ((mask >> (b - 1)) & 1)
            value = np.empty(B)
            drift = np.empty(B)
            start = 0
            for b in range(1, B + 1):
                if b == B or cluster[b] != cluster[b - 1]:
                    size = bsize[start:b].sum()
                    above = bw[start:b, :start].sum()
                    below = bw[start:b, b:].sum()
                    value[start:b] = bsum[start:b].sum() / size
                    drift[start:b] = (above - below) / size
                    start = b
            self.intercepts[mask] = value[block]
            self.drifts[mask] = drift[block]

    def solve(self, lam: float) -> tuple[np.ndarray, float]:
        if lam < 0:
            raise ContractError("lambda must be >= 0")
        cand = self.intercepts + lam * self.drifts
        loss = (self.stats.sizes * (self.stats.means - cand) ** 2).sum(axis=1)
        total = loss + lam * _penalty(self.w, cand) if lam > 0 else loss
        best = int(np.argmin(total))
        beta = cand[best].copy()
        return beta, objective(self.stats, self.scheme, self.n, lam, beta)


def solve_exact(stats: GroupStats, scheme: WeightScheme, n: int | None, lam: float):
    """Exact minimizer and minimum for ``K <= 15`` groups (any order)."""
    if not math.isfinite(lam):
        raise ContractError("lambda must be finite")
    return ExactSolver(stats, scheme, n).solve(lam)
