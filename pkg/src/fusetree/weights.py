"""Fusion weight families and the initial slopes of the solution path.

Three families are supported:

``default``
    ``w = n_k n_l`` (clusterpath weights adapted to groups).
``adaptive``
    ``w = n_k n_l exp(-alpha sqrt(n) |mean_k - mean_l|**gamma)``, the
    exponentially adaptive (fused-ANOVA) weights.
``casanova``
    ``w = sqrt(n_k + n_l) / |mean_k - mean_l|``. Splits are possible with
    these weights; the solver forces a tree anyway.

The slope of group ``k`` at ``lambda = 0`` is
``-(1/n_k) * sum_{l != k} w_kl * sign(mean_k - mean_l)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InfiniteWeightError
from .model import GroupStats

VARIANTS = ("default", "adaptive", "casanova")


@dataclass(frozen=True)
class WeightScheme:
    variant: str = "default"
    alpha: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown weight scheme {self.variant!r}")
        if self.variant == "adaptive" and not (self.alpha > 0 and self.gamma > 0):
            raise ContractError("adaptive weights need alpha > 0 and gamma > 0")

    @classmethod
    def default(cls):
        return cls("default")

    @classmethod
    def adaptive(cls, alpha=1.0, gamma=1.0):
        return cls("adaptive", float(alpha), float(gamma))

    @classmethod
    def casanova(cls):
        return cls("casanova")

    @property
    def order_guaranteed(self) -> bool:
        """Whether the family provably yields a split-free (tree) path."""
        return self.variant != "casanova"

    @property
    def telescoping(self) -> bool:
        """True when slopes are computable in linear time after sorting."""
        return self.variant == "default" or (self.variant == "adaptive"
                                             and self.gamma == 1.0)

    def to_dict(self) -> dict:
        return {"scheme": self.variant, "alpha": self.alpha, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d) -> "WeightScheme":
        return cls(d["scheme"], float(d.get("alpha", 1.0)), float(d.get("gamma", 1.0)))


def weight_block(scheme: WeightScheme, size_a, mean_a, size_b, mean_b, n):
    """Weights between every group of ``a`` (rows) and of ``b`` (columns).

    Pairs with equal means get an infinite Cas-ANOVA weight.
    """
    na = np.asarray(size_a, dtype=float)[:, None]
    nb = np.asarray(size_b, dtype=float)[None, :]
    dist = np.abs(np.asarray(mean_a, dtype=float)[:, None]
                  - np.asarray(mean_b, dtype=float)[None, :])
    if scheme.variant == "default":
        return na * nb
    if scheme.variant == "adaptive":
        return na * nb * np.exp(-scheme.alpha * math.sqrt(n) * dist ** scheme.gamma)
    with np.errstate(divide="ignore"):
        return np.sqrt(na + nb) / dist


def pairwise_weight(scheme: WeightScheme, stats: GroupStats, n: int, k: int, l: int) -> float:
    if k == l:
        raise ContractError("pairwise weight needs two distinct groups")
    nk, nl = float(stats.sizes[k]), float(stats.sizes[l])
    dist = abs(float(stats.means[k]) - float(stats.means[l]))
    if scheme.variant == "default":
        return nk * nl
    if scheme.variant == "adaptive":
        return nk * nl * math.exp(-scheme.alpha * math.sqrt(n) * dist ** scheme.gamma)
    if dist == 0.0:
        raise InfiniteWeightError(
            f"Cas-ANOVA weight between groups {k} and {l} is infinite (equal means)")
    return math.sqrt(nk + nl) / dist


def direct_slopes(scheme: WeightScheme, sizes, means, n, chunk: int = 512) -> np.ndarray:
    """Quadratic-time slope sum; tolerates ties (pairs with equal means
    contribute nothing, whatever their weight)."""
    sizes = np.asarray(sizes, dtype=float)
    means = np.asarray(means, dtype=float)
    out = np.empty(len(means))
    for start in range(0, len(means), chunk):
        stop = min(start + chunk, len(means))
        w = weight_block(scheme, sizes[start:stop], means[start:stop], sizes, means, n)
        sign = np.sign(means[start:stop, None] - means[None, :])
        w[sign == 0] = 0.0
        out[start:stop] = -(w * sign).sum(axis=1) / sizes[start:stop]
    return out


def discounted_masses(sizes, means, rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Gap-shifted prefix sums for adaptive weights with ``gamma == 1``.

    For groups sorted by decreasing mean, returns ``left[k] = sum_{l<k} n_l
    exp(-rate (mean_l - mean_k))`` and ``right[k] = sum_{l>k} n_l exp(-rate
    (mean_k - mean_l))``. Every exponent is <= 0, so nothing overflows.
    """
    k = len(means)
    decay = np.exp(-rate * (np.asarray(means[:-1]) - np.asarray(means[1:]))).tolist()
    size = np.asarray(sizes, dtype=float).tolist()
    left = [0.0] * k
    acc = 0.0
    for i in range(1, k):
        acc = (acc + size[i - 1]) * decay[i - 1]
        left[i] = acc
    right = [0.0] * k
    acc = 0.0
    for i in range(k - 2, -1, -1):
        acc = (acc + size[i + 1]) * decay[i]
        right[i] = acc
    return np.array(left), np.array(right)


def initial_slopes(scheme: WeightScheme, stats: GroupStats, n: int | None = None) -> np.ndarray:
    """Slopes at ``lambda = 0`` for groups sorted by strictly decreasing mean.

    Default weights and adaptive weights with ``gamma == 1`` use linear-time
    recurrences; everything else falls back to the quadratic direct sum.
    """
    n = stats.n if n is None else n
    means = stats.means
    if np.any(np.diff(means) >= 0):
        raise ContractError("initial_slopes needs groups sorted by strictly "
                            "decreasing mean (merge equal means first)")
    sizes = stats.sizes.astype(float)
    if scheme.variant == "default":
        above = np.concatenate(([0.0], np.cumsum(sizes)[:-1]))
        below = sizes.sum() - above - sizes
        return above - below
    if scheme.telescoping:
        left, right = discounted_masses(sizes, means, scheme.alpha * math.sqrt(n))
        return left - right
    return direct_slopes(scheme, sizes, means, n)
