"""Several features at once: one tree per feature, consensus partitions, and
agreement between partitions (adjusted Rand index)."""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from typing import Iterator, Sequence

import numpy as np

from .errors import ContractError
from .model import Dataset, summarize
from .path import fit_univariate
from .tree import FusionTree, Partition, cut
from .weights import WeightScheme


def _fit_feature(job):
    data, j, scheme = job
    return fit_univariate(summarize(data, j), scheme)


def fit_multivariate(data: Dataset, scheme: WeightScheme | None = None,
                     workers: int = 1) -> list[FusionTree]:
    """One independent tree per feature, in feature order."""
    scheme = WeightScheme.default() if scheme is None else scheme
    jobs = [(data, j, scheme) for j in range(data.p)]
    if workers > 1 and data.p > 1:
        with ProcessPoolExecutor(max_workers=min(workers, data.p)) as pool:
            return list(pool.map(_fit_feature, jobs))
    return [_fit_feature(job) for job in jobs]


def meet(partitions: Sequence[Partition]) -> Partition:
    """Coarsest common refinement: groups together iff together everywhere."""
    if not partitions:
        raise ContractError("need at least one partition")
    k = len(partitions[0])
    if any(len(p) != k for p in partitions):
        raise ContractError("partitions cover different numbers of groups")
    keys = np.stack([p.labels for p in partitions], axis=1)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    return Partition(inverse.reshape(-1))


def consensus(trees: Sequence[FusionTree], lam: float | None = None,
              per_feature_lambdas: Sequence[float] | None = None) -> Partition:
    """Meet of the per-feature cuts, at a shared ``lam`` or at one lambda per
    feature."""
    if not trees:
        raise ContractError("need at least one tree")
    labels = trees[0].labels
    if any(t.labels != labels for t in trees[1:]):
        raise ContractError("trees do not share the same leaf set")
    if per_feature_lambdas is None:
        if lam is None:
            raise ContractError("give either lam or per_feature_lambdas")
        lams = [lam] * len(trees)
    else:
        lams = list(per_feature_lambdas)
        if len(lams) != len(trees):
            raise ContractError("need one lambda per tree")
    return meet([cut(t, float(x)) for t, x in zip(trees, lams)])


def _pairs(x) -> int:
    return x * (x - 1) // 2


def _ari_from_sums(sum_ij: int, sum_a: int, sum_b: int, n: int) -> float:
    total = _pairs(n)
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    best = (sum_a + sum_b) / 2
    if best == expected:
        return 1.0
    return (sum_ij - expected) / (best - expected)


def _as_labels(p) -> np.ndarray:
    return p.labels if isinstance(p, Partition) else np.asarray(p)


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected pair agreement; 1.0 when the partitions coincide.

    Degenerate comparisons (fewer than two items, or both partitions
    all-singletons or both one cluster) return 1.0.
    """
    la, lb = _as_labels(a), _as_labels(b)
    if la.shape != lb.shape or la.ndim != 1:
        raise ContractError("partitions must label the same items")
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    ia, ib = ia.reshape(-1), ib.reshape(-1)
    table = np.bincount(ia * (ib.max(initial=0) + 1) + ib)
    rows = np.bincount(ia)
    cols = np.bincount(ib)
    return _ari_from_sums(int(_pairs(table).sum()), int(_pairs(rows).sum()),
                          int(_pairs(cols).sum()), len(la))


def level_sweep(tree: FusionTree, reference) -> Iterator[tuple[int, float, int, int]]:
    """Walk every distinct cut of ``tree`` against a fixed reference.

    Yields ``(events_applied, lambda, pairs_together_in_both,
    pairs_together_in_tree)`` once per inter-event interval. ``lambda`` is
    the interval midpoint, or its start when the interval is unbounded or
    too narrow to hold a distinct midpoint.
    Contingency counts are updated incrementally: merging two clusters
    folds the smaller label counter into the larger.
    """
    ref = _as_labels(reference)
    K = tree.k
    if len(ref) != K:
        raise ContractError("reference must label every leaf of the tree")
    counts: list = [Counter({r: 1}) for r in ref.tolist()] + [None] * (K - 1)
    size = [1] * K + [0] * (K - 1)
    lams = tree.node_lambda[K:].tolist()
    left, right = tree.left.tolist(), tree.right.tolist()
    both = together = 0
    for m in range(K):
        start = lams[m - 1] if m else 0.0
        end = lams[m] if m < K - 1 else math.inf
        if m == K - 1 or start < end:
            if m > 0 or end > 0:
                mid = (start + end) / 2
                if not start <= mid < end:  # unbounded, or only ulps wide
                    mid = start
                yield m, mid, both, together
        if m == K - 1:
            break
        v = K + m
        a, b = left[v], right[v]
        ca, cb = counts[a], counts[b]
        if len(ca) < len(cb):
            ca, cb = cb, ca
        for label, c in cb.items():
            both += c * ca.get(label, 0)
            ca[label] += c
        together += size[a] * size[b]
        size[v] = size[a] + size[b]
        counts[v] = ca
        counts[a] = counts[b] = None


def best_ari_over_cuts(tree: FusionTree, reference) -> tuple[float, float, int]:
    """Best ARI over all cuts of the tree: ``(ari, lambda, n_clusters)``.

    Ties go to the smallest lambda.
    """
    ref = _as_labels(reference)
    sum_b = int(_pairs(np.unique(ref, return_counts=True)[1]).sum())
    best = None
    for m, lam, both, together in level_sweep(tree, ref):
        ari = _ari_from_sums(both, together, sum_b, tree.k)
        if best is None or ari > best[0]:
            best = (ari, lam, tree.k - m)
    return best


def recovered_by_tree(tree: FusionTree, truth) -> bool:
    """Whether some cut of the tree equals ``truth`` exactly."""
    ref = _as_labels(truth)
    sum_b = int(_pairs(np.unique(ref, return_counts=True)[1]).sum())
    # equal iff the tree refines the truth and the truth refines the tree
    return any(both == together == sum_b for _, _, both, together in level_sweep(tree, ref))


def recovered_by_consensus(trees: Sequence[FusionTree], truth: Partition) -> bool:
    """Whether the consensus at some shared lambda equals ``truth``.

    Consensus partitions only change at event lambdas, so it is enough to
    look at every event lambda and at the midpoints between them.
    """
    events = np.unique(np.concatenate([t.event_lambdas for t in trees] + [[0.0]]))
    events = events[np.isfinite(events)]
    mids = (events[1:] + events[:-1]) / 2
    candidates = np.unique(np.concatenate([events, mids, [2 * events[-1] + 1]]))
    return any(consensus(trees, float(lam)) == truth for lam in candidates)
