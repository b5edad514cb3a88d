"""Split-free homotopy for the weighted l1 fusion penalty.

With distance-decreasing weights the order of the group means is preserved
along the whole path, so clusters are contiguous runs of the sorted groups
and only adjacent clusters can fuse. Each cluster then moves linearly,
``beta_C(lambda) = mean_C + slope_C * lambda``, and a fusion simply averages
the two slopes by size. Candidate fusion times for the ``K - 1`` adjacent
pairs live in an indexed heap; the whole path costs ``O(K log K)`` on top of
the initial slopes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, EmptyDataError, InvariantError
from .model import GroupStats
from .tree import FusionEvent, FusionTree  # noqa: F401  (FusionEvent re-exported)
from .weights import WeightScheme, direct_slopes, discounted_masses, initial_slopes

INF = math.inf
# Relative slack for the adjacent-gap sign check (pure round-off above this).
GAP_RTOL = 1e-9


class OrderNotGuaranteedWarning(UserWarning):
    """Cas-ANOVA path forced to be a tree although splits may be optimal."""


class EventQueue:
    """Indexed binary min-heap keyed by integer ids ``0..capacity-1``.

    Ties on the key are broken by the smaller id. Setting the key of an id
    already present moves it in place; nothing is left stale in the heap.
    """

    __slots__ = ("_heap", "_pos", "_key")

    def __init__(self, capacity: int):
        self._heap: list[int] = []
        self._pos = [-1] * capacity
        self._key = [INF] * capacity

    def __len__(self):
        return len(self._heap)

    def __contains__(self, item):
        return self._pos[item] >= 0

    def key(self, item) -> float:
        return self._key[item]

    def heapify(self, items, keys):
        if self._heap:
            raise ContractError("heapify needs an empty queue")
        self._heap = list(items)
        for i, item in enumerate(self._heap):
            self._pos[item] = i
            self._key[item] = keys[i]
        for i in reversed(range(len(self._heap) // 2)):
            self._sift_down(i)

    def set(self, item, key):
        pos = self._pos[item]
        if pos < 0:
            self._key[item] = key
            self._pos[item] = len(self._heap)
            self._heap.append(item)
            self._sift_up(len(self._heap) - 1)
            return
        old = self._key[item]
        self._key[item] = key
        if key < old:
            self._sift_up(pos)
        elif key > old:
            self._sift_down(pos)

    def peek(self):
        item = self._heap[0]
        return item, self._key[item]

    def pop(self):
        heap = self._heap
        if not heap:
            raise IndexError("pop from an empty event queue")
        top = heap[0]
        last = heap.pop()
        self._pos[top] = -1
        if heap:
            heap[0] = last
            self._pos[last] = 0
            self._sift_down(0)
        return top, self._key[top]

    def remove(self, item):
        pos = self._pos[item]
        if pos < 0:
            return
        heap = self._heap
        last = heap.pop()
        self._pos[item] = -1
        if pos < len(heap):
            heap[pos] = last
            self._pos[last] = pos
            self._sift_up(pos)
            self._sift_down(self._pos[last])

    def _sift_up(self, i):
        heap, pos, key = self._heap, self._pos, self._key
        item = heap[i]
        k = key[item]
        while i > 0:
            parent = (i - 1) >> 1
            other = heap[parent]
            ko = key[other]
            if ko < k or (ko == k and other < item):
                break
            heap[i] = other
            pos[other] = i
            i = parent
        heap[i] = item
        pos[item] = i

    def _sift_down(self, i):
        heap, pos, key = self._heap, self._pos, self._key
        size = len(heap)
        item = heap[i]
        k = key[item]
        while True:
            child = 2 * i + 1
            if child >= size:
                break
            c = heap[child]
            kc = key[c]
            right = child + 1
            if right < size:
                r = heap[right]
                kr = key[r]
                if kr < kc or (kr == kc and r < c):
                    child, c, kc = right, r, kr
            if k < kc or (k == kc and item < c):
                break
            heap[i] = c
            pos[c] = i
            i = child
        heap[i] = item
        pos[item] = i


@dataclass(frozen=True)
class ClusterState:
    """A live cluster: the sorted positions ``lo..hi`` fused together."""

    id: int
    lo: int
    hi: int
    size: int
    beta: float
    slope: float
    lambda_ref: float = 0.0
    left: int | None = None
    right: int | None = None

    def beta_at(self, lam: float) -> float:
        return self.beta + self.slope * (lam - self.lambda_ref)


def next_fusion_time(a: ClusterState, b: ClusterState, lambda0: float) -> float:
    """Smallest ``lambda >= lambda0`` at which ``a`` (above) meets ``b`` (below)."""
    if a.hi + 1 != b.lo:
        raise ContractError("next_fusion_time needs adjacent clusters, a above b")
    gap = a.beta_at(lambda0) - b.beta_at(lambda0)
    if gap == 0.0:
        return lambda0
    closing = b.slope - a.slope
    if closing <= 0.0 or gap < 0.0:
        return INF
    return lambda0 + gap / closing


def merge(a: ClusterState, b: ClusterState, lam: float, new_id: int | None = None) -> ClusterState:
    t = next_fusion_time(a, b, min(a.lambda_ref, b.lambda_ref, lam))
    if not math.isclose(t, lam, rel_tol=1e-9, abs_tol=1e-12):
        raise ContractError(f"clusters fuse at lambda={t}, not {lam}")
    size = a.size + b.size
    beta = (a.size * a.beta_at(lam) + b.size * b.beta_at(lam)) / size
    slope = (a.size * a.slope + b.size * b.slope) / size
    return ClusterState(a.id if new_id is None else new_id, a.lo, b.hi, size,
                        beta, slope, lam, a.left, b.right)


def _sorted_slopes(scheme: WeightScheme, sizes, means, n, starts) -> np.ndarray:
    """Initial slope of every (sorted) group, equal means allowed.

    ``starts`` marks the first group of each run of equal means.
    """
    if len(starts) == len(means):
        return initial_slopes(scheme, GroupStats.from_means(means, sizes), n)
    if scheme.variant == "casanova":
        return direct_slopes(scheme, sizes, means, n)
    # Default and adaptive weights factor as n_k * n_l * f(distance), so
    # groups sharing a mean share a slope: solve on the merged runs.
    run_sizes = np.add.reduceat(sizes, starts)
    run_slopes = initial_slopes(scheme, GroupStats.from_means(means[starts], run_sizes), n)
    return np.repeat(run_slopes, np.diff(np.append(starts, len(means))))


def fit_univariate(stats: GroupStats, scheme: WeightScheme | None = None,
                   n: int | None = None, check: bool = True) -> FusionTree:
    """Compute the full regularization path as a fusion tree.

    Groups with identical means are fused at ``lambda = 0`` first. Fusions
    tied on lambda are processed from the top of the sorted order down, one
    binary merge at a time. With ``check`` set, every new adjacent pair is
    verified to be correctly ordered; a violation raises
    :class:`InvariantError` (a warning for Cas-ANOVA weights, whose order is
    not guaranteed).
    """
    scheme = WeightScheme.default() if scheme is None else scheme
    K = stats.k
    if K == 0:
        raise EmptyDataError("cannot fit a path on zero groups")
    n = stats.n if n is None else int(n)
    if scheme.variant == "casanova" and K > 1 and np.any(stats.sizes != stats.sizes[0]):
        warnings.warn("Cas-ANOVA weights with unequal group sizes: the path is "
                      "forced to be a tree and may differ from the exact solution",
                      OrderNotGuaranteedWarning, stacklevel=2)

    order = np.lexsort((np.arange(K), -stats.means))
    sizes = stats.sizes[order]
    means = stats.means[order]
    new_run = np.ones(K, dtype=bool)
    new_run[1:] = means[1:] != means[:-1]
    starts = np.flatnonzero(new_run)
    slopes = _sorted_slopes(scheme, sizes, means, n, starts)
    grand_mean = math.fsum((sizes * means).tolist()) / int(sizes.sum())

    total = 2 * K - 1
    node_lam = [0.0] * total
    node_beta = [0.0] * total
    node_slope = [0.0] * total
    node_size = [0] * total
    left_child = [-1] * total
    right_child = [-1] * total
    grp = order.tolist()
    mean_list = means.tolist()
    slope_list = slopes.tolist()
    size_list = sizes.tolist()
    for pos in range(K):
        g = grp[pos]
        node_beta[g] = mean_list[pos]
        node_slope[g] = slope_list[pos]
        node_size[g] = size_list[pos]
    if K == 1:
        node_slope[grp[0]] = 0.0
        return FusionTree(stats.labels, stats.sizes, stats.means, node_lam, node_beta,
                          node_slope, node_size, left_child, right_child, scheme, n)

    # Live clusters are indexed by their first sorted position `lo`.
    cl_size = size_list[:]
    cl_sum = (sizes * means).tolist()
    cl_slope = slope_list[:]
    cl_node = grp[:]
    right_end = list(range(K))
    left_start = list(range(K))
    next_node = K
    remaining = K

    # Adaptive weights with gamma == 1: a merged slope can be obtained without
    # averaging the children's slopes (which cancels badly once weights get
    # tiny). A cluster [lo..hi] keeps down = sum n_k exp(-c (mean_lo - mean_k))
    # and up = sum n_k exp(-c (mean_k - mean_hi)); its slope is
    # (left[lo] * down - right[hi] * up) / size.
    exact = scheme.variant == "adaptive" and scheme.telescoping
    if exact:
        rate = scheme.alpha * math.sqrt(n)
        run_left, run_right = discounted_masses(np.add.reduceat(sizes, starts),
                                                means[starts], rate)
        run_len = np.diff(np.append(starts, K))
        left_mass = np.repeat(run_left, run_len).tolist()
        right_mass = np.repeat(run_right, run_len).tolist()
        cl_down = [float(x) for x in size_list]
        cl_up = cl_down[:]
        exp = math.exp

    def fuse(lo, j, lam, hi):
        # Merge cluster [lo..j] with [j+1..hi] at `lam`; returns the node id.
        nonlocal next_node, remaining
        lo_b = j + 1
        size = cl_size[lo] + cl_size[lo_b]
        s = cl_sum[lo] + cl_sum[lo_b]
        remaining -= 1
        if remaining == 1:
            slope, beta = 0.0, grand_mean
        elif lam == INF:
            # Weights underflowed to zero: the pair only meets in the limit.
            slope, beta = 0.0, s / size
        else:
            if exact:
                down = cl_down[lo] + exp(-rate * (mean_list[lo] - mean_list[lo_b])) * cl_down[lo_b]
                up = cl_up[lo_b] + exp(-rate * (mean_list[j] - mean_list[hi])) * cl_up[lo]
                cl_down[lo], cl_up[lo] = down, up
                slope = (left_mass[lo] * down - right_mass[hi] * up) / size
            else:
                slope = (cl_size[lo] * cl_slope[lo] + cl_size[lo_b] * cl_slope[lo_b]) / size
            beta = s / size + slope * lam
        node = next_node
        next_node += 1
        node_lam[node] = lam
        node_beta[node] = beta
        node_slope[node] = slope
        node_size[node] = size
        left_child[node] = cl_node[lo]
        right_child[node] = cl_node[lo_b]
        cl_size[lo] = size
        cl_sum[lo] = s
        cl_slope[lo] = slope
        cl_node[lo] = node
        right_end[lo] = hi
        left_start[hi] = lo
        return node

    # Equal means fuse at lambda = 0, left to right, and keep their exact mean.
    run_bounds = np.append(starts, K).tolist()
    for r in range(len(starts)):
        a, b = run_bounds[r], run_bounds[r + 1]
        for j in range(a, b - 1):
            node = fuse(a, j, 0.0, j + 1)
            node_beta[node] = mean_list[a] if remaining > 1 else grand_mean

    n_runs = len(starts)
    if n_runs > 1:
        lo_runs = starts
        run_means = np.asarray(cl_sum)[lo_runs] / np.asarray(cl_size)[lo_runs]
        run_slope = np.asarray(cl_slope)[lo_runs]
        closing = run_slope[1:] - run_slope[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = np.where(closing > 0, (run_means[:-1] - run_means[1:]) / closing, INF)
        boundaries = (starts[1:] - 1).tolist()
        queue = EventQueue(K - 1)
        queue.heapify(boundaries, t0.tolist())

        strict = scheme.order_guaranteed
        pop, set_key = queue.pop, queue.set
        last = 0.0
        while queue:
            j, lam = pop()
            if check and lam < last:
                raise InvariantError(f"event lambda decreased: {lam} < {last}")
            last = lam
            lo = left_start[j]
            hi = right_end[j + 1]
            fuse(lo, j, lam, hi)
            if remaining == 1:
                break
            m_c = cl_sum[lo] / cl_size[lo]
            s_c = cl_slope[lo]
            if lo > 0:
                up = left_start[lo - 1]
                m_u = cl_sum[up] / cl_size[up]
                s_u = cl_slope[up]
                set_key(lo - 1, _candidate(m_u, s_u, m_c, s_c, lam, check, strict))
            if hi < K - 1:
                down = hi + 1
                m_d = cl_sum[down] / cl_size[down]
                s_d = cl_slope[down]
                set_key(hi, _candidate(m_c, s_c, m_d, s_d, lam, check, strict))
        if remaining != 1:
            raise InvariantError("event queue exhausted before all groups fused")

    return FusionTree(stats.labels, stats.sizes, stats.means, node_lam, node_beta,
                      node_slope, node_size, left_child, right_child, scheme, n)


def _candidate(m_up, s_up, m_low, s_low, lam, check, strict):
    """Fusion time of two adjacent clusters given in intercept form."""
    if check:
        gap = (m_up - m_low) + (s_up - s_low) * lam
        scale = abs(m_up) + abs(m_low) + lam * (abs(s_up) + abs(s_low))
        if gap < -GAP_RTOL * scale:
            message = (f"order preservation violated at lambda={lam}: "
                       f"adjacent gap {gap:.3e}")
            if strict:
                raise InvariantError(message)
            warnings.warn(message, OrderNotGuaranteedWarning, stacklevel=3)
    closing = s_low - s_up
    if closing <= 0.0:
        return INF
    t = (m_up - m_low) / closing
    return t if t > lam else lam
