"""Cross-validated choice of lambda.

The test error of a training tree,
``sum_{i in test} (y_i - beta_{group(i)}(lambda))**2``, is a quadratic in
lambda between two consecutive fusions of the training path. The embedded
sweep keeps the coefficients of that quadratic up to date as events are
applied, so a whole grid costs O(K + L) after the fit.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateGridError, MissingGroupError
from .model import Dataset, summarize, split_folds
from .path import fit_univariate
from .tree import FusionTree, beta_at
from .weights import WeightScheme

MODES = ("embedded", "naive")


@dataclass(frozen=True, eq=False)
class LambdaGrid:
    values: np.ndarray
    construction: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 2:
            raise ContractError("a lambda grid needs at least two points")
        if values[0] < 0 or np.any(np.diff(values) <= 0) or not np.all(np.isfinite(values)):
            raise ContractError("grid values must be finite, >= 0 and strictly increasing")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


def make_grid(tree: FusionTree, size: int, lambda_min: float | None = None,
              lambda_max: float | None = None) -> LambdaGrid:
    """Geometric grid from a tenth of the first positive fusion to 5% past
    the last finite one. Either end can be overridden."""
    if size < 2:
        raise ContractError("grid size must be >= 2")
    lams = tree.event_lambdas
    positive = lams[(lams > 0) & np.isfinite(lams)]
    if (lambda_min is None or lambda_max is None) and len(positive) == 0:
        raise DegenerateGridError("the path has no positive finite fusion lambda: "
                                  "all group means are equal, or every adaptive "
                                  "weight underflowed (try a smaller alpha)")
    lo = positive[0] / 10 if lambda_min is None else float(lambda_min)
    hi = 1.05 * positive[-1] if lambda_max is None else float(lambda_max)
    if not 0 < lo < hi < math.inf:
        raise ContractError(f"need 0 < lambda_min < lambda_max, got {lo}, {hi}")
    return LambdaGrid(np.geomspace(lo, hi, size),
                      {"spacing": "geometric", "min": lo, "max": hi, "size": size})


@dataclass(frozen=True)
class ClusterTestStats:
    count: int = 0
    mean: float = 0.0
    within_ss: float = 0.0

    @classmethod
    def of(cls, values) -> "ClusterTestStats":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(int(values.size), mean, float(((values - mean) ** 2).sum()))

    def merge(self, other: "ClusterTestStats") -> "ClusterTestStats":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        return ClusterTestStats(
            n, self.mean + delta * other.count / n,
            self.within_ss + other.within_ss + delta * delta * self.count * other.count / n)

    def error(self, prediction: float) -> float:
        """Squared test error when the whole cluster is predicted by one value."""
        return self.within_ss + self.count * (self.mean - prediction) ** 2


def _grid_values(grid) -> np.ndarray:
    return grid.values if isinstance(grid, LambdaGrid) else np.asarray(grid, dtype=float)


def _per_group(tree: FusionTree, groups, values):
    groups = np.asarray(groups, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if groups.shape != values.shape:
        raise ContractError("test groups and values must have the same length")
    if groups.size and (groups.min() < 0 or groups.max() >= tree.k):
        bad = groups[(groups < 0) | (groups >= tree.k)][0]
        raise MissingGroupError(f"test group {bad} is not a leaf of the training tree")
    count = np.bincount(groups, minlength=tree.k)
    with np.errstate(invalid="ignore"):
        mean = np.where(count > 0, np.bincount(groups, weights=values, minlength=tree.k)
                        / np.maximum(count, 1), 0.0)
    ss = np.bincount(groups, weights=(values - mean[groups]) ** 2, minlength=tree.k)
    return groups, values, count, mean, ss


_EPS = np.finfo(float).eps
_REL_TOL = 1e-12


def cv_error_curve_embedded(tree: FusionTree, test_groups, test_values, grid) -> np.ndarray:
    """Test error at every grid lambda in one event-ordered sweep.

    The running quadratic ``q2 d**2 + q1 d + q0`` is kept in ``d = lambda -
    center`` where ``center`` is the last applied event. Removing a steep
    cluster leaves rounding residue in ``q2`` that later gets multiplied by
    huge lambda gaps, so an error bound (the sum of absolute values of every
    term folded in) is tracked, and the quadratic is re-summed from the live
    clusters whenever that bound stops being negligible.
    """
    lams = _grid_values(grid)
    if np.any(np.diff(lams) < 0):
        raise ContractError("grid must be sorted")
    _, _, count, mean, ss = _per_group(tree, test_groups, test_values)
    K = tree.k
    total = 2 * K - 1
    cnt = count.tolist() + [0] * (K - 1)
    avg = mean.tolist() + [0.0] * (K - 1)
    scat = ss.tolist() + [0.0] * (K - 1)
    node_lam = tree.node_lambda.tolist()
    node_beta = tree.node_beta.tolist()
    node_slope = tree.node_slope.tolist()
    left, right = tree.left.tolist(), tree.right.tolist()
    live = {g for g in range(K) if cnt[g]}

    def resum(at):
        r2 = r1 = r0 = 0.0
        for u in live:
            c, b = cnt[u], node_slope[u]
            d = avg[u] - (node_beta[u] + b * (at - node_lam[u]))
            r2 += c * b * b
            r1 -= 2 * c * d * b
            r0 += scat[u] + c * d * d
        return r2, r1, r0, r2, abs(r1), r0

    center = 0.0
    q2, q1, q0, a2, a1, a0 = resum(center)

    def negligible(delta, value):
        bound = 4 * _EPS * (a2 * delta * delta + a1 * abs(delta) + a0)
        return bound <= _REL_TOL * abs(value)

    v = K
    out = np.empty(len(lams))
    for i, lam in enumerate(lams.tolist()):
        while v < total and node_lam[v] <= lam:
            at = node_lam[v]
            shift = at - center
            if shift:
                value = q0 + (q1 + q2 * shift) * shift
                if negligible(shift, value):
                    q0 = value
                    q1 += 2 * q2 * shift
                    a0 += a2 * shift * shift + a1 * abs(shift)
                    a1 += 2 * a2 * abs(shift)
                else:
                    q2, q1, q0, a2, a1, a0 = resum(at)
                center = at
            c_new, m_new, ss_new = 0, 0.0, 0.0
            for child in (left[v], right[v]):
                c = cnt[child]
                if not c:
                    continue
                live.discard(child)
                b = node_slope[child]
                d = avg[child] - (node_beta[child] + b * (at - node_lam[child]))
                t2, t1, t0 = c * b * b, 2 * c * d * b, scat[child] + c * d * d
                q2 -= t2
                q1 += t1
                q0 -= t0
                a2 += t2
                a1 += abs(t1)
                a0 += t0
                if c_new:
                    merged = c_new + c
                    delta = avg[child] - m_new
                    ss_new += scat[child] + delta * delta * c_new * c / merged
                    m_new += delta * c / merged
                    c_new = merged
                else:
                    c_new, m_new, ss_new = c, avg[child], scat[child]
            if c_new:
                b = node_slope[v]
                d = m_new - node_beta[v]
                t2, t1, t0 = c_new * b * b, 2 * c_new * d * b, ss_new + c_new * d * d
                q2 += t2
                q1 -= t1
                q0 += t0
                a2 += t2
                a1 += abs(t1)
                a0 += t0
                cnt[v], avg[v], scat[v] = c_new, m_new, ss_new
                live.add(v)
            v += 1
        delta = lam - center
        value = q0 + (q1 + q2 * delta) * delta
        if not negligible(delta, value):
            q2, q1, q0, a2, a1, a0 = resum(center)
            value = q0 + (q1 + q2 * delta) * delta
        out[i] = max(value, 0.0)
    return out


def cv_error_curve_naive(tree: FusionTree, test_groups, test_values, grid) -> np.ndarray:
    """Reference: look every test group up in the tree at every lambda."""
    lams = _grid_values(grid)
    groups, values, count, _, _ = _per_group(tree, test_groups, test_values)
    present = np.flatnonzero(count)
    slot = np.zeros(tree.k, dtype=np.int64)
    slot[present] = np.arange(len(present))
    out = np.empty(len(lams))
    for i, lam in enumerate(lams.tolist()):
        pred = np.array([beta_at(tree, int(g), lam) for g in present])
        resid = values - pred[slot[groups]] if len(present) else values
        out[i] = float(np.dot(resid, resid))
    return out


_CURVES = {"embedded": cv_error_curve_embedded, "naive": cv_error_curve_naive}


@dataclass(frozen=True, eq=False)
class CvReport:
    grid: LambdaGrid
    mean_error: np.ndarray
    std_error: np.ndarray
    best_lambda: float
    best_index: int
    folds: int
    n_clusters: np.ndarray
    fold_errors: np.ndarray
    mode: str = "embedded"


def _fold_curve(job):
    data, feature, scheme, train, test, grid, mode = job
    tree = fit_univariate(summarize(data.subset(train), feature), scheme)
    return _CURVES[mode](tree, data.group_of[test], data.values[test, feature], grid)


def cross_validate(data: Dataset, feature: int = 0, scheme: WeightScheme | None = None,
                   folds: int = 5, grid_size: int = 50, seed: int = 42,
                   mode: str = "embedded", workers: int = 1,
                   lambda_min: float | None = None,
                   lambda_max: float | None = None) -> CvReport:
    """K-fold CV over a grid built once from the full-data tree.

    The error of a fold is the summed squared error over its test
    observations; the report averages it over folds.
    """
    if mode not in MODES:
        raise ContractError(f"mode must be one of {MODES}")
    if folds < 2:
        raise ContractError("folds must be >= 2")
    scheme = WeightScheme.default() if scheme is None else scheme
    full = fit_univariate(summarize(data, feature), scheme)
    grid = make_grid(full, grid_size, lambda_min, lambda_max)
    jobs = [(data, feature, scheme, s.train, s.test, grid, mode)
            for s in split_folds(data, folds, seed)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            curves = list(pool.map(_fold_curve, jobs))
    else:
        curves = [_fold_curve(job) for job in jobs]
    errors = np.vstack(curves)
    mean = errors.mean(axis=0)
    std = errors.std(axis=0, ddof=1) / math.sqrt(folds)
    best = int(np.argmin(mean))
    n_clusters = np.array([full.k - full.applied(lam) for lam in grid.values])
    return CvReport(grid, mean, std, float(grid.values[best]), best, folds,
                    n_clusters, errors, mode)
