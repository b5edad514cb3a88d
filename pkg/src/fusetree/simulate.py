"""Synthetic data with a known group structure, support-recovery studies and
timing runs.

All randomness goes through ``numpy.random.Generator`` on the PCG64 bit
generator; replicate streams are spawned from one ``SeedSequence`` so results
do not depend on the number of workers.
"""

from __future__ import annotations

import math
import statistics
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .consensus import fit_multivariate, recovered_by_consensus, recovered_by_tree
from .errors import ContractError
from .model import Dataset, GroupStats, summarize
from .path import OrderNotGuaranteedWarning, fit_univariate
from .tree import Partition
from .weights import WeightScheme

KINDS = ("univariate-fixed-k", "univariate-log-k", "bivariate1", "bivariate2")

CLASS_MEANS = {
    "bivariate1": np.array([[1.0, 1.5], [2.0, 1.5], [3.0, 1.5]]),
    "bivariate2": np.array([[1.0, 1.0], [1.0, 2.0], [2.0, 1.0]]),
}


@dataclass(frozen=True)
class SimScenario:
    """``k`` is the number of prior groups, except for ``univariate-log-k``
    where it is ``round(c * log(n))``."""

    kind: str
    n: int
    k: int = 10
    c: float = 2.5
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown scenario {self.kind!r}; expected one of {KINDS}")
        if self.sigma < 0:
            raise ContractError("sigma must be >= 0")
        if not 1 <= self.groups <= self.n:
            raise ContractError(f"need n >= K >= 1, got n={self.n}, K={self.groups}")

    @property
    def groups(self) -> int:
        if self.kind == "univariate-log-k":
            return max(1, round(self.c * math.log(self.n)))
        return self.k

    @property
    def bivariate(self) -> bool:
        return self.kind.startswith("bivariate")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    partition: Partition
    means: np.ndarray  # (K, p)


def _classes(rng, k: int, n_classes: int = 3) -> np.ndarray:
    # redraw until every class is used, so the truth always has min(k, 3) clusters
    need = min(k, n_classes)
    while True:
        cls = rng.integers(0, n_classes, size=k)
        if len(np.unique(cls)) == need:
            return cls


def _sizes(rng, n: int, k: int) -> np.ndarray:
    while True:
        sizes = rng.multinomial(n, np.full(k, 1.0 / k))
        if np.all(sizes > 0):
            return sizes


def generate(scenario: SimScenario, rng: np.random.Generator | None = None):
    """Draw one dataset and its true structure."""
    rng = np.random.default_rng(scenario.seed) if rng is None else rng
    k = scenario.groups
    cls = _classes(rng, k)
    if scenario.bivariate:
        means = CLASS_MEANS[scenario.kind][cls]
    else:
        means = (cls + 1.0)[:, None]
    sizes = _sizes(rng, scenario.n, k)
    group_of = np.repeat(np.arange(k), sizes)
    noise = rng.standard_normal((scenario.n, means.shape[1]))
    values = means[group_of] + scenario.sigma * noise
    labels = tuple(f"g{j + 1}" for j in range(k))
    names = ("y1", "y2") if scenario.bivariate else ("y",)
    return Dataset(values, group_of, labels, names), GroundTruth(Partition(cls), means)


def _replicate(job) -> bool:
    scheme, scenario, seed_seq = job
    data, truth = generate(scenario, np.random.default_rng(seed_seq))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OrderNotGuaranteedWarning)
        if scenario.bivariate:
            return recovered_by_consensus(fit_multivariate(data, scheme), truth.partition)
        return recovered_by_tree(fit_univariate(summarize(data, 0), scheme),
                                 truth.partition)


def recovery_probability(scheme: WeightScheme, scenario: SimScenario, replicates: int,
                         seed: int | None = None, workers: int = 1) -> float:
    """Fraction of replicates whose path contains the true partition.

    ``seed`` defaults to ``scenario.seed``.
    """
    if replicates < 1:
        raise ContractError("replicates must be >= 1")
    root = np.random.SeedSequence(scenario.seed if seed is None else seed)
    jobs = [(scheme, scenario, s) for s in root.spawn(replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            hits = list(pool.map(_replicate, jobs, chunksize=max(1, replicates // (4 * workers))))
    else:
        hits = [_replicate(job) for job in jobs]
    return sum(hits) / replicates


def recovery_curve(scheme: WeightScheme, scenario: SimScenario, sizes, replicates: int,
                   seed: int, workers: int = 1) -> list[tuple[int, float]]:
    """Recovery probability for each sample size in ``sizes``."""
    return [(n, recovery_probability(scheme, replace(scenario, n=n), replicates, seed, workers))
            for n in sizes]


def run_benchmark(sizes, scheme: WeightScheme | None = None, replicates: int = 3,
                  seed: int = 42) -> list[tuple[int, float]]:
    """Median fit time per K on standard normal data, one observation per
    group."""
    scheme = WeightScheme.adaptive() if scheme is None else scheme
    rng = np.random.default_rng(seed)
    table = []
    for k in sizes:
        times = []
        for _ in range(replicates):
            stats = GroupStats.from_means(rng.standard_normal(int(k)))
            start = time.perf_counter()
            fit_univariate(stats, scheme, check=False)
            times.append(time.perf_counter() - start)
        table.append((int(k), statistics.median(times)))
    return table
