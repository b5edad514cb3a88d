import numpy as np

from fusetree.model import GroupStats
from fusetree.weights import WeightScheme


def scheme_cycle(rng, i):
    return [WeightScheme.default(),
            WeightScheme.adaptive(float(rng.uniform(0.2, 2.0))),
            WeightScheme.casanova()][i % 3]


def random_stats(rng, k, *, equal_sizes=False, ties=False, spread=2.0):
    sizes = np.full(k, int(rng.integers(1, 4))) if equal_sizes else rng.integers(1, 6, k)
    means = rng.normal(size=k) * spread
    means = np.round(means, 1 if ties else 6)
    return GroupStats.from_means(means, sizes)


def oracle_lambdas(tree):
    lams = tree.event_lambdas[np.isfinite(tree.event_lambdas)]
    mids = (lams[1:] + lams[:-1]) / 2
    return np.concatenate([lams, mids, [1.5 * tree.root_lambda + 1.0]])
