import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import adjusted_rand_score

from fusetree.consensus import (adjusted_rand_index, best_ari_over_cuts, consensus,
                                fit_multivariate, meet, recovered_by_tree)
from fusetree.errors import ContractError
from fusetree.model import Dataset, GroupStats, summarize
from fusetree.path import fit_univariate
from fusetree.tree import Partition, cut
from fusetree.weights import WeightScheme

labels = st.lists(st.integers(0, 4), min_size=1, max_size=30)


@pytest.fixture
def three_point():
    return fit_univariate(GroupStats.from_means([3.0, 1.0, 0.0]), WeightScheme.default())


def test_ari_examples():
    p = Partition([0, 0, 1, 2])
    assert adjusted_rand_index(p, p) == 1.0
    assert adjusted_rand_index(Partition(np.arange(4)), Partition(np.zeros(4))) == 0.0
    with pytest.raises(ContractError):
        adjusted_rand_index([0, 1], [0, 1, 2])


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_ari_properties(data):
    a = data.draw(labels)
    b = data.draw(st.lists(st.integers(0, 4), min_size=len(a), max_size=len(a)))
    a, b = np.array(a), np.array(b)
    value = adjusted_rand_index(a, b)
    assert value == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
    assert value == adjusted_rand_index(b, a)
    relabel = np.random.default_rng(len(a)).permutation(10)
    assert adjusted_rand_index(relabel[a], b) == pytest.approx(value, abs=1e-15)


def test_meet_and_consensus(three_point):
    assert meet([Partition([0, 0, 1]), Partition([0, 1, 1])]) == Partition([0, 1, 2])
    assert consensus([three_point], 0.6) == cut(three_point, 0.6)
    assert consensus([three_point, three_point], 100.0).num_clusters == 1
    other = fit_univariate(GroupStats.from_means([0.0, 1.0, 3.0]), WeightScheme.default())
    assert consensus([three_point, other], 0.6).num_clusters == 3
    assert consensus([three_point, other], per_feature_lambdas=[0.6, 0.0]).num_clusters == 3
    renamed = fit_univariate(GroupStats.from_means([3.0, 1.0, 0.0], labels=("x", "y", "z")))
    with pytest.raises(ContractError):
        consensus([three_point, renamed], 0.1)
    with pytest.raises(ContractError):
        consensus([three_point], per_feature_lambdas=[0.1, 0.2])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**9), st.floats(0, 3))
def test_consensus_refines_every_cut(seed, lam):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 25))
    groups = np.repeat(np.arange(k), 3)
    data = Dataset(rng.normal(size=(3 * k, 3)), groups, tuple(map(str, range(k))))
    trees = fit_multivariate(data, WeightScheme.default())
    part = consensus(trees, lam)
    assert all(part.refines(cut(t, lam)) for t in trees)


def test_fit_multivariate():
    rng = np.random.default_rng(0)
    values = rng.normal(size=(40, 2))
    groups = np.arange(40) % 8
    data = Dataset(values, groups, tuple(map(str, range(8))))
    trees = fit_multivariate(data, WeightScheme.adaptive())
    assert trees[0] == fit_univariate(summarize(data, 0), WeightScheme.adaptive())
    assert not np.array_equal(trees[0].event_lambdas, trees[1].event_lambdas)
    dup = Dataset(np.column_stack([values[:, 0], values[:, 0]]), groups, data.group_labels)
    t = fit_multivariate(dup, WeightScheme.adaptive(), workers=2)
    assert t[0] == t[1]


def test_best_ari_examples(three_point):
    ari, lam, m = best_ari_over_cuts(three_point, Partition([0, 1, 2]))
    assert (ari, m) == (1.0, 3) and lam < 0.5
    ari, lam, m = best_ari_over_cuts(three_point, Partition([0, 0, 0]))
    assert (ari, m) == (1.0, 1) and lam >= three_point.root_lambda
    ari, lam, m = best_ari_over_cuts(three_point, Partition([0, 1, 1]))
    assert (ari, m) == (1.0, 2) and 0.5 <= lam < 5 / 6


def test_best_ari_matches_brute_force():
    rng = np.random.default_rng(9)
    for _ in range(100):
        k = int(rng.integers(2, 40))
        tree = fit_univariate(GroupStats.from_means(np.round(rng.normal(size=k), 1)))
        ref = rng.integers(0, 4, k)
        brute = max(adjusted_rand_index(cut(tree, lam), ref)
                    for lam in np.concatenate([[0.0], tree.event_lambdas]))
        ari, lam, m = best_ari_over_cuts(tree, ref)
        assert ari == pytest.approx(brute, abs=1e-12)
        assert adjusted_rand_index(cut(tree, lam), ref) == pytest.approx(ari, abs=1e-12)
        assert cut(tree, lam).num_clusters == m
        assert recovered_by_tree(tree, ref) == (brute == 1.0)
