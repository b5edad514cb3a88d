import warnings

import numpy as np
import pytest

from fusetree.errors import ContractError
from fusetree.model import GroupStats
from fusetree.oracle import ExactSolver, objective, slopes_direct, solve_exact, weight_matrix
from fusetree.path import OrderNotGuaranteedWarning, fit_univariate
from fusetree.weights import WeightScheme

from helpers import oracle_lambdas, random_stats, scheme_cycle


def test_two_point():
    beta, value = solve_exact(GroupStats.from_means([1.0, 0.0]), WeightScheme.default(), None, 0.25)
    assert beta == pytest.approx([0.75, 0.25], abs=1e-15)
    assert value == pytest.approx(0.375)


def test_lambda_zero_and_huge():
    stats = GroupStats.from_means([0.4, -1.0, 2.0], [2, 1, 3])
    beta, value = solve_exact(stats, WeightScheme.default(), None, 0.0)
    assert np.array_equal(beta, stats.means) and value == 0.0
    beta, _ = solve_exact(stats, WeightScheme.default(), None, 1e6)
    grand = np.sum(stats.sizes * stats.means) / stats.n
    assert beta == pytest.approx(np.full(3, grand))


def test_cost_guard():
    with pytest.raises(ContractError):
        ExactSolver(GroupStats.from_means(np.arange(16.0)), WeightScheme.default())


def test_objective_conventions():
    stats = GroupStats.from_means([1.0, 0.0, 3.0], [1, 2, 1])
    scheme = WeightScheme.default()
    w = weight_matrix(scheme, stats)
    iu = np.triu_indices(3, 1)
    both_ways = 2 * np.sum(w[iu] * np.abs(stats.means[iu[0]] - stats.means[iu[1]]))
    assert objective(stats, scheme, None, 0.7, stats.means) == pytest.approx(0.7 * both_ways)
    beta = np.array([0.5, 0.5, 2.0])
    assert objective(stats, scheme, None, 0.0, beta) == pytest.approx(
        np.sum(stats.sizes * (stats.means - beta) ** 2))


def test_slopes_direct_small_cases():
    assert slopes_direct(WeightScheme.default(), GroupStats.from_means([3.0])).tolist() == [0.0]
    pair = GroupStats.from_means([1.0, 0.0], [2, 3])
    assert slopes_direct(WeightScheme.default(), pair).tolist() == [-3.0, 2.0]


def test_optimality_spot_check():
    rng = np.random.default_rng(11)
    for i in range(20):
        stats = random_stats(rng, int(rng.integers(2, 8)), equal_sizes=(i % 3 == 2))
        scheme = scheme_cycle(rng, i)
        lam = float(rng.uniform(0, 2))
        beta, value = solve_exact(stats, scheme, None, lam)
        assert objective(stats, scheme, None, lam, beta) == value
        for _ in range(100):
            other = beta + rng.normal(scale=0.05, size=len(beta))
            assert objective(stats, scheme, None, lam, other) >= value - 1e-12


def test_path_matches_oracle_with_ties():
    rng = np.random.default_rng(3)
    for i in range(60):
        scheme = scheme_cycle(rng, i)
        stats = random_stats(rng, int(rng.integers(2, 9)), equal_sizes=(i % 3 == 2), ties=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OrderNotGuaranteedWarning)
            tree = fit_univariate(stats, scheme)
        solver = ExactSolver(stats, scheme)
        for lam in oracle_lambdas(tree):
            assert np.max(np.abs(tree.betas(lam) - solver.solve(lam)[0])) <= 1e-8
