"""Acceptance suite. Each test records one PASS/FAIL line, printed in the
terminal summary under "acceptance criteria"."""

import os
import statistics
import time
import warnings

import numpy as np

from fusetree import (GroupStats, Partition, WeightScheme, adjusted_rand_index, beta_at,
                      cross_validate, cut, cv_error_curve_embedded, cv_error_curve_naive,
                      fit_univariate, from_json, make_grid, parse_newick, summarize, to_json,
                      to_newick)
from fusetree.cli import main
from fusetree.model import Dataset, split_folds
from fusetree.oracle import ExactSolver, slopes_direct
from fusetree.path import OrderNotGuaranteedWarning
from fusetree.simulate import SimScenario, recovery_probability
from fusetree.weights import initial_slopes

from helpers import oracle_lambdas, random_stats, scheme_cycle

WORKERS = max(1, min(4, os.cpu_count() or 1))


def test_criterion_1_two_point(criterion):
    start = time.perf_counter()
    tree = fit_univariate(GroupStats.from_means([1.0, 0.0]), WeightScheme.default())
    ev = tree.events
    betas = [beta_at(tree, 0, 0.25), beta_at(tree, 1, 0.25)]
    criterion(1, {
        "one event": len(ev) == 1,
        "event at 0.5": len(ev) == 1 and ev[0].lam == 0.5,
        "fused beta 0.5": len(ev) == 1 and ev[0].beta == 0.5,
        "beta(0.25) = (0.75, 0.25)": np.max(np.abs(np.subtract(betas, [0.75, 0.25]))) <= 1e-12,
    }, time.perf_counter() - start, 1)


def test_criterion_2_oracle(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, failures = 0.0, 0
    for i in range(200):
        scheme = scheme_cycle(rng, i)
        stats = random_stats(rng, int(rng.integers(2, 11)), ties=(i % 5 == 4))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OrderNotGuaranteedWarning)
            tree = fit_univariate(stats, scheme)
        solver = ExactSolver(stats, scheme)
        err = max(np.max(np.abs(tree.betas(lam) - solver.solve(lam)[0]))
                  for lam in oracle_lambdas(tree))
        worst = max(worst, err)
        failures += err > 1e-8
    criterion(2, {f"200 instances within 1e-8 (worst {worst:.1e})": failures == 0},
              time.perf_counter() - start, 120)


def _invariants(tree, stats, ordered):
    K = tree.k
    lams = tree.event_lambdas
    ok = {"K-1 events": len(lams) == K - 1,
          "nondecreasing": bool(np.all(np.diff(lams) >= 0))}
    scale = max(abs(tree.grand_mean), float(np.max(np.abs(stats.means))))
    order = tree.order
    conserve = ordered_ok = True
    for lam in lams[np.isfinite(lams)].tolist():
        betas = tree.betas(lam)
        mean = float(np.dot(stats.sizes, betas)) / stats.n
        conserve &= abs(mean - tree.grand_mean) <= 1e-9 * scale
        if ordered:
            # groups sorted by decreasing mean must keep nonincreasing betas
            ordered_ok &= bool(np.all(np.diff(betas[order]) <= 0))
    ok["grand mean conserved"] = conserve
    if ordered:
        ok["order preserved"] = ordered_ok
    ok["terminal beta"] = abs(tree.node_beta[tree.root] - tree.grand_mean) <= 1e-12
    return ok


def test_criterion_3_invariants(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    checks = {}
    for k in (1000, 10000):
        for scheme in (WeightScheme.default(), WeightScheme.adaptive(1.0)):
            stats = GroupStats.from_means(rng.normal(size=k) * 2, rng.integers(1, 6, k))
            tree = fit_univariate(stats, scheme)
            for name, ok in _invariants(tree, stats, ordered=True).items():
                checks[f"K={k} {scheme.variant} {name}"] = ok
    failed = {name: ok for name, ok in checks.items() if not ok}
    criterion(3, failed or {f"{len(checks)} invariant checks": True},
              time.perf_counter() - start, 60)


def test_criterion_4_fast_slopes(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(100):
        alpha = float(rng.uniform(0.05, 3.0))
        means = np.sort(rng.normal(size=1000) * rng.uniform(0.1, 5))[::-1]
        means = means[np.concatenate(([True], np.diff(means) < 0))]
        sizes = rng.integers(1, 9, len(means))
        if i == 0:
            # adversarial: alpha * sqrt(n) * range(ybar) = 700
            means = np.linspace(1.0, 0.0, 1000)
            sizes = np.full(1000, 4)
            alpha = 700 / np.sqrt(sizes.sum())
        stats = GroupStats.from_means(means, sizes)
        scheme = WeightScheme.adaptive(alpha)
        fast = initial_slopes(scheme, stats)
        slow = slopes_direct(scheme, stats)
        worst = max(worst, float(np.max(np.abs(fast - slow)) / np.abs(slow).max()))
    criterion(4, {f"100 instances within 1e-10 relative (worst {worst:.1e})": worst <= 1e-10},
              time.perf_counter() - start, 60,
              "relative to the largest slope magnitude of each instance")


def test_criterion_5_scaling(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    scheme = WeightScheme.adaptive(1.0)
    big = GroupStats.from_means(rng.standard_normal(10**6))
    t0 = time.perf_counter()
    fit_univariate(big, scheme, check=False)
    t_big = time.perf_counter() - t0
    ratios = []
    for _ in range(3):
        times = []
        for k in (10**5, 2 * 10**5):
            stats = GroupStats.from_means(rng.standard_normal(k))
            t0 = time.perf_counter()
            fit_univariate(stats, scheme, check=False)
            times.append(time.perf_counter() - t0)
        ratios.append(times[1] / times[0])
    ratio = statistics.median(ratios)
    criterion(5, {f"K=1e6 fit {t_big:.1f}s <= 60s": t_big <= 60,
                  f"median time ratio 2e5/1e5 = {ratio:.2f} <= 3": ratio <= 3},
              time.perf_counter() - start, 300)


def _cv_instance(rng, k, per_group):
    group_of = np.repeat(np.arange(k), per_group)
    centers = rng.integers(0, 4, k) * rng.uniform(0.2, 1.5)
    values = centers[group_of] + rng.normal(size=len(group_of))
    return Dataset(values[:, None], group_of, tuple(f"g{j}" for j in range(k)), ("y",))


def test_criterion_6_cv(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(50):
        data = _cv_instance(rng, int(rng.integers(3, 60)), int(rng.integers(3, 12)))
        scheme = scheme_cycle(rng, i)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OrderNotGuaranteedWarning)
            grid = make_grid(fit_univariate(summarize(data), scheme), 40)
            for split in split_folds(data, 5, seed=i):
                tree = fit_univariate(summarize(data.subset(split.train)), scheme)
                g, y = data.group_of[split.test], data.values[split.test, 0]
                fast = cv_error_curve_embedded(tree, g, y, grid)
                slow = cv_error_curve_naive(tree, g, y, grid)
                worst = max(worst, float(np.max(np.abs(fast - slow) / np.maximum(slow, 1e-300))))

    data = _cv_instance(np.random.default_rng(60), 1000, 20)
    timings = {}
    for mode in ("embedded", "naive"):
        t0 = time.perf_counter()
        report = cross_validate(data, grid_size=100, mode=mode)
        timings[mode] = time.perf_counter() - t0
        timings[mode + "_best"] = report.best_lambda
    ratio = timings["naive"] / timings["embedded"]
    criterion(6, {f"50 instances within 1e-8 relative (worst {worst:.1e})": worst <= 1e-8,
                  f"embedded/naive = {1 / ratio:.3f} <= 0.5 (naive {ratio:.1f}x slower)":
                      ratio >= 2,
                  "same best lambda": timings["embedded_best"] == timings["naive_best"]},
              time.perf_counter() - start, 300)


def test_criterion_7_consistency(criterion):
    start = time.perf_counter()
    probs = {}
    for name, scheme in (("adaptive", WeightScheme.adaptive(1.0)),
                         ("default", WeightScheme.default())):
        for n in (50, 200, 1000):
            probs[name, n] = recovery_probability(
                scheme, SimScenario("univariate-fixed-k", n, k=10), 200, seed=7,
                workers=WORKERS)
    a = [probs["adaptive", n] for n in (50, 200, 1000)]
    d = [probs["default", n] for n in (50, 200, 1000)]
    criterion(7, {f"adaptive nondecreasing {a}": a[0] <= a[1] <= a[2],
                  f"adaptive >= default - 0.05 (default {d})":
                      all(x >= y - 0.05 for x, y in zip(a, d)),
                  f"adaptive {a[2]} >= 0.9 at n=1000": a[2] >= 0.9},
              time.perf_counter() - start, 600)


def test_criterion_8_bivariate(criterion):
    start = time.perf_counter()
    prob = recovery_probability(WeightScheme.adaptive(1.0),
                                SimScenario("bivariate2", 100, k=10, sigma=0.1), 200,
                                seed=8, workers=WORKERS)
    criterion(8, {f"consensus recovery {prob} >= 0.9 (n=100)": prob >= 0.9},
              time.perf_counter() - start, 300)


def test_criterion_9_ari(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(9)
    identical = all(adjusted_rand_index(p, p) == 1.0
                    for p in (rng.integers(0, m, 30) for m in (1, 2, 5, 30)))
    hand = adjusted_rand_index([0, 1, 2, 3], [0, 0, 0, 0])
    invariant = True
    for _ in range(100):
        size = int(rng.integers(2, 60))
        a = rng.integers(0, int(rng.integers(1, 8)), size)
        b = rng.integers(0, int(rng.integers(1, 8)), size)
        relabel_a = rng.permutation(10)[a] + 100
        relabel_b = rng.permutation(10)[b] * 3
        invariant &= abs(adjusted_rand_index(a, b)
                         - adjusted_rand_index(relabel_a, relabel_b)) <= 1e-12
    criterion(9, {"identical -> 1.0": identical,
                  "singletons vs one cluster -> 0.0": hand == 0.0,
                  "relabel invariance on 100 pairs": invariant},
              time.perf_counter() - start, 10)


def _clade_lambdas(node):
    """Map clade (frozenset of leaf names) -> height above its leaves."""
    out = {}

    def walk(cur):
        if not cur.children:
            return frozenset([cur.name]), 0.0
        members, height = frozenset(), 0.0
        for child in cur.children:
            m, h = walk(child)
            members |= m
            height = h + (child.length or 0.0)
        out[members] = height
        return members, height

    walk(node)
    return out


def test_criterion_10_serialization(criterion, tmp_path, capsys, monkeypatch):
    start = time.perf_counter()
    rng = np.random.default_rng(10)
    json_ok = newick_ok = True
    for i in range(30):
        scheme = scheme_cycle(rng, i)
        stats = random_stats(rng, int(rng.integers(2, 40)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OrderNotGuaranteedWarning)
            tree = fit_univariate(stats, scheme)
        again = from_json(to_json(tree))
        json_ok &= (np.array_equal(again.left, tree.left)
                    and np.array_equal(again.right, tree.right)
                    and np.allclose(again.node_lambda, tree.node_lambda, rtol=1e-9, atol=0)
                    and np.allclose(again.node_beta, tree.node_beta, rtol=1e-9, atol=1e-12))
        clades = _clade_lambdas(parse_newick(to_newick(tree)))
        expected = {frozenset(tree.labels[g] for g in tree.members(v)): tree.node_lambda[v]
                    for v in range(tree.k, 2 * tree.k - 1)}
        newick_ok &= clades.keys() == expected.keys() and all(
            abs(clades[c] - lam) <= 1e-9 * max(1.0, lam) for c, lam in expected.items())

    monkeypatch.chdir(tmp_path)
    values = rng.normal(size=90) * 3
    rows = [f"k{i % 15},{float(v)!r}" for i, v in enumerate(values)]
    (tmp_path / "d.csv").write_text("g,y\n" + "\n".join(rows) + "\n")
    code = main(["fit", "--input", "d.csv", "--value-col", "y", "--group-col", "g",
                 "--weights", "adaptive", "--output", "t.json"])
    tree = from_json((tmp_path / "t.json").read_text())
    capsys.readouterr()
    replay = code == 0
    for ev in tree.events:
        main(["cut", "--tree", "t.json", "--lambda", repr(ev.lam)])
        clusters = {}
        for line in capsys.readouterr().out.splitlines()[1:]:
            label, cid = line.split("\t")
            clusters.setdefault(cid, set()).add(label)
        expected = cut(tree, ev.lam)
        got = Partition.from_clusters([[tree.labels.index(x) for x in c]
                                       for c in clusters.values()], tree.k)
        merged = {tree.labels[g] for g in tree.members(ev.id)}
        replay &= got == expected and merged in clusters.values()
    criterion(10, {"JSON round trip within 1e-9": json_ok,
                   "Newick topology and lambdas within 1e-9": newick_ok,
                   "fit -> cut replays every merge": replay},
              time.perf_counter() - start, 10)
