"""Command line interface.

Exit codes: 0 success, 1 bad input data, 2 usage error, 3 internal invariant
violation. Tables are tab separated with a header row; floats are written
with 12 significant digits so identical runs give identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .consensus import adjusted_rand_index, consensus
from .cv import cross_validate
from .errors import ContractError, DataError, InvariantError, SchemaError
from .model import GroupStats, read_csv, summarize
from .oracle import solve_exact
from .path import OrderNotGuaranteedWarning, fit_univariate
from .simulate import KINDS, SimScenario, recovery_probability, run_benchmark
from .tree import SCHEMA_VERSION, Partition, cut, cut_k, from_json, to_json, to_newick
from .weights import VARIANTS, WeightScheme

DEFAULT_SEED = 42
PATH_POINTS = 200


class UsageError(Exception):
    pass


def fmt(x) -> str:
    return format(float(x), ".12g")


@contextmanager
def _sink(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _write_table(out, header, rows):
    out.write("\t".join(header) + "\n")
    for row in rows:
        out.write("\t".join(fmt(x) if isinstance(x, (float, np.floating)) else str(x)
                            for x in row) + "\n")


def _scheme(args) -> WeightScheme:
    if args.weights == "adaptive":
        return WeightScheme.adaptive(args.alpha, args.gamma)
    return WeightScheme(args.weights)


def _default_seed() -> int:
    raw = os.environ.get("FUSETREE_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"FUSETREE_SEED must be an integer, got {raw!r}") from None


def _seed(args) -> int:
    return _default_seed() if args.seed is None else args.seed


def _threads(args) -> int:
    return args.threads or os.cpu_count() or 1


def _suffixed(path: str, j: int, p: int) -> str:
    if p == 1:
        return path
    target = Path(path)
    return str(target.with_name(f"{target.stem}.f{j}{target.suffix}"))


def _read_tree(path) -> "FusionTree":  # noqa: F821
    return from_json(Path(path).read_text(encoding="utf-8"))


def _path_rows(tree):
    lams = tree.event_lambdas[np.isfinite(tree.event_lambdas)]
    top = 1.05 * lams.max() if len(lams) and lams.max() > 0 else 1.0
    grid = np.unique(np.concatenate([lams, np.linspace(0.0, top, PATH_POINTS)]))
    for lam in grid:
        for label, beta in zip(tree.labels, tree.betas(float(lam))):
            yield lam, label, beta


def cmd_fit(args):
    data = read_csv(args.input, args.value_col, args.group_col)
    scheme = _scheme(args)
    for j in range(data.p):
        tree = fit_univariate(summarize(data, j), scheme)
        Path(_suffixed(args.output, j, data.p)).write_text(to_json(tree) + "\n", encoding="utf-8")
        if args.newick:
            Path(_suffixed(args.newick, j, data.p)).write_text(to_newick(tree) + "\n",
                                                               encoding="utf-8")
        if args.path_tsv:
            with _sink(_suffixed(args.path_tsv, j, data.p)) as out:
                _write_table(out, ["lambda", "group_label", "beta"], _path_rows(tree))


def _write_partition(out, labels, partition: Partition):
    _write_table(out, ["group_label", "cluster_id"],
                 zip(labels, partition.labels.tolist()))


def cmd_cut(args):
    tree = _read_tree(args.tree)
    if (args.lam is None) == (args.k is None):
        raise UsageError("give exactly one of --lambda and --k")
    if args.lam is not None:
        if args.lam < 0:
            raise UsageError("--lambda must be >= 0")
        partition, lam = cut(tree, args.lam), args.lam
    else:
        if not 1 <= args.k <= tree.k:
            raise UsageError(f"--k must be in 1..{tree.k}")
        result = cut_k(tree, args.k)
        partition, lam = result.partition, result.interval[0]
        if not result.exact:
            print(f"warning: tied fusions skip {args.k} clusters; "
                  f"returning {partition.num_clusters}", file=sys.stderr)
    with _sink(args.output) as out:
        if args.summary:
            betas = tree.betas(lam)
            rows = [(c, len(m), float(betas[m[0]]), " ".join(tree.labels[g] for g in m))
                    for c, m in enumerate(partition.clusters())]
            _write_table(out, ["cluster_id", "size", "beta", "members"], rows)
        else:
            _write_partition(out, tree.labels, partition)


def cmd_cv(args):
    data = read_csv(args.input, [args.value_col], args.group_col)
    report = cross_validate(data, 0, _scheme(args), args.folds, args.grid_size,
                            _seed(args), args.mode, _threads(args),
                            args.lambda_min, args.lambda_max)
    with _sink(args.output) as out:
        _write_table(out, ["lambda", "mean_error", "std_error", "n_clusters"],
                     zip(report.grid.values, report.mean_error, report.std_error,
                         report.n_clusters.tolist()))
    summary = {"best_lambda": float(fmt(report.best_lambda)),
               "best_index": report.best_index, "folds": report.folds,
               "mode": report.mode, "seed": _seed(args)}
    line = json.dumps(summary, sort_keys=True)
    if args.summary:
        Path(args.summary).write_text(line + "\n", encoding="utf-8")
    else:
        print(line, file=sys.stderr if args.output in (None, "-") else sys.stdout)


def cmd_aggregate(args):
    trees = [_read_tree(p) for p in args.trees]
    if (args.lam is None) == (args.per_feature_lambda is None):
        raise UsageError("give exactly one of --lambda and --per-feature-lambda")
    if args.per_feature_lambda is not None and len(args.per_feature_lambda) != len(trees):
        raise UsageError("--per-feature-lambda needs one value per tree")
    partition = consensus(trees, args.lam, args.per_feature_lambda)
    with _sink(args.output) as out:
        _write_partition(out, trees[0].labels, partition)


def read_partition(path) -> dict:
    """``group_label -> cluster_id`` from a tab or comma separated file."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty partition file")
    sep = "\t" if "\t" in lines[0] else ","
    header = [h.strip() for h in lines[0].split(sep)]
    if header[:2] != ["group_label", "cluster_id"]:
        raise SchemaError(f"{path}: expected header group_label, cluster_id")
    mapping = {}
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(sep)
        if len(fields) < 2:
            raise SchemaError(f"{path}: line {number}: expected two fields")
        mapping[fields[0]] = fields[1].strip()
    return mapping


def cmd_ari(args):
    a, b = read_partition(args.a), read_partition(args.b)
    if set(a) != set(b):
        raise SchemaError("the two partitions cover different groups")
    keys = sorted(a)
    print(fmt(adjusted_rand_index(np.array([a[k] for k in keys]),
                                  np.array([b[k] for k in keys]))))


def cmd_simulate(args):
    seed = _seed(args)
    schemes = [WeightScheme.adaptive(args.alpha, args.gamma) if w == "adaptive"
               else WeightScheme(w) for w in args.weights]
    rows = []
    for n in args.n:
        for sigma in args.sigma:
            scenario = SimScenario(args.scenario, n, args.k, args.c, sigma, seed)
            for scheme in schemes:
                prob = recovery_probability(scheme, scenario, args.replicates, seed,
                                            _threads(args))
                rows.append((n, scheme.variant, float(sigma), float(prob), args.replicates))
    with _sink(args.output) as out:
        _write_table(out, ["n", "scheme", "sigma", "recovery_prob", "replicates"], rows)


def cmd_bench(args):
    table = run_benchmark(args.sizes, _scheme(args), args.replicates, _seed(args))
    with _sink(args.output) as out:
        _write_table(out, ["K", "median_seconds"], [(k, float(t)) for k, t in table])


def cmd_solve_exact(args):
    sizes = args.sizes or [1] * len(args.means)
    if len(sizes) != len(args.means):
        raise UsageError("--sizes needs one value per mean")
    stats = GroupStats.from_means(args.means, sizes)
    beta, value = solve_exact(stats, _scheme(args), None, args.lam)
    with _sink(args.output) as out:
        _write_table(out, ["group_label", "beta"], zip(stats.labels, beta))
        out.write(f"# objective\t{fmt(value)}\n")


def _add_weights(p):
    p.add_argument("--weights", choices=VARIANTS, default="adaptive")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None,
                   help=f"RNG seed (default: $FUSETREE_SEED or {DEFAULT_SEED})")


def build_parser() -> argparse.ArgumentParser:
    # --threads is accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker processes for folds / replicates (default: all cores)")
    parser = argparse.ArgumentParser(prog="fusetree", parents=[common],
                                     description="Fusion-tree regularization paths.")
    parser.add_argument("--version", action="version",
                        version=f"fusetree {__version__} (tree schema {SCHEMA_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)
    add = sub.add_parser

    def sub_add_parser(name, **kw):
        return add(name, parents=[common], **kw)

    sub.add_parser = sub_add_parser

    p = sub.add_parser("fit", help="fit the path and write the tree")
    p.add_argument("--input", required=True)
    p.add_argument("--value-col", action="append", required=True)
    p.add_argument("--group-col", required=True)
    _add_weights(p)
    p.add_argument("--output", required=True)
    p.add_argument("--newick")
    p.add_argument("--path-tsv")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cut", help="partition of a saved tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--summary", action="store_true", help="one row per cluster")
    p.add_argument("--output")
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("cv", help="cross-validation curve")
    p.add_argument("--input", required=True)
    p.add_argument("--value-col", required=True)
    p.add_argument("--group-col", required=True)
    _add_weights(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--grid-size", type=int, default=50)
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--mode", choices=("embedded", "naive"), default="embedded")
    _add_seed(p)
    p.add_argument("--output")
    p.add_argument("--summary", help="file for the JSON summary line")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("aggregate", help="consensus partition of several trees")
    p.add_argument("--trees", nargs="+", required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--per-feature-lambda", type=float, nargs="+")
    p.add_argument("--output")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("ari", help="adjusted Rand index of two partition files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_ari)

    p = sub.add_parser("simulate", help="support recovery study")
    p.add_argument("--scenario", choices=KINDS, required=True)
    p.add_argument("--n", type=int, nargs="+", default=[50, 200, 1000])
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--c", type=float, default=2.5)
    p.add_argument("--sigma", type=float, nargs="+", default=[1.0])
    p.add_argument("--weights", choices=VARIANTS, nargs="+", default=["adaptive"])
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--replicates", type=int, default=200)
    _add_seed(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="fit timings")
    p.add_argument("--sizes", type=int, nargs="+", default=[10_000, 100_000])
    _add_weights(p)
    p.add_argument("--replicates", type=int, default=3)
    _add_seed(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_bench)

    dev = sub.add_parser("dev", help="debugging tools")
    dev_sub = dev.add_subparsers(dest="dev_command", required=True)
    p = dev_sub.add_parser("solve-exact", help="brute-force solution at one lambda")
    p.add_argument("--means", type=float, nargs="+", required=True)
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    _add_weights(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_solve_exact)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.threads = getattr(args, "threads", None)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OrderNotGuaranteedWarning)
            args.func(args)
    except (UsageError, ContractError) as exc:
        print(f"fusetree: error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"fusetree: internal error: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"fusetree: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
