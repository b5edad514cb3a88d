"""The fusion tree: evaluation of the piecewise-linear path, cuts into
partitions, and Newick / JSON serialization.

Node ids ``0..K-1`` are the leaves (one per group, in group order); node
``K + e`` is created by fusion event ``e``. Every node carries the segment
``beta(lambda) = beta_start + slope * (lambda - lambda_start)``, valid from its
own creation until its parent's event.
"""

from __future__ import annotations

import json
import math
import re
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, SchemaError, VersionError
from .weights import WeightScheme

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FusionEvent:
    lam: float
    left: int
    right: int
    id: int
    beta: float
    slope: float
    size: int


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of groups to clusters, labels canonicalized to ``0..m-1``
    in order of first appearance."""

    labels: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.labels)
        if raw.ndim != 1:
            raise ContractError("partition labels must be one-dimensional")
        _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first)] = np.arange(len(first))
        object.__setattr__(self, "labels", rank[inverse.reshape(-1)])

    @property
    def num_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash(self.labels.tobytes())

    def clusters(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.num_clusters)]
        for g, c in enumerate(self.labels.tolist()):
            out[c].append(g)
        return out

    def refines(self, other: "Partition") -> bool:
        """True when every cluster of ``self`` lies inside one of ``other``."""
        pairs = np.unique(np.stack([self.labels, other.labels]), axis=1)
        return pairs.shape[1] == self.num_clusters

    @classmethod
    def from_clusters(cls, clusters, k=None) -> "Partition":
        k = sum(len(c) for c in clusters) if k is None else k
        labels = np.full(k, -1, dtype=np.int64)
        for c, members in enumerate(clusters):
            labels[list(members)] = c
        if np.any(labels < 0):
            raise ContractError("clusters do not cover every group")
        return cls(labels)


class FusionTree:
    """Immutable result of a path fit. Prefer :func:`beta_at`, :func:`cut`
    and friends over poking at the node arrays."""

    def __init__(self, labels, sizes, means, node_lambda, node_beta, node_slope,
                 node_size, left, right, scheme: WeightScheme, n: int):
        self.labels = tuple(labels)
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.means = np.asarray(means, dtype=float)
        self.node_lambda = np.asarray(node_lambda, dtype=float)
        self.node_beta = np.asarray(node_beta, dtype=float)
        self.node_slope = np.asarray(node_slope, dtype=float)
        self.node_size = np.asarray(node_size, dtype=np.int64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.scheme = scheme
        self.n = int(n)
        K = len(self.labels)
        if K == 0 or len(self.node_lambda) != 2 * K - 1:
            raise SchemaError("a tree on K leaves needs exactly 2K-1 nodes")
        for arr in (self.node_lambda, self.node_beta, self.node_slope):
            arr.flags.writeable = False

        internal = np.arange(K, 2 * K - 1)
        self.parent = np.full(2 * K - 1, -1, dtype=np.int64)
        self.parent[self.left[K:]] = internal
        self.parent[self.right[K:]] = internal
        if K > 1 and (np.count_nonzero(self.parent < 0) != 1 or self.parent[-1] != -1):
            raise SchemaError("events do not form a single binary tree")
        self.order = np.lexsort((np.arange(K), -self.means))
        self.lo = np.empty(2 * K - 1, dtype=np.int64)
        self.hi = np.empty(2 * K - 1, dtype=np.int64)
        self.lo[self.order] = np.arange(K)
        self.hi[self.order] = np.arange(K)
        lo, hi = self.lo.tolist(), self.hi.tolist()
        lft, rgt = self.left.tolist(), self.right.tolist()
        for v in range(K, 2 * K - 1):
            a, b = lft[v], rgt[v]
            if not (0 <= a < v and 0 <= b < v) or hi[a] + 1 != lo[b]:
                raise SchemaError(f"event node {v} does not merge adjacent clusters")
            lo[v], hi[v] = lo[a], hi[b]
        self.lo = np.array(lo, dtype=np.int64)
        self.hi = np.array(hi, dtype=np.int64)
        self.event_lambdas = self.node_lambda[K:]
        self.event_boundary = self.hi[self.left[K:]]
        self._event_lams = self.event_lambdas.tolist()

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def root(self) -> int:
        return 2 * self.k - 2

    @property
    def root_lambda(self) -> float:
        return float(self.node_lambda[self.root]) if self.k > 1 else 0.0

    @property
    def grand_mean(self) -> float:
        return math.fsum((self.sizes * self.means).tolist()) / int(self.sizes.sum())

    @property
    def events(self) -> list[FusionEvent]:
        K = self.k
        return [FusionEvent(float(self.node_lambda[v]), int(self.left[v]), int(self.right[v]),
                            v, float(self.node_beta[v]), float(self.node_slope[v]),
                            int(self.node_size[v]))
                for v in range(K, 2 * K - 1)]

    def node_end(self, v: int) -> float:
        p = self.parent[v]
        return math.inf if p < 0 else float(self.node_lambda[p])

    def members(self, v: int) -> np.ndarray:
        """Group indices under node ``v``."""
        return self.order[self.lo[v]:self.hi[v] + 1]

    def applied(self, lam: float) -> int:
        """Number of events with lambda <= ``lam``."""
        return bisect_right(self._event_lams, lam)

    def live_nodes(self, lam: float) -> np.ndarray:
        """Nodes whose segment contains ``lam``, ordered by sorted position."""
        K = self.k
        m = self.applied(lam)
        ids = np.arange(K + m)
        par = self.parent[ids]
        alive = ids[(par < 0) | (par >= K + m)]
        return alive[np.argsort(self.lo[alive])]

    def betas(self, lam: float) -> np.ndarray:
        """beta of every group at ``lam`` (vectorized :func:`beta_at`)."""
        nodes = self.live_nodes(lam)
        values = self.node_beta[nodes] + self.node_slope[nodes] * (lam - self.node_lambda[nodes])
        counts = self.hi[nodes] - self.lo[nodes] + 1
        out = np.empty(self.k)
        out[self.order] = np.repeat(values, counts)
        return out

    def __eq__(self, other):
        if not isinstance(other, FusionTree):
            return NotImplemented
        return (self.labels == other.labels and self.scheme == other.scheme
                and self.n == other.n
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("sizes", "means", "node_lambda", "node_beta",
                                  "node_slope", "node_size", "left", "right")))

    __hash__ = None

    def __repr__(self):
        return (f"FusionTree(k={self.k}, scheme={self.scheme.variant}, "
                f"root_lambda={self.root_lambda:.6g})")


def beta_at(tree: FusionTree, group: int, lam: float) -> float:
    if not 0 <= group < tree.k:
        raise ContractError(f"unknown group index {group}")
    if lam < 0:
        raise ContractError("lambda must be >= 0")
    node_lambda, parent = tree.node_lambda, tree.parent
    v = group
    p = parent[v]
    while p >= 0 and node_lambda[p] <= lam:
        v = p
        p = parent[v]
    return float(tree.node_beta[v] + tree.node_slope[v] * (lam - node_lambda[v]))


def _cut_after(tree: FusionTree, m: int) -> Partition:
    K = tree.k
    present = np.ones(max(K - 1, 0), dtype=np.int64)
    present[tree.event_boundary[:m]] = 0
    by_pos = np.concatenate(([0], np.cumsum(present)))
    labels = np.empty(K, dtype=np.int64)
    labels[tree.order] = by_pos
    return Partition(labels)


def cut(tree: FusionTree, lam: float) -> Partition:
    """Partition at ``lam``; fusions happening exactly at ``lam`` are included."""
    return _cut_after(tree, tree.applied(lam))


@dataclass(frozen=True)
class CutK:
    partition: Partition
    interval: tuple
    exact: bool = True


def cut_k(tree: FusionTree, target_clusters: int) -> CutK:
    """The partition with ``target_clusters`` clusters and the half-open
    lambda interval on which it is active.

    When tied events skip that size, the nearest achievable smaller count is
    returned with ``exact=False``.
    """
    K = tree.k
    if not 1 <= target_clusters <= K:
        raise ContractError(f"target must be in 1..{K}")
    lams = tree._event_lams
    m = K - target_clusters
    start = lams[m - 1] if m > 0 else 0.0
    reached = bisect_right(lams, start)
    end = lams[reached] if reached < len(lams) else math.inf
    return CutK(_cut_after(tree, reached), (start, end), reached == m)


_PLAIN_LABEL = re.compile(r"[A-Za-z0-9]+")


def _newick_label(label: str) -> str:
    if _PLAIN_LABEL.fullmatch(label):
        return label
    return "'" + label.replace("'", "''") + "'"


def to_newick(tree: FusionTree) -> str:
    """Leaves named by group label; branch length = parent lambda - child lambda."""
    K = tree.k
    lam = tree.node_lambda
    parts: list[str] = []
    stack: list = [tree.root]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            parts.append(item)
            continue
        v = item
        p = tree.parent[v]
        # inf - inf would print nan; equal endpoints mean a zero-length edge
        span = 0.0 if p < 0 or lam[p] == lam[v] else float(lam[p] - lam[v])
        length = "" if p < 0 else f":{span!r}"
        if v < K:
            parts.append(_newick_label(tree.labels[v]) + length)
        else:
            stack.extend([")" + length, int(tree.right[v]), ",", int(tree.left[v])])
            parts.append("(")
    return "".join(parts) + ";"


@dataclass
class NewickNode:
    name: str | None = None
    length: float | None = None
    children: list = field(default_factory=list)

    def leaves(self) -> list[str]:
        out, stack = [], [self]
        while stack:
            node = stack.pop()
            if node.children:
                stack.extend(reversed(node.children))
            else:
                out.append(node.name)
        return out


def parse_newick(text: str) -> NewickNode:
    """Minimal Newick reader: nested parentheses, quoted labels, lengths."""
    text = text.strip()
    if not text.endswith(";"):
        raise SchemaError("Newick string must end with ';'")
    i, end = 0, len(text) - 1
    root = NewickNode()
    stack = [root]
    node = root

    def read_label(i):
        if text[i] == "'":
            buf = []
            i += 1
            while True:
                if i >= end:
                    raise SchemaError("unterminated quoted label")
                if text[i] == "'":
                    if text[i + 1] == "'":
                        buf.append("'")
                        i += 2
                        continue
                    return "".join(buf), i + 1
                buf.append(text[i])
                i += 1
        j = i
        while j < end and text[j] not in "(),:;":
            j += 1
        return text[i:j].strip(), j

    while i < end:
        c = text[i]
        if c == "(":
            child = NewickNode()
            node.children.append(child)
            stack.append(child)
            node = child
            i += 1
        elif c == ",":
            stack.pop()
            child = NewickNode()
            stack[-1].children.append(child)
            stack.append(child)
            node = child
            i += 1
        elif c == ")":
            stack.pop()
            node = stack[-1]
            i += 1
        elif c == ":":
            j = i + 1
            while j < end and text[j] not in "(),;":
                j += 1
            try:
                node.length = float(text[i + 1:j])
            except ValueError:
                raise SchemaError(f"bad branch length {text[i + 1:j]!r}") from None
            i = j
        elif c.isspace():
            i += 1
        else:
            name, i = read_label(i)
            node.name = name or None
    if len(stack) != 1:
        raise SchemaError("unbalanced parentheses in Newick string")
    return root


def to_json(tree: FusionTree) -> str:
    K = tree.k
    doc = {
        "version": SCHEMA_VERSION,
        "n": tree.n,
        "k": K,
        "weights": tree.scheme.to_dict(),
        "leaves": [{"id": g, "label": tree.labels[g], "n": int(tree.sizes[g]),
                    "mean": float(tree.means[g]), "slope": float(tree.node_slope[g])}
                   for g in range(K)],
        "events": [{"lambda": e.lam, "left": e.left, "right": e.right, "id": e.id,
                    "beta": e.beta, "slope": e.slope, "size": e.size}
                   for e in tree.events],
    }
    return json.dumps(doc)


def from_json(text: str) -> FusionTree:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed tree document: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("tree document must be a JSON object")
    if "version" not in doc:
        raise SchemaError("tree document has no version field")
    if str(doc["version"]) != str(SCHEMA_VERSION):
        raise VersionError(f"tree schema version {doc['version']} is not supported "
                           f"(reader version {SCHEMA_VERSION})")
    for key in ("n", "k", "weights", "leaves", "events"):
        if key not in doc:
            raise SchemaError(f"tree document is missing {key!r}")
    try:
        K = int(doc["k"])
        leaves = sorted(doc["leaves"], key=lambda d: d["id"])
        if [d["id"] for d in leaves] != list(range(K)):
            raise SchemaError("leaf ids must be 0..k-1")
        events = doc["events"]
        if len(events) != K - 1:
            raise SchemaError(f"expected {K - 1} events, found {len(events)}")
        total = 2 * K - 1
        lam, beta, slope, size = [0.0] * total, [0.0] * total, [0.0] * total, [0] * total
        left, right = [-1] * total, [-1] * total
        for d in leaves:
            g = d["id"]
            beta[g] = float(d["mean"])
            size[g] = int(d["n"])
            slope[g] = float(d.get("slope", math.nan))
        for e, d in enumerate(events):
            v = int(d["id"])
            if v != K + e:
                raise SchemaError("event ids must be k, k+1, ... in lambda order")
            lam[v], beta[v], slope[v] = float(d["lambda"]), float(d["beta"]), float(d["slope"])
            size[v] = int(d["size"])
            left[v], right[v] = int(d["left"]), int(d["right"])
        if any(lam[K + e] > lam[K + e + 1] for e in range(K - 2)):
            raise SchemaError("events must be sorted by lambda")
        scheme = WeightScheme.from_dict(doc["weights"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"malformed tree document: {exc!r}") from None
    # Older writers may omit leaf slopes; recover them from the parent segment.
    parent = {c: K + e for e in range(K - 1) for c in (left[K + e], right[K + e])}
    for g in range(K):
        if math.isnan(slope[g]):
            p = parent.get(g)
            slope[g] = 0.0 if p is None or lam[p] == 0 else (beta[p] - beta[g]) / lam[p]
    return FusionTree([d["label"] for d in leaves], size[:K], beta[:K], lam, beta,
                      slope, size, left, right, scheme, int(doc["n"]))
