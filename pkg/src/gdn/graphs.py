"""Graph representation, Laplacian algebra, file I/O, noise injection, and
synthetic cluster-graph generation.

Graphs are simple, undirected, unweighted, with an optional dense node-feature
matrix. All stochastic operations take an explicit seed and derive their
randomness from a counter-based PRNG (Philox), so every result is reproducible
bit-for-bit from (inputs, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

Edge = tuple[int, int]

# Stream ids used to split one user seed into independent substreams.
STREAM_NOISE = 1
STREAM_SYNTH = 2
STREAM_FEATURES = 3
STREAM_REPARAM = 4
STREAM_DROPOUT = 5
STREAM_REFINE = 6
STREAM_INIT = 7
STREAM_TRIAL = 8


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for substream `stream` of `seed`.

    Distinct (seed, stream) tuples yield statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(stream))
    return np.random.Generator(np.random.Philox(ss))


class GraphError(ValueError):
    pass


class ParseError(GraphError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InfeasibleError(GraphError):
    pass


def _canonical_edge(i: int, j: int) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with n nodes and an n-by-d feature matrix.

    Edges are unordered pairs (i, j) with i < j, stored sorted. Instances are
    immutable and safe to share across threads.
    """

    n: int
    edges: tuple[Edge, ...]
    features: np.ndarray

    def __post_init__(self):
        if self.n < 0:
            raise GraphError("node count must be nonnegative")
        seen = set()
        for (i, j) in self.edges:
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < j < self.n):
                raise GraphError(f"edge ({i},{j}) out of range for n={self.n}")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.n:
            raise GraphError(f"features must be ({self.n}, d), got {feats.shape}")
        feats = feats.copy()
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    @classmethod
    def from_edges(cls, n: int, edges, features=None) -> "Graph":
        canon = tuple(sorted({_canonical_edge(int(i), int(j)) for i, j in edges}))
        if features is None:
            features = np.zeros((n, 0))
        return cls(n=n, edges=canon, features=features)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    def has_edge(self, i: int, j: int) -> bool:
        return _canonical_edge(i, j) in self.edge_set()

    def adjacency(self) -> sp.csr_matrix:
        if not self.edges:
            return sp.csr_matrix((self.n, self.n))
        rows = np.fromiter((i for i, _ in self.edges), dtype=np.int64)
        cols = np.fromiter((j for _, j in self.edges), dtype=np.int64)
        data = np.ones(len(self.edges))
        a = sp.coo_matrix(
            (np.concatenate([data, data]),
             (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(self.n, self.n),
        )
        return a.tocsr()

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def with_edges(self, edges) -> "Graph":
        return Graph.from_edges(self.n, edges, self.features)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and self.edges == other.edges
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )

    def __hash__(self):
        return hash((self.n, self.edges, self.features.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.num_edges}, d={self.d})"


@dataclass(frozen=True)
class LaplacianPair:
    """Degree vector D_ii and the combinatorial Laplacian L = D - A."""

    degree: np.ndarray
    laplacian: sp.csr_matrix


@dataclass(frozen=True)
class NoiseSpec:
    """Fixed-count structural noise: add/delete floor(fraction * |E|) edges."""

    add_fraction: float = 0.0
    del_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.add_fraction < 0 or self.del_fraction < 0:
            raise GraphError("noise fractions must be nonnegative")
        if self.del_fraction > 1:
            raise GraphError("del_fraction must be <= 1")


def laplacian(g: Graph) -> LaplacianPair:
    a = g.adjacency()
    deg = g.degrees()
    lap = sp.diags(deg.astype(np.float64)) - a
    return LaplacianPair(degree=deg, laplacian=lap.tocsr())


def laplacian_smoothness(g: Graph) -> float:
    """Tr(X^T L X) = sum over edges of ||x_i - x_j||^2 (both orientations halved)."""
    if g.d == 0 or not g.edges:
        return 0.0
    x = g.features
    total = 0.0
    for i, j in g.edges:
        diff = x[i] - x[j]
        total += float(diff @ diff)
    return total


def all_pairs(n: int):
    for i in range(n):
        for j in range(i + 1, n):
            yield (i, j)


def non_edges(g: Graph) -> list[Edge]:
    es = g.edge_set()
    return [p for p in all_pairs(g.n) if p not in es]


def inject_noise(g: Graph, spec: NoiseSpec) -> Graph:
    """Add / remove fixed uniformly-sampled edge counts; features unchanged."""
    m = g.num_edges
    n_add = math.floor(spec.add_fraction * m)
    n_del = math.floor(spec.del_fraction * m)
    total_pairs = g.n * (g.n - 1) // 2
    pool_size = total_pairs - m
    if n_add > pool_size:
        raise GraphError(
            f"cannot add {n_add} edges: only {pool_size} nonexistent pairs available"
        )
    rng = make_rng(spec.seed, STREAM_NOISE)
    edges = list(g.edges)
    removed = set()
    if n_del > 0:
        del_idx = rng.choice(m, size=n_del, replace=False)
        removed = {edges[k] for k in del_idx}
    added: set[Edge] = set()
    if n_add > 0:
        es = g.edge_set()
        if pool_size <= 4 * n_add or g.n <= 512:
            pool = [p for p in all_pairs(g.n) if p not in es]
            add_idx = rng.choice(len(pool), size=n_add, replace=False)
            added = {pool[k] for k in add_idx}
        else:
            while len(added) < n_add:
                i = int(rng.integers(0, g.n))
                j = int(rng.integers(0, g.n))
                if i == j:
                    continue
                p = _canonical_edge(i, j)
                if p in es or p in added:
                    continue
                added.add(p)
    new_edges = [e for e in edges if e not in removed] + sorted(added)
    return Graph(n=g.n, edges=tuple(sorted(new_edges)), features=g.features)


def modularity(g: Graph, labels) -> float:
    """Newman modularity of a hard node partition."""
    labels = np.asarray(labels)
    m = g.num_edges
    if m == 0:
        return 0.0
    deg = g.degrees()
    groups = np.unique(labels)
    q = 0.0
    for c in groups:
        members = labels == c
        intra = sum(1 for i, j in g.edges if members[i] and members[j])
        d_c = float(deg[members].sum())
        q += intra / m - (d_c / (2 * m)) ** 2
    return q


def _block_sizes(n: int, k: int) -> list[int]:
    base = n // k
    return [base + (1 if b < n % k else 0) for b in range(k)]


def synth_cluster_graph(
    n: int, k: int, target_modularity: float, avg_degree: float, seed: int
) -> tuple[Graph, np.ndarray]:
    """Planted-partition graph with modularity steered to `target_modularity`.

    For near-equal blocks the planted-label modularity is (intra edge
    fraction) - 1/k, so the intra edge count is solved in closed form and
    exact intra/inter counts are sampled. Features are a one-hot block id
    plus Gaussian jitter.
    """
    if not (n >= k >= 1):
        raise GraphError(f"need n >= k >= 1, got n={n}, k={k}")
    if not (0 <= target_modularity < 1):
        raise GraphError("target modularity must be in [0, 1)")
    sizes = _block_sizes(n, k)
    labels = np.repeat(np.arange(k), sizes)
    m = int(round(n * avg_degree / 2))
    f_in = target_modularity + 1.0 / k
    if f_in > 1 + 1e-9:
        raise InfeasibleError(
            f"modularity {target_modularity} unreachable with k={k}: "
            f"intra fraction {f_in:.3f} > 1"
        )
    f_in = min(f_in, 1.0)
    m_in = int(round(f_in * m))
    m_out = m - m_in
    intra_pairs = [
        (i, j)
        for i, j in all_pairs(n)
        if labels[i] == labels[j]
    ]
    inter_pairs_count = n * (n - 1) // 2 - len(intra_pairs)
    if m_in > len(intra_pairs) or m_out > inter_pairs_count:
        raise InfeasibleError(
            f"need {m_in} intra / {m_out} inter edges but only "
            f"{len(intra_pairs)} / {inter_pairs_count} pairs exist"
        )
    rng = make_rng(seed, STREAM_SYNTH)
    chosen = []
    if m_in > 0:
        idx = rng.choice(len(intra_pairs), size=m_in, replace=False)
        chosen.extend(intra_pairs[t] for t in idx)
    if m_out > 0:
        inter_pairs = [
            (i, j) for i, j in all_pairs(n) if labels[i] != labels[j]
        ]
        idx = rng.choice(len(inter_pairs), size=m_out, replace=False)
        chosen.extend(inter_pairs[t] for t in idx)
    feat_rng = make_rng(seed, STREAM_SYNTH, STREAM_FEATURES)
    features = np.zeros((n, k))
    features[np.arange(n), labels] = 1.0
    features += 0.1 * feat_rng.standard_normal((n, k))
    g = Graph.from_edges(n, chosen, features)
    return g, labels


# ---------------------------------------------------------------------------
# GDN text format: line 1 "N M d"; M lines "i j" (i < j); N feature lines.
# ---------------------------------------------------------------------------

def parse_graph(text) -> Graph:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = text.splitlines()
    if not lines:
        raise ParseError(1, "empty input")
    header = lines[0].split()
    if len(header) != 3:
        raise ParseError(1, f"malformed header {lines[0]!r}: expected 'N M d'")
    try:
        n, m, d = (int(tok) for tok in header)
    except ValueError:
        raise ParseError(1, f"malformed header {lines[0]!r}: non-integer field")
    if n < 0 or m < 0 or d < 0:
        raise ParseError(1, "header fields must be nonnegative")
    if len(lines) < 1 + m + (n if d > 0 else 0):
        raise ParseError(len(lines), f"expected {m} edge lines and {n if d > 0 else 0} feature lines")
    edges = []
    seen = set()
    for idx in range(m):
        lineno = 2 + idx
        toks = lines[1 + idx].split()
        if len(toks) != 2:
            raise ParseError(lineno, f"malformed edge line {lines[1 + idx]!r}")
        try:
            i, j = int(toks[0]), int(toks[1])
        except ValueError:
            raise ParseError(lineno, f"non-integer endpoint in {lines[1 + idx]!r}")
        if i == j:
            raise ParseError(lineno, f"self-loop at node {i}")
        if max(i, j) >= n:
            raise ParseError(lineno, f"endpoint {max(i, j)} >= n={n}")
        if min(i, j) < 0:
            raise ParseError(lineno, f"negative endpoint {min(i, j)}")
        if i >= j:
            raise ParseError(lineno, f"edge ({i},{j}) not in i<j order")
        if (i, j) in seen:
            raise ParseError(lineno, f"asymmetric duplicate of edge ({i},{j})")
        seen.add((i, j))
        edges.append((i, j))
    if d == 0:
        features = np.zeros((n, 0))
    else:
        features = np.zeros((n, d))
        for row in range(n):
            lineno = 2 + m + row
            toks = lines[1 + m + row].split()
            if len(toks) != d:
                raise ParseError(lineno, f"expected {d} feature values, got {len(toks)}")
            try:
                features[row] = [float(t) for t in toks]
            except ValueError:
                raise ParseError(lineno, f"non-numeric feature in {lines[1 + m + row]!r}")
    return Graph(n=n, edges=tuple(edges), features=features)


def serialize_graph(g: Graph) -> str:
    out = [f"{g.n} {g.num_edges} {g.d}"]
    out.extend(f"{i} {j}" for i, j in g.edges)
    if g.d > 0:
        for row in g.features:
            out.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def load_graph(path) -> Graph:
    return parse_graph(Path(path).read_text())


def save_graph(g: Graph, path) -> None:
    Path(path).write_text(serialize_graph(g))


# ---------------------------------------------------------------------------
# Dataset manifest: one graph path per line, optional tab-separated int label.
# ---------------------------------------------------------------------------

def read_manifest(path) -> list[tuple[Path, int | None]]:
    base = Path(path).parent
    entries = []
    for raw in Path(path).read_text().splitlines():
        if not raw.strip():
            continue
        parts = raw.split("\t")
        p = Path(parts[0])
        if not p.is_absolute():
            p = base / p
        label = int(parts[1]) if len(parts) > 1 and parts[1].strip() else None
        entries.append((p, label))
    return entries


def write_manifest(path, entries) -> None:
    lines = []
    for item in entries:
        if isinstance(item, tuple):
            p, label = item
            lines.append(f"{p}\t{label}" if label is not None else str(p))
        else:
            lines.append(str(item))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# TU text layout: DS_A.txt (1-indexed comma pairs), DS_graph_indicator.txt,
# optional DS_node_labels.txt / DS_graph_labels.txt.
# ---------------------------------------------------------------------------

def load_tu_dataset(directory) -> list[tuple[Graph, int | None]]:
    directory = Path(directory)
    a_files = sorted(directory.glob("*_A.txt"))
    if not a_files:
        raise GraphError(f"missing required file *_A.txt in {directory}")
    prefix = a_files[0].name[: -len("_A.txt")]
    indicator_path = directory / f"{prefix}_graph_indicator.txt"
    if not indicator_path.exists():
        raise GraphError(f"missing required file {indicator_path.name}")
    indicator = [
        int(tok) for tok in indicator_path.read_text().split() if tok.strip()
    ]
    if not indicator:
        raise GraphError("no graphs found: empty graph indicator")
    num_graphs = max(indicator)
    node_graph = np.asarray(indicator, dtype=np.int64) - 1
    counts = np.bincount(node_graph, minlength=num_graphs)
    offsets = np.concatenate([[0], np.cumsum(counts)])

    node_labels = None
    labels_path = directory / f"{prefix}_node_labels.txt"
    if labels_path.exists():
        node_labels = [
            int(tok) for tok in labels_path.read_text().replace(",", " ").split()
        ]
        if len(node_labels) != len(indicator):
            raise GraphError(
                f"node label count {len(node_labels)} != node count {len(indicator)}"
            )

    graph_labels: list[int | None] = [None] * num_graphs
    glabels_path = directory / f"{prefix}_graph_labels.txt"
    if glabels_path.exists():
        vals = [int(tok) for tok in glabels_path.read_text().split() if tok.strip()]
        if len(vals) == num_graphs:
            graph_labels = list(vals)

    per_graph_edges: list[set[Edge]] = [set() for _ in range(num_graphs)]
    for lineno, raw in enumerate(a_files[0].read_text().splitlines(), start=1):
        raw = raw.strip()
        if not raw:
            continue
        toks = raw.replace(",", " ").split()
        if len(toks) != 2:
            raise GraphError(f"{a_files[0].name} line {lineno}: malformed edge {raw!r}")
        u, v = int(toks[0]) - 1, int(toks[1]) - 1
        if u == v:
            continue
        if not (0 <= u < len(indicator) and 0 <= v < len(indicator)):
            raise GraphError(f"{a_files[0].name} line {lineno}: node id out of range")
        gu, gv = node_graph[u], node_graph[v]
        if gu != gv:
            raise GraphError(
                f"{a_files[0].name} line {lineno}: indicator/edge mismatch "
                f"(nodes {u + 1}, {v + 1} belong to graphs {gu + 1}, {gv + 1})"
            )
        lo, hi = sorted((u - offsets[gu], v - offsets[gu]))
        per_graph_edges[gu].add((int(lo), int(hi)))

    alphabet = sorted(set(node_labels)) if node_labels is not None else []
    label_col = {lab: c for c, lab in enumerate(alphabet)}
    out = []
    for gidx in range(num_graphs):
        size = int(counts[gidx])
        if node_labels is not None:
            feats = np.zeros((size, len(alphabet)))
            for local in range(size):
                feats[local, label_col[node_labels[offsets[gidx] + local]]] = 1.0
        else:
            feats = np.zeros((size, 0))
        g = Graph(n=size, edges=tuple(sorted(per_graph_edges[gidx])), features=feats)
        out.append((g, graph_labels[gidx]))
    return out
