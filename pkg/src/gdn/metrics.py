"""Denoising and clustering evaluation: adjacency PSNR, Weisfeiler-Lehman
subtree similarity, and matched clustering scores."""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import f1_score, normalized_mutual_info_score

from .graphs import Graph

PSNR_CAP = 150.0
DEFAULT_WL_ITERATIONS = 3


def psnr(a_true: Graph, a_hat: Graph) -> float:
    """10*log10(1/MSE) where MSE is the differing unordered pair count over
    n(n-1); identical graphs return the cap value."""
    if a_true.n != a_hat.n:
        raise ValueError(f"node-count mismatch: {a_true.n} vs {a_hat.n}")
    n = a_true.n
    if n < 2:
        raise ValueError("need at least 2 nodes")
    differing = len(a_true.edge_set() ^ a_hat.edge_set())
    if differing == 0:
        return PSNR_CAP
    mse = differing / (n * (n - 1))
    return 10.0 * math.log10(1.0 / mse)


def _stable_hash(label: str) -> str:
    return hashlib.blake2b(label.encode("utf-8"), digest_size=8).hexdigest()


@dataclass(frozen=True)
class WlFeature:
    """Subtree-label histogram keyed by (iteration, label)."""

    histogram: dict[tuple[int, str], int]
    iterations: int


def wl_features(g: Graph, h: int, labels: list[str] | None = None) -> WlFeature:
    """Iterated Weisfeiler-Lehman relabeling; round 0 uses node degrees (or
    the provided discrete labels), later rounds hash (label, sorted neighbor
    labels)."""
    if h < 0:
        raise ValueError("h must be nonnegative")
    neighbors: list[list[int]] = [[] for _ in range(g.n)]
    for i, j in g.edges:
        neighbors[i].append(j)
        neighbors[j].append(i)
    if labels is None:
        current = [str(len(nbrs)) for nbrs in neighbors]
    else:
        if len(labels) != g.n:
            raise ValueError("label count must equal node count")
        current = [str(lab) for lab in labels]
    histogram: Counter = Counter()
    for node_label in current:
        histogram[(0, node_label)] += 1
    for it in range(1, h + 1):
        new = []
        for v in range(g.n):
            multiset = sorted(current[u] for u in neighbors[v])
            new.append(_stable_hash(current[v] + "|" + ",".join(multiset)))
        current = new
        for node_label in current:
            histogram[(it, node_label)] += 1
    return WlFeature(histogram=dict(histogram), iterations=h)


def wl_similarity(a: Graph, b: Graph, h: int = DEFAULT_WL_ITERATIONS) -> float:
    """Cosine similarity of the two WL histograms."""
    fa = wl_features(a, h).histogram
    fb = wl_features(b, h).histogram
    if not fa and not fb:
        raise ValueError("both histograms empty (empty graphs)")
    dot = sum(v * fb.get(key, 0) for key, v in fa.items())
    na = sum(v * v for v in fa.values())
    nb = sum(v * v for v in fb.values())
    if na == 0 or nb == 0:
        return 0.0
    return dot / math.sqrt(na * nb)


def _match_labels(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Remap predicted cluster ids onto truth labels by Hungarian assignment
    on the confusion matrix; unmatched prediction ids get fresh labels.

    Rows are put in a canonical order determined by their contents before
    matching, so the result is invariant to how pred's clusters are numbered
    (clusters with identical rows are interchangeable for every metric).
    """
    pred_ids = np.unique(pred)
    truth_ids = np.unique(truth)
    confusion = np.zeros((len(pred_ids), len(truth_ids)), dtype=np.int64)
    pred_pos = {c: i for i, c in enumerate(pred_ids)}
    truth_pos = {c: i for i, c in enumerate(truth_ids)}
    for p, t in zip(pred, truth):
        confusion[pred_pos[p], truth_pos[t]] += 1
    order = np.lexsort(confusion.T[::-1])[::-1]
    rows, cols = linear_sum_assignment(-confusion[order])
    mapping = {}
    next_free = int(truth_ids.max()) + 1
    for r, c in zip(rows, cols):
        mapping[pred_ids[order[r]]] = truth_ids[c]
    for c in pred_ids:
        if c not in mapping:
            mapping[c] = next_free
            next_free += 1
    return np.asarray([mapping[c] for c in pred])


def cluster_metrics(pred, truth) -> tuple[float, float, float]:
    """(accuracy under optimal matching, NMI, macro F1 under the matching)."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    matched = _match_labels(pred, truth)
    acc = float((matched == truth).mean())
    nmi = float(normalized_mutual_info_score(truth, pred))
    f1 = float(
        f1_score(truth, matched, labels=np.unique(truth), average="macro", zero_division=0)
    )
    return acc, nmi, f1
