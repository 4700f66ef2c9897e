"""Cluster-conditioned variational edge model: GNN encoder with mean and
log-sigma heads, perceptron edge decoder over elementwise products of
latent-plus-feature vectors, masked reconstruction loss, and the budgeted
discrete refinement step that edits the graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .cluster import effective_features, gcn_propagate
from .graphs import Edge, Graph, make_rng, STREAM_INIT, STREAM_REPARAM, STREAM_REFINE

DEFAULT_LATENT = 16
DEFAULT_HIDDEN = 32
SIGMA_MIN = 1e-3
SIGMA_MAX = 1e3


@dataclass(frozen=True)
class LatentState:
    mu: np.ndarray
    sigma: np.ndarray
    z_sample: np.ndarray | None = None


@dataclass(frozen=True)
class ProbabilisticGraph:
    """Edge probabilities over an explicit pair set."""

    probs: dict[Edge, float]
    coverage: str = "edges"

    def dump(self) -> str:
        lines = [f"{i} {j} {p:.6f}" for (i, j), p in sorted(self.probs.items())]
        return "\n".join(lines) + ("\n" if lines else "")

    def write(self, path) -> None:
        Path(path).write_text(self.dump())


@dataclass(frozen=True)
class MaskMatrices:
    """Cluster-conditioned edge pools: intra edges s, inter edges, and
    same-cluster non-edges."""

    s: frozenset[Edge]
    inter: frozenset[Edge]
    intra_nonedge: frozenset[Edge]


@dataclass
class GvaeParams:
    gnn_w1: Tensor
    gnn_w_mu: Tensor
    gnn_w_logsig: Tensor
    w_a2: Tensor
    w_a1: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.gnn_w1, self.gnn_w_mu, self.gnn_w_logsig, self.w_a2, self.w_a1]

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return [
            ("gnn_w1", self.gnn_w1),
            ("gnn_w_mu", self.gnn_w_mu),
            ("gnn_w_logsig", self.gnn_w_logsig),
            ("w_a2", self.w_a2),
            ("w_a1", self.w_a1),
        ]

    @classmethod
    def init(
        cls,
        d: int,
        seed: int,
        latent: int = DEFAULT_LATENT,
        hidden: int = DEFAULT_HIDDEN,
    ) -> "GvaeParams":
        rng = make_rng(seed, STREAM_INIT, 1)
        return cls(
            gnn_w1=ad.glorot(rng, d, hidden),
            gnn_w_mu=ad.glorot(rng, hidden, latent),
            gnn_w_logsig=ad.glorot(rng, hidden, latent),
            w_a2=ad.glorot(rng, latent + d, hidden),
            w_a1=ad.glorot(rng, hidden, 1),
        )

    @property
    def latent_dim(self) -> int:
        return self.gnn_w_mu.shape[1]


def encode_expr(g: Graph, params: GvaeParams) -> tuple[Tensor, Tensor]:
    """Mean and clamped standard-deviation tensors from the two GNN heads."""
    x = ad.constant(effective_features(g))
    trunk = gcn_propagate(g, x, params.gnn_w1, activate=True)
    mu = gcn_propagate(g, trunk, params.gnn_w_mu, activate=False)
    logsig = gcn_propagate(g, trunk, params.gnn_w_logsig, activate=False)
    sigma = ad.clip(ad.exp(logsig), SIGMA_MIN, SIGMA_MAX)
    return mu, sigma


def encode(g: Graph, params: GvaeParams) -> LatentState:
    mu, sigma = encode_expr(g, params)
    return LatentState(mu=mu.value.copy(), sigma=sigma.value.copy())


def reparameterize(state: LatentState, seed: int) -> np.ndarray:
    if np.any(state.sigma <= 0):
        raise ValueError("sigma must be positive")
    rng = make_rng(seed, STREAM_REPARAM)
    eta = rng.standard_normal(state.mu.shape)
    return state.mu + state.sigma * eta


def _selection_matrix(rows: list[int], n: int) -> sp.csr_matrix:
    m = len(rows)
    return sp.csr_matrix(
        (np.ones(m), (np.arange(m), np.asarray(rows))), shape=(m, n)
    )


def decode_pairs_expr(
    z: Tensor, x: np.ndarray, pairs: list[Edge], params: GvaeParams
) -> Tensor:
    """Edge probabilities for a pair list as an (m, 1) tensor."""
    n = x.shape[0]
    zx = ad.concat_cols(z, ad.constant(x)) if x.shape[1] > 0 else z
    left = ad.spmm(_selection_matrix([i for i, _ in pairs], n), zx)
    right = ad.spmm(_selection_matrix([j for _, j in pairs], n), zx)
    e = ad.mul(left, right)
    hidden = ad.relu(ad.matmul(e, params.w_a2))
    return ad.sigmoid(ad.matmul(hidden, params.w_a1))


def decode_pairs(
    z: np.ndarray, x: np.ndarray, pairs: list[Edge], params: GvaeParams
) -> np.ndarray:
    """Fast gradient-free edge probabilities."""
    if not pairs:
        return np.zeros(0)
    zx = np.concatenate([z, x], axis=1) if x.shape[1] > 0 else z
    rows_i = np.asarray([i for i, _ in pairs])
    rows_j = np.asarray([j for _, j in pairs])
    e = zx[rows_i] * zx[rows_j]
    hidden = np.maximum(e @ params.w_a2.value, 0.0)
    logits = hidden @ params.w_a1.value
    return (1.0 / (1.0 + np.exp(-np.clip(logits, -500, 500)))).ravel()


def decode_edge(z, x, i: int, j: int, params: GvaeParams) -> float:
    """Probability of a single undirected edge; symmetric in (i, j)."""
    if i == j:
        raise ValueError("self-pairs are not decoded")
    z = z.value if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return float(decode_pairs(z, x, [(i, j)], params)[0])


def probabilistic_graph(
    g: Graph,
    params: GvaeParams,
    state: LatentState,
    pairs: list[Edge],
    coverage: str = "edges",
) -> ProbabilisticGraph:
    z = state.z_sample if state.z_sample is not None else state.mu
    vals = decode_pairs(z, effective_features(g), pairs, params)
    return ProbabilisticGraph(
        probs={p: float(v) for p, v in zip(pairs, vals)}, coverage=coverage
    )


def build_masks(g: Graph, c_hard: np.ndarray) -> MaskMatrices:
    """Split edges into intra/inter pools and collect same-cluster non-edges."""
    labels = np.asarray(c_hard).argmax(axis=1)
    es = g.edge_set()
    s = frozenset(e for e in es if labels[e[0]] == labels[e[1]])
    inter = es - s
    intra_nonedge = set()
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        for a_idx in range(len(members)):
            for b_idx in range(a_idx + 1, len(members)):
                pair = (int(members[a_idx]), int(members[b_idx]))
                if pair not in es:
                    intra_nonedge.add(pair)
    return MaskMatrices(s=s, inter=frozenset(inter), intra_nonedge=frozenset(intra_nonedge))


def unmasked_pools(g: Graph) -> MaskMatrices:
    """Mask-free pools used by the single-cluster ablation: every edge may be
    deleted and every non-edge added."""
    es = g.edge_set()
    nonedges = frozenset(
        (i, j) for i in range(g.n) for j in range(i + 1, g.n) if (i, j) not in es
    )
    return MaskMatrices(s=frozenset(), inter=es, intra_nonedge=nonedges)


def kl_divergence(mu: np.ndarray, sigma: np.ndarray) -> float:
    """KL(N(mu, diag(sigma^2)) || N(0, I)), summed over nodes and dims."""
    return float(0.5 * np.sum(sigma ** 2 + mu ** 2 - 1.0 - 2.0 * np.log(sigma)))


def gvae_loss(
    g: Graph,
    c_hard: np.ndarray,
    state: LatentState,
    probs: ProbabilisticGraph,
    kl_weight: float = 1.0,
) -> float:
    """Prior KL plus mean binary cross-entropy over observed edges, with
    intra edges as positive targets and inter edges as negatives."""
    masks = build_masks(g, c_hard)
    kl = kl_divergence(state.mu, state.sigma)
    if not g.edges:
        return kl_weight * kl
    total = 0.0
    for e in g.edges:
        if e not in probs.probs:
            raise ValueError(f"coverage gap: no probability for observed edge {e}")
        p = probs.probs[e]
        target = 1.0 if e in masks.s else 0.0
        total += -(target * np.log(p + ad.EPS) + (1 - target) * np.log(1 - p + ad.EPS))
    return kl_weight * kl + total / g.num_edges


def gvae_loss_expr(
    g: Graph,
    targets: list[tuple[Edge, float]],
    params: GvaeParams,
    seed: int,
    kl_weight: float = 1.0,
) -> tuple[Tensor, float, float]:
    """Differentiable total loss for one epoch; returns (loss, kl, recon)."""
    mu, sigma = encode_expr(g, params)
    rng = make_rng(seed, STREAM_REPARAM)
    eta = rng.standard_normal(mu.shape)
    z = ad.add(mu, ad.mul(sigma, ad.constant(eta)))

    mu_sq = ad.mul(mu, mu)
    sig_sq = ad.mul(sigma, sigma)
    log_sig = ad.log(sigma)
    kl_terms = ad.add(ad.add(sig_sq, mu_sq), ad.mul_scalar(log_sig, -2.0))
    kl = ad.mul_scalar(ad.add(ad.reduce_sum(kl_terms), ad.constant(-float(mu.value.size))), 0.5)

    pairs = [e for e, _ in targets]
    y = np.asarray([t for _, t in targets]).reshape(-1, 1)
    p = decode_pairs_expr(z, effective_features(g), pairs, params)
    log_p = ad.log(ad.add(p, ad.constant(ad.EPS)))
    log_1mp = ad.log(ad.add(ad.mul_scalar(p, -1.0), ad.constant(1.0 + ad.EPS)))
    bce = ad.add(ad.mul(ad.constant(-y), log_p), ad.mul(ad.constant(y - 1.0), log_1mp))
    recon = ad.mul_scalar(ad.reduce_sum(bce), 1.0 / max(1, len(targets)))

    loss = ad.add(ad.mul_scalar(kl, kl_weight), recon)
    return loss, float(kl.value), float(recon.value)


def edge_targets(g: Graph, masks: MaskMatrices) -> list[tuple[Edge, float]]:
    """Standard masked targets: 1 on intra edges, 0 on inter edges."""
    return [(e, 1.0 if e in masks.s else 0.0) for e in g.edges]


@dataclass(frozen=True)
class RefineResult:
    graph: Graph
    deleted: tuple[Edge, ...]
    added: tuple[Edge, ...]
    del_truncated: bool
    add_truncated: bool


def _sample_without_replacement(
    pool: list[Edge], weights: np.ndarray, take: int, rng: np.random.Generator
) -> list[Edge]:
    if take == 0 or not pool:
        return []
    p = weights / weights.sum()
    idx = rng.choice(len(pool), size=take, replace=False, p=p, shuffle=False)
    return [pool[int(t)] for t in np.atleast_1d(idx)]


def refine(
    g: Graph,
    probs: ProbabilisticGraph,
    masks: MaskMatrices,
    budget: int,
    seed: int,
) -> RefineResult:
    """Budgeted discrete edit: budget/2 deletions sampled from the inter pool
    with weight exp(1 - p), budget/2 additions from the same-cluster non-edge
    pool with weight exp(p); truncates when a pool runs short."""
    if budget < 0 or budget % 2 != 0:
        raise ValueError("budget must be an even nonnegative integer")
    half = budget // 2
    rng = make_rng(seed, STREAM_REFINE)

    del_pool = sorted(masks.inter)
    del_take = min(half, len(del_pool))
    del_w = np.exp([1.0 - probs.probs.get(e, 0.5) for e in del_pool])
    deleted = _sample_without_replacement(del_pool, del_w, del_take, rng)

    add_pool = sorted(masks.intra_nonedge)
    add_take = min(half, len(add_pool))
    add_w = np.exp([probs.probs.get(e, 0.5) for e in add_pool])
    added = _sample_without_replacement(add_pool, add_w, add_take, rng)

    removed = set(deleted)
    new_edges = [e for e in g.edges if e not in removed] + sorted(added)
    out = Graph(n=g.n, edges=tuple(sorted(new_edges)), features=g.features)
    return RefineResult(
        graph=out,
        deleted=tuple(sorted(deleted)),
        added=tuple(sorted(added)),
        del_truncated=del_take < half,
        add_truncated=add_take < half,
    )


def save_gvae_params(path, params: GvaeParams) -> None:
    ad.save_checkpoint(path, params.named_tensors())


def load_gvae_params(path) -> GvaeParams:
    data = ad.load_checkpoint(path)
    return GvaeParams(**{name: ad.parameter(arr) for name, arr in data.items()})
