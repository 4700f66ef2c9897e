"""Alternating optimization of the edge model and the cluster network, with
the denoised redraw fed back into cluster training (randomized smoothing),
cluster-count selection, and the reporting objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from . import autodiff as ad
from .autodiff import AdamState, DivergenceError
from .cluster import (
    ClusterAssignment,
    ClusterNetParams,
    ClusterTrainConfig,
    cluster_forward,
    effective_features,
    ncut_loss,
    train_cluster_net,
)
from .graphs import Graph, laplacian, make_rng, STREAM_DROPOUT
from .gvae import (
    GvaeParams,
    MaskMatrices,
    RefineResult,
    build_masks,
    edge_targets,
    encode,
    gvae_loss_expr,
    probabilistic_graph,
    refine,
    unmasked_pools,
)

AUTO = None  # sentinel for automatic cluster-count selection

EARLY_STOP_TOL = 1e-4
EARLY_STOP_PATIENCE = 20


def derive_seed(seed: int, *stream: int) -> int:
    """Stable 64-bit sub-seed for substream `stream` of `seed`."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(stream))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    lr_decay: float = 0.99
    dropout: float = 0.3
    varphi: float = 0.5
    kl_weight: float = 1.0
    budget: int | None = None  # None -> 2 * floor(0.1 * |E|)
    k: int | None = AUTO
    seed: int = 0
    latent_dim: int = 16
    hidden: int = 32
    cluster_steps: int = 1
    gvae_steps: int = 1
    k_min: int = 2
    k_max: int = 6
    select_epochs: int = 120

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.dropout < 1):
            raise ValueError("dropout must be in [0, 1)")
        if self.budget is not None and (self.budget < 0 or self.budget % 2):
            raise ValueError("budget must be even and nonnegative")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")

    def resolved_budget(self, g: Graph) -> int:
        if self.budget is not None:
            return self.budget
        return 2 * math.floor(0.1 * g.num_edges)


@dataclass
class TrainReport:
    l_u: list[float] = field(default_factory=list)
    l_prior: list[float] = field(default_factory=list)
    l_recon: list[float] = field(default_factory=list)
    l_total: list[float] = field(default_factory=list)
    k: int = 0
    final_assignment: ClusterAssignment | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.l_total)

    def to_csv(self) -> str:
        lines = ["epoch,l_u,l_prior,l_recon,l_total"]
        for e in range(self.epochs_run):
            lines.append(
                f"{e},{self.l_u[e]:.6f},{self.l_prior[e]:.6f},"
                f"{self.l_recon[e]:.6f},{self.l_total[e]:.6f}"
            )
        return "\n".join(lines) + "\n"


def _uniform_assignment(n: int) -> ClusterAssignment:
    return ClusterAssignment.from_soft(np.ones((n, 1)))


def _ablation_targets(g: Graph, pools: MaskMatrices, seed: int) -> list:
    """Mask-free reconstruction targets: all edges positive plus an equal
    count of sampled non-edges as negatives."""
    targets = [(e, 1.0) for e in g.edges]
    nonedges = sorted(pools.intra_nonedge)
    if nonedges:
        take = min(len(nonedges), max(1, g.num_edges))
        rng = make_rng(seed, 97)
        idx = rng.choice(len(nonedges), size=take, replace=False)
        targets.extend((nonedges[int(t)], 0.0) for t in idx)
    return targets


def train(
    g: Graph, config: TrainConfig
) -> tuple[GvaeParams, ClusterNetParams, ClusterAssignment, TrainReport]:
    """Alternate one edge-model epoch and one cluster-net epoch per outer
    iteration, redrawing a refined graph in between; deterministic in
    (graph, config)."""
    k = config.k
    if k is AUTO:
        k = select_k(g, config.k_min, min(config.k_max, max(config.k_min, g.n)), config)
    if not (1 <= k <= g.n):
        raise ValueError(f"k={k} out of range for n={g.n}")

    d = effective_features(g).shape[1]
    cluster_params = ClusterNetParams.init(d, k, config.seed, hidden=config.hidden)
    gvae_params = GvaeParams.init(
        d, config.seed, latent=config.latent_dim, hidden=config.hidden
    )
    report = TrainReport(k=k)
    lap_g = laplacian(g)
    budget = config.resolved_budget(g)
    masked = k > 1

    cluster_tensors = cluster_params.tensors()
    gvae_tensors = gvae_params.tensors()
    cluster_state = AdamState.init(cluster_tensors)
    gvae_state = AdamState.init(gvae_tensors)

    best_total = np.inf
    stall = 0
    for epoch in range(config.epochs):
        lr = config.lr * (config.lr_decay ** epoch)

        # (1) current hard mask from the cluster network
        if masked:
            assignment = ClusterAssignment.from_soft(
                cluster_forward(g, cluster_params).value
            )
        else:
            assignment = _uniform_assignment(g.n)
        pools = build_masks(g, assignment.hard) if masked else unmasked_pools(g)

        # (2) edge-model epoch(s) on the masked reconstruction loss
        if masked:
            targets = edge_targets(g, pools)
        else:
            targets = _ablation_targets(g, pools, derive_seed(config.seed, 11, epoch))
        l_prior = l_recon = 0.0
        for step in range(config.gvae_steps):
            if targets:
                loss, l_prior, l_recon = gvae_loss_expr(
                    g,
                    targets,
                    gvae_params,
                    seed=derive_seed(config.seed, 13, epoch, step),
                    kl_weight=config.kl_weight,
                )
                if not np.isfinite(loss.value):
                    raise DivergenceError(f"non-finite edge-model loss at epoch {epoch}")
                grads = ad.gradients(loss, gvae_tensors)
                ad.adam_step(gvae_tensors, grads, gvae_state, lr)

        # (3) redraw a refined graph from current probabilities
        state = encode(g, gvae_params)
        score_pairs = sorted(set(g.edges) | pools.intra_nonedge)
        probs = probabilistic_graph(g, gvae_params, state, score_pairs, coverage="edges+intra_nonedge")
        redraw = refine(g, probs, pools, budget, derive_seed(config.seed, 17, epoch))

        # (4) cluster-net epoch(s) on the mean loss over {input, redraw}
        l_u = 0.0
        if masked:
            smoothing_graphs = [g, redraw.graph]
            laps = [lap_g, laplacian(redraw.graph)]
            for step in range(config.cluster_steps):
                rng = make_rng(config.seed, STREAM_DROPOUT, epoch, step)
                loss = None
                for gg, lap in zip(smoothing_graphs, laps):
                    soft = cluster_forward(gg, cluster_params, dropout=config.dropout, rng=rng)
                    term = ncut_loss(soft, lap, config.varphi)
                    loss = term if loss is None else ad.add(loss, term)
                loss = ad.mul_scalar(loss, 1.0 / len(smoothing_graphs))
                if not np.isfinite(loss.value):
                    raise DivergenceError(f"non-finite cluster loss at epoch {epoch}")
                grads = ad.gradients(loss, cluster_tensors)
                ad.adam_step(cluster_tensors, grads, cluster_state, lr)
                l_u = float(loss.value)

        total = l_u + l_prior + l_recon
        report.l_u.append(l_u)
        report.l_prior.append(l_prior)
        report.l_recon.append(l_recon)
        report.l_total.append(total)

        if best_total - total > EARLY_STOP_TOL:
            best_total = total
            stall = 0
        else:
            stall += 1
            if stall >= EARLY_STOP_PATIENCE:
                break

    if masked:
        final_assignment = ClusterAssignment.from_soft(
            cluster_forward(g, cluster_params).value
        )
    else:
        final_assignment = _uniform_assignment(g.n)
    report.final_assignment = final_assignment
    return gvae_params, cluster_params, final_assignment, report


def denoise(g: Graph, config: TrainConfig, return_probs: bool = False):
    """Full pipeline: train, then draw the final refined graph.

    Returns (refine result, report), plus the scored probabilistic graph
    when return_probs is set.
    """
    gvae_params, cluster_params, assignment, report = train(g, config)
    pools = build_masks(g, assignment.hard) if report.k > 1 else unmasked_pools(g)
    state = encode(g, gvae_params)
    score_pairs = sorted(set(g.edges) | pools.intra_nonedge)
    probs = probabilistic_graph(
        g, gvae_params, state, score_pairs, coverage="edges+intra_nonedge"
    )
    budget = config.resolved_budget(g)
    result = refine(g, probs, pools, budget, derive_seed(config.seed, 19))
    if return_probs:
        return result, report, probs
    return result, report


def _partition_log_likelihood(g: Graph, labels: np.ndarray) -> float:
    """Planted-partition profile log-likelihood of the edge set given a hard
    partition (intra and inter edge rates fitted at their MLE)."""
    n = g.n
    total_pairs = n * (n - 1) // 2
    sizes = np.bincount(labels)
    intra_pairs = int(sum(s * (s - 1) // 2 for s in sizes))
    inter_pairs = total_pairs - intra_pairs
    m_in = sum(1 for i, j in g.edges if labels[i] == labels[j])
    m_out = g.num_edges - m_in
    ll = 0.0
    if intra_pairs > 0:
        p_in = m_in / intra_pairs
        ll += float(xlogy(m_in, p_in) + xlogy(intra_pairs - m_in, 1 - p_in))
    if inter_pairs > 0:
        p_out = m_out / inter_pairs
        ll += float(xlogy(m_out, p_out) + xlogy(inter_pairs - m_out, 1 - p_out))
    return ll


def select_k(g: Graph, k_min: int, k_max: int, config: TrainConfig | None = None) -> int:
    """Bayesian-information-criterion style cluster-count selection.

    The fit term is a planted-partition profile log-likelihood of the hard
    assignment found by a briefly trained cluster net (the normalized-cut
    loss itself is degenerate at k=1, where it is identically zero), and the
    complexity penalty is k*ln(n). This is a labeled heuristic surrogate, not
    a statement about the true marginal likelihood.
    """
    if not (1 <= k_min <= k_max <= g.n):
        raise ValueError(f"need 1 <= k_min <= k_max <= n, got [{k_min}, {k_max}], n={g.n}")
    if k_min == k_max:
        return k_min
    if g.num_edges == 0:
        return k_min
    config = config or TrainConfig()
    lap = laplacian(g)
    best_k, best_score = k_min, np.inf
    for k in range(k_min, k_max + 1):
        if k == 1:
            labels = np.zeros(g.n, dtype=np.int64)
        else:
            cc = ClusterTrainConfig(
                epochs=config.select_epochs,
                lr=config.lr,
                lr_decay=config.lr_decay,
                dropout=config.dropout,
                varphi=config.varphi,
                hidden=config.hidden,
                seed=derive_seed(config.seed, 23, k),
            )
            params, _ = train_cluster_net([g], k, cc, laps=[lap])
            labels = ClusterAssignment.from_soft(
                cluster_forward(g, params).value
            ).labels()
        score = -2.0 * _partition_log_likelihood(g, labels) + k * math.log(g.n)
        if score < best_score - 1e-12:
            best_k, best_score = k, score
    return best_k


def eval_objective(g: Graph, g_hat: Graph, omega: float = 1.0) -> float:
    """Reporting objective: edge disagreement count plus omega times the
    feature smoothness Tr(X^T L_hat X) of the recovered structure."""
    if g.n != g_hat.n:
        raise ValueError(f"node-count mismatch: {g.n} vs {g_hat.n}")
    fidelity = len(g.edge_set() ^ g_hat.edge_set())
    if omega == 0.0:
        return float(fidelity)
    x = g.features
    smooth = 0.0
    if g.d > 0:
        for i, j in g_hat.edges:
            diff = x[i] - x[j]
            smooth += float(diff @ diff)
    return fidelity + omega * smooth
