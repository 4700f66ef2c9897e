"""Unsupervised cluster-mask network: two GCN layers, two perceptron layers,
row softmax, trained with a differentiable normalized-cut loss plus a
balance penalty on C^T C.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .graphs import Graph, LaplacianPair, laplacian, make_rng, STREAM_INIT, STREAM_DROPOUT

HIDDEN_WIDTH = 32
DEFAULT_VARPHI = 0.5
DEFAULT_DROPOUT = 0.3
IDENTITY_FEATURE_CAP = 64


@dataclass(frozen=True)
class ClusterAssignment:
    """Soft (row-stochastic) and hardened (argmax, ties to lowest index)
    cluster memberships."""

    soft: np.ndarray
    hard: np.ndarray
    k: int

    @classmethod
    def from_soft(cls, soft: np.ndarray) -> "ClusterAssignment":
        soft = np.asarray(soft, dtype=np.float64)
        n, k = soft.shape
        hard = np.zeros_like(soft)
        hard[np.arange(n), soft.argmax(axis=1)] = 1.0
        return cls(soft=soft, hard=hard, k=k)

    def labels(self) -> np.ndarray:
        return self.hard.argmax(axis=1)


@dataclass
class ClusterNetParams:
    gnn_w1: Tensor
    gnn_w2: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.gnn_w1, self.gnn_w2, self.mlp_w1, self.mlp_b1,
                self.mlp_w2, self.mlp_b2]

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return [
            ("gnn_w1", self.gnn_w1),
            ("gnn_w2", self.gnn_w2),
            ("mlp_w1", self.mlp_w1),
            ("mlp_b1", self.mlp_b1),
            ("mlp_w2", self.mlp_w2),
            ("mlp_b2", self.mlp_b2),
        ]

    @classmethod
    def init(cls, d: int, k: int, seed: int, hidden: int = HIDDEN_WIDTH) -> "ClusterNetParams":
        rng = make_rng(seed, STREAM_INIT, 0)
        return cls(
            gnn_w1=ad.glorot(rng, d, hidden),
            gnn_w2=ad.glorot(rng, hidden, hidden),
            mlp_w1=ad.glorot(rng, hidden, hidden),
            mlp_b1=ad.parameter(np.zeros((1, hidden))),
            mlp_w2=ad.glorot(rng, hidden, k),
            mlp_b2=ad.parameter(np.zeros((1, k))),
        )


@lru_cache(maxsize=128)
def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """Symmetric self-loop normalization D~^{-1/2} (A + I) D~^{-1/2}."""
    a_tilde = g.adjacency() + sp.eye(g.n, format="csr")
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d_half = sp.diags(inv_sqrt)
    return (d_half @ a_tilde @ d_half).tocsr()


@lru_cache(maxsize=128)
def effective_features(g: Graph) -> np.ndarray:
    """Node features, or truncated identity columns when the graph carries
    no attributes."""
    if g.d > 0:
        return g.features
    width = min(g.n, IDENTITY_FEATURE_CAP)
    return np.eye(g.n)[:, :width]


def gcn_propagate(g: Graph, h_in, w, activate: bool = True) -> Tensor:
    """One graph-convolution layer; the last layer of a stack skips ReLU."""
    a_hat = normalized_adjacency(g)
    out = ad.matmul(ad.spmm(a_hat, ad.as_tensor(h_in)), ad.as_tensor(w))
    return ad.relu(out) if activate else out


def _dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    if p <= 0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return ad.mul(x, ad.constant(mask))


def cluster_forward(
    g: Graph,
    params: ClusterNetParams,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Soft assignment tensor; dropout only when a training rng is given."""
    x = ad.constant(effective_features(g))
    h = gcn_propagate(g, x, params.gnn_w1, activate=True)
    if dropout > 0 and rng is not None:
        h = _dropout(h, dropout, rng)
    h = gcn_propagate(g, h, params.gnn_w2, activate=False)
    if dropout > 0 and rng is not None:
        h = _dropout(h, dropout, rng)
    hidden = ad.relu(ad.add(ad.matmul(h, params.mlp_w1), params.mlp_b1))
    if dropout > 0 and rng is not None:
        hidden = _dropout(hidden, dropout, rng)
    logits = ad.add(ad.matmul(hidden, params.mlp_w2), params.mlp_b2)
    return ad.row_softmax(logits)


def assign_clusters(g: Graph, params: ClusterNetParams, k: int) -> ClusterAssignment:
    soft = cluster_forward(g, params).value
    if soft.shape[1] != k:
        raise ValueError(f"params produce {soft.shape[1]} clusters, expected {k}")
    return ClusterAssignment.from_soft(soft)


def ncut_loss(c, lap: LaplacianPair, varphi: float = DEFAULT_VARPHI):
    """Normalized-cut relaxation: (1/K) Tr((C^T L C) / (C^T D C)) plus
    varphi * ||(K/N) C^T C - I||_F^2, with epsilon-guarded division.

    Accepts a plain array (returns float) or a Tensor (returns a scalar
    Tensor wired for gradients).
    """
    is_tensor = isinstance(c, Tensor)
    ct = c if is_tensor else ad.constant(np.asarray(c, dtype=np.float64))
    n, k = ct.shape
    deg_col = ad.constant(lap.degree.astype(np.float64).reshape(n, 1))
    c_t = ad.transpose(ct)
    lc = ad.spmm(lap.laplacian.tocsr(), ct)
    ctlc = ad.matmul(c_t, lc)
    ctdc = ad.matmul(c_t, ad.mul(ct, deg_col))
    ratio = ad.div(ctlc, ad.add(ctdc, ad.constant(ad.EPS)))
    cut_term = ad.mul_scalar(ad.trace(ratio), 1.0 / k)
    gram = ad.mul_scalar(ad.matmul(c_t, ct), k / n)
    penalty = ad.frobenius_sq(ad.add(gram, ad.constant(-np.eye(k))))
    loss = ad.add(cut_term, ad.mul_scalar(penalty, varphi))
    return loss if is_tensor else float(loss.value)


def ncut_cut_term_bruteforce(g: Graph, hard: np.ndarray) -> float:
    """Independent oracle: per-cluster cut/volume by direct edge enumeration."""
    labels = hard.argmax(axis=1)
    k = hard.shape[1]
    deg = g.degrees()
    total = 0.0
    for c in range(k):
        members = labels == c
        if hard[:, c].sum() == 0:
            continue
        cut = sum(1 for i, j in g.edges if members[i] != members[j])
        vol = float(deg[members].sum())
        if vol > 0:
            total += cut / vol
    return total / k


@dataclass
class ClusterTrainConfig:
    epochs: int = 200
    lr: float = 0.01
    lr_decay: float = 0.99
    dropout: float = DEFAULT_DROPOUT
    varphi: float = DEFAULT_VARPHI
    hidden: int = HIDDEN_WIDTH
    seed: int = 0


def train_cluster_net(
    graphs: list[Graph],
    k: int,
    config: ClusterTrainConfig,
    params: ClusterNetParams | None = None,
    laps: list[LaplacianPair] | None = None,
) -> tuple[ClusterNetParams, list[float]]:
    """Minimize the mean normalized-cut loss over the graph list with Adam."""
    if not graphs:
        raise ValueError("need at least one graph")
    d = effective_features(graphs[0]).shape[1]
    if params is None:
        params = ClusterNetParams.init(d, k, config.seed, hidden=config.hidden)
    if laps is None:
        laps = [laplacian(g) for g in graphs]
    tensors = params.tensors()
    state = ad.AdamState.init(tensors)
    history = []
    for epoch in range(config.epochs):
        rng = make_rng(config.seed, STREAM_DROPOUT, epoch)
        loss = None
        for g, lap in zip(graphs, laps):
            soft = cluster_forward(g, params, dropout=config.dropout, rng=rng)
            term = ncut_loss(soft, lap, config.varphi)
            loss = term if loss is None else ad.add(loss, term)
        loss = ad.mul_scalar(loss, 1.0 / len(graphs))
        if not np.isfinite(loss.value):
            raise ad.DivergenceError(f"non-finite cluster loss at epoch {epoch}")
        grads = ad.gradients(loss, tensors)
        lr = config.lr * (config.lr_decay ** epoch)
        ad.adam_step(tensors, grads, state, lr)
        history.append(float(loss.value))
    return params, history


def save_params(path, params) -> None:
    ad.save_checkpoint(path, params.named_tensors())


def load_cluster_params(path) -> ClusterNetParams:
    data = ad.load_checkpoint(path)
    return ClusterNetParams(**{name: ad.parameter(arr) for name, arr in data.items()})
