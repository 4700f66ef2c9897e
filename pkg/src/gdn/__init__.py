"""Blind graph denoising via cluster masks and variational edge reconstruction."""

from .graphs import (
    Graph,
    LaplacianPair,
    NoiseSpec,
    inject_noise,
    laplacian,
    load_tu_dataset,
    modularity,
    parse_graph,
    serialize_graph,
    synth_cluster_graph,
)
from .cluster import ClusterAssignment, ClusterNetParams, assign_clusters, ncut_loss, train_cluster_net
from .gvae import GvaeParams, LatentState, MaskMatrices, ProbabilisticGraph, build_masks, decode_edge, encode, refine, reparameterize
from .training import TrainConfig, TrainReport, denoise, eval_objective, select_k, train
from .metrics import cluster_metrics, psnr, wl_features, wl_similarity
from .spectral import check_assumption, eig_laplacian, lemma_check, perturb_and_angle

__version__ = "0.1.0"
