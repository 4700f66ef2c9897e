import numpy as np
import pytest

from gdn import autodiff as ad
from gdn.graphs import Graph
from gdn.gvae import (
    GvaeParams,
    LatentState,
    ProbabilisticGraph,
    build_masks,
    decode_edge,
    decode_pairs,
    edge_targets,
    encode,
    gvae_loss,
    gvae_loss_expr,
    kl_divergence,
    load_gvae_params,
    probabilistic_graph,
    refine,
    reparameterize,
    save_gvae_params,
    unmasked_pools,
)
from gdn.cluster import effective_features

from conftest import random_graph


def hard_matrix(labels, k):
    labels = np.asarray(labels)
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def zero_params(d, latent=4, hidden=6):
    params = GvaeParams.init(d, seed=0, latent=latent, hidden=hidden)
    for t in params.tensors():
        t.value = np.zeros_like(t.value)
    return params


class TestEncode:
    def test_zero_weights_standard_prior(self, two_triangles):
        params = zero_params(6)
        state = encode(two_triangles, params)
        assert np.all(state.mu == 0)
        assert np.all(state.sigma == 1.0)

    def test_shapes(self):
        g = random_graph(np.random.default_rng(0), 6, d=3)
        params = GvaeParams.init(3, seed=1, latent=5, hidden=8)
        state = encode(g, params)
        assert state.mu.shape == (6, 5) and state.sigma.shape == (6, 5)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        g = random_graph(rng, 7, d=2)
        params = GvaeParams.init(2, seed=3, latent=4, hidden=6)
        perm = rng.permutation(7)
        permuted = Graph.from_edges(
            7, [(perm[i], perm[j]) for i, j in g.edges], g.features[np.argsort(perm)]
        )
        a = encode(g, params)
        b = encode(permuted, params)
        assert np.allclose(b.mu[perm], a.mu, atol=1e-9)
        assert np.allclose(b.sigma[perm], a.sigma, atol=1e-9)

    def test_sigma_clamped(self):
        g = random_graph(np.random.default_rng(1), 5, d=2)
        params = GvaeParams.init(2, seed=2, latent=3, hidden=4)
        params.gnn_w_logsig.value = np.full_like(params.gnn_w_logsig.value, 100.0)
        state = encode(g, params)
        assert state.sigma.max() <= 1e3


class TestReparameterize:
    def test_determinism(self):
        state = LatentState(mu=np.zeros((4, 3)), sigma=np.ones((4, 3)))
        assert np.array_equal(reparameterize(state, 5), reparameterize(state, 5))

    def test_degenerate_variance_pins_sample(self):
        mu = np.full((5, 4), 2.5)
        state = LatentState(mu=mu, sigma=np.full((5, 4), 1e-3))
        z = reparameterize(state, 1)
        assert np.abs(z - mu).max() <= 1e-2 * 6  # |eta| rarely exceeds 6

    def test_monte_carlo_mean(self):
        mu = np.array([[0.7, -1.2]])
        sigma = np.array([[0.5, 2.0]])
        draws = np.stack([
            reparameterize(LatentState(mu=mu, sigma=sigma), seed) for seed in range(10_000)
        ])
        se = sigma / np.sqrt(10_000)
        assert np.all(np.abs(draws.mean(axis=0) - mu) <= 3 * se)

    def test_rejects_nonpositive_sigma(self):
        state = LatentState(mu=np.zeros((1, 1)), sigma=np.zeros((1, 1)))
        with pytest.raises(ValueError):
            reparameterize(state, 0)


class TestDecode:
    def test_zero_weights_half(self, two_triangles):
        params = zero_params(6)
        state = encode(two_triangles, params)
        assert decode_edge(state.mu, effective_features(two_triangles), 0, 1, params) == 0.5

    def test_symmetry_exact(self):
        rng = np.random.default_rng(4)
        g = random_graph(rng, 5, d=3)
        params = GvaeParams.init(3, seed=9, latent=4, hidden=6)
        z = rng.standard_normal((5, 4))
        for i in range(5):
            for j in range(i + 1, 5):
                assert decode_edge(z, g.features, i, j, params) == decode_edge(
                    z, g.features, j, i, params
                )

    def test_outputs_in_unit_interval(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 5, d=2)
        params = GvaeParams.init(2, seed=11, latent=4, hidden=6)
        z = rng.standard_normal((5, 4))
        pairs = [(i, j) for i in range(5) for j in range(i + 1, 5)]
        vals = decode_pairs(z, g.features, pairs, params)
        assert np.all((vals > 0) & (vals < 1))

    def test_self_pair_rejected(self):
        params = GvaeParams.init(2, seed=0, latent=2, hidden=2)
        with pytest.raises(ValueError):
            decode_edge(np.zeros((3, 2)), np.zeros((3, 2)), 1, 1, params)


class TestBuildMasks:
    def test_single_cluster(self, two_triangles_bridge):
        g = two_triangles_bridge
        masks = build_masks(g, hard_matrix([0] * 6, 1))
        assert masks.s == g.edge_set()
        assert not masks.inter
        assert len(masks.intra_nonedge) == 15 - g.num_edges

    def test_singleton_clusters(self, two_triangles_bridge):
        g = two_triangles_bridge
        masks = build_masks(g, np.eye(6))
        assert not masks.s
        assert masks.inter == g.edge_set()
        assert not masks.intra_nonedge

    def test_two_triangle_bridge_partition(self, two_triangles_bridge):
        masks = build_masks(two_triangles_bridge, hard_matrix([0, 0, 0, 1, 1, 1], 2))
        assert len(masks.s) == 6
        assert masks.inter == frozenset({(2, 3)})
        assert not masks.intra_nonedge  # triangles are complete

    def test_pools_partition_edges(self):
        rng = np.random.default_rng(6)
        g = random_graph(rng, 9, p=0.5)
        labels = rng.integers(0, 3, 9)
        masks = build_masks(g, hard_matrix(labels, 3))
        assert masks.s | masks.inter == g.edge_set()
        assert not (masks.s & masks.inter)
        assert not (masks.intra_nonedge & g.edge_set())


class TestGvaeLoss:
    def test_prior_match_zero_kl(self):
        assert kl_divergence(np.zeros((3, 4)), np.ones((3, 4))) == 0.0

    def test_kl_closed_form(self):
        # KL(N(mu,1) || N(0,1)) = mu^2/2 per dimension
        assert kl_divergence(np.array([[2.0]]), np.array([[1.0]])) == pytest.approx(2.0)

    def test_perfect_reconstruction_near_zero(self, two_triangles_bridge):
        g = two_triangles_bridge
        c = hard_matrix([0, 0, 0, 1, 1, 1], 2)
        masks = build_masks(g, c)
        probs = ProbabilisticGraph(
            probs={e: (1.0 if e in masks.s else 0.0) for e in g.edges}
        )
        state = LatentState(mu=np.zeros((6, 4)), sigma=np.ones((6, 4)))
        assert gvae_loss(g, c, state, probs) == pytest.approx(0.0, abs=1e-8)

    def test_coverage_gap_raises(self, two_triangles):
        c = hard_matrix([0, 0, 0, 1, 1, 1], 2)
        state = LatentState(mu=np.zeros((6, 2)), sigma=np.ones((6, 2)))
        probs = ProbabilisticGraph(probs={(0, 1): 0.5})
        with pytest.raises(ValueError, match="coverage gap"):
            gvae_loss(two_triangles, c, state, probs)

    def test_expr_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        g = random_graph(rng, 8, p=0.5, d=3)
        c = hard_matrix(rng.integers(0, 2, 8), 2)
        masks = build_masks(g, c)
        params = GvaeParams.init(3, seed=21, latent=4, hidden=5)
        targets = edge_targets(g, masks)

        def f():
            loss, _, _ = gvae_loss_expr(g, targets, params, seed=5)
            return loss

        assert ad.gradient_check(f, params.tensors()) <= 1e-4


class TestRefine:
    @staticmethod
    def _setup(rng_seed=0):
        rng = np.random.default_rng(rng_seed)
        g = random_graph(rng, 10, p=0.4)
        labels = rng.integers(0, 2, 10)
        masks = build_masks(g, hard_matrix(labels, 2))
        probs = ProbabilisticGraph(
            probs={
                p: float(rng.random())
                for p in set(g.edges) | masks.intra_nonedge
            }
        )
        return g, masks, probs

    def test_zero_budget_identity(self):
        g, masks, probs = self._setup()
        result = refine(g, probs, masks, 0, seed=1)
        assert result.graph == g
        assert not result.deleted and not result.added

    def test_exact_counts(self):
        g, masks, probs = self._setup(3)
        assert len(masks.inter) >= 2 and len(masks.intra_nonedge) >= 2
        result = refine(g, probs, masks, 4, seed=2)
        assert len(result.deleted) == 2 and len(result.added) == 2
        diff = g.edge_set() ^ result.graph.edge_set()
        assert len(diff) == 4

    def test_pools_respected(self):
        g, masks, probs = self._setup(4)
        result = refine(g, probs, masks, 6, seed=3)
        assert set(result.deleted) <= masks.inter
        assert set(result.added) <= masks.intra_nonedge

    def test_truncation_reported(self, two_triangles_bridge):
        g = two_triangles_bridge
        masks = build_masks(g, hard_matrix([0, 0, 0, 1, 1, 1], 2))
        probs = ProbabilisticGraph(probs={e: 0.5 for e in g.edges})
        result = refine(g, probs, masks, 4, seed=5)
        assert len(result.deleted) == 1 and result.del_truncated
        assert len(result.added) == 0 and result.add_truncated
        assert result.graph.edge_set() == g.edge_set() - {(2, 3)}

    def test_odd_budget_rejected(self):
        g, masks, probs = self._setup()
        with pytest.raises(ValueError):
            refine(g, probs, masks, 3, seed=0)

    def test_determinism(self):
        g, masks, probs = self._setup(5)
        a = refine(g, probs, masks, 4, seed=9)
        b = refine(g, probs, masks, 4, seed=9)
        assert a.graph == b.graph and a.deleted == b.deleted and a.added == b.added

    def test_uniform_marginals(self):
        # uniform probabilities: every pool element selected ~ take/pool
        g = Graph.from_edges(9, [(i, 8) for i in range(8)])
        masks = build_masks(g, np.eye(9))  # all edges inter
        probs = ProbabilisticGraph(probs={e: 0.5 for e in g.edges})
        trials, take, pool = 5000, 2, 8
        counts = {e: 0 for e in g.edges}
        for t in range(trials):
            result = refine(g, probs, masks, 2 * take, seed=t)
            for e in result.deleted:
                counts[e] += 1
        expected = take / pool
        se = np.sqrt(expected * (1 - expected) / trials)
        for e, c in counts.items():
            assert abs(c / trials - expected) <= 3 * se


class TestProbabilisticGraph:
    def test_dump_format(self):
        pg = ProbabilisticGraph(probs={(0, 1): 0.125, (1, 2): 0.5})
        assert pg.dump() == "0 1 0.125000\n1 2 0.500000\n"

    def test_probabilistic_graph_coverage(self):
        rng = np.random.default_rng(10)
        g = random_graph(rng, 6, p=0.5, d=2)
        params = GvaeParams.init(2, seed=2, latent=3, hidden=4)
        state = encode(g, params)
        pairs = sorted(g.edges)
        pg = probabilistic_graph(g, params, state, pairs)
        assert set(pg.probs) == set(pairs)
        assert all(0 <= v <= 1 for v in pg.probs.values())


def test_unmasked_pools_cover_everything():
    g = Graph.from_edges(5, [(0, 1), (2, 3)])
    pools = unmasked_pools(g)
    assert pools.inter == g.edge_set()
    assert len(pools.intra_nonedge) == 8
    assert not pools.s


def test_gvae_checkpoint_round_trip(tmp_path):
    params = GvaeParams.init(3, seed=4, latent=4, hidden=5)
    save_gvae_params(tmp_path / "g.ckpt", params)
    loaded = load_gvae_params(tmp_path / "g.ckpt")
    for (na, a), (nb, b) in zip(params.named_tensors(), loaded.named_tensors()):
        assert na == nb and np.array_equal(a.value, b.value)
