import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from gdn.graphs import (
    Graph,
    GraphError,
    InfeasibleError,
    NoiseSpec,
    ParseError,
    inject_noise,
    laplacian,
    load_tu_dataset,
    modularity,
    non_edges,
    parse_graph,
    serialize_graph,
    synth_cluster_graph,
)

from conftest import random_graph


class TestGraphType:
    def test_rejects_self_loop(self):
        with pytest.raises(GraphError, match="self-loop"):
            Graph(n=3, edges=((1, 1),), features=np.zeros((3, 0)))

    def test_rejects_out_of_range(self):
        with pytest.raises(GraphError, match="out of range"):
            Graph(n=3, edges=((0, 5),), features=np.zeros((3, 0)))

    def test_rejects_duplicate(self):
        with pytest.raises(GraphError, match="duplicate"):
            Graph(n=3, edges=((0, 1), (0, 1)), features=np.zeros((3, 0)))

    def test_from_edges_canonicalizes(self):
        g = Graph.from_edges(4, [(2, 0), (3, 1), (0, 2)])
        assert g.edges == ((0, 2), (1, 3))

    def test_adjacency_symmetric_binary(self):
        rng = np.random.default_rng(0)
        g = random_graph(rng, 12)
        a = g.adjacency().toarray()
        assert np.array_equal(a, a.T)
        assert set(np.unique(a)) <= {0.0, 1.0}
        assert np.all(np.diag(a) == 0)

    def test_features_read_only(self, triangle):
        with pytest.raises(ValueError):
            triangle.features[:] = 1.0

    def test_equality_and_hash(self):
        g1 = Graph.from_edges(3, [(0, 1)], np.ones((3, 2)))
        g2 = Graph.from_edges(3, [(1, 0)], np.ones((3, 2)))
        assert g1 == g2
        assert hash(g1) == hash(g2)


class TestGdnFormat:
    def test_parse_example(self):
        g = parse_graph("3 2 0\n0 1\n1 2\n")
        assert g.n == 3 and g.edges == ((0, 1), (1, 2)) and g.d == 0

    def test_round_trip_canonical(self):
        t = "3 2 0\n0 1\n1 2\n"
        assert serialize_graph(parse_graph(t)) == t

    def test_endpoint_out_of_range_names_line(self):
        with pytest.raises(ParseError, match="line 2.*5 >= n=3"):
            parse_graph("3 1 0\n0 5\n")

    def test_malformed_header(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_graph("3 2\n0 1\n1 2\n")

    def test_duplicate_edge_names_line(self):
        with pytest.raises(ParseError, match="line 3.*duplicate"):
            parse_graph("3 2 0\n0 1\n0 1\n")

    def test_bytes_input(self):
        g = parse_graph(b"2 1 0\n0 1\n")
        assert g.num_edges == 1

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32), st.integers(2, 12), st.integers(0, 3))
    def test_round_trip_random(self, seed, n, d):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, n, d=d)
        text = serialize_graph(g)
        assert parse_graph(text) == g
        assert serialize_graph(parse_graph(text)) == text


class TestLaplacian:
    def test_triangle(self, triangle):
        lp = laplacian(triangle)
        dense = lp.laplacian.toarray()
        assert np.array_equal(lp.degree, [2, 2, 2])
        assert np.array_equal(np.diag(dense), [2, 2, 2])
        off = dense[~np.eye(3, dtype=bool)]
        assert np.all(off == -1)

    def test_empty_graph(self):
        g = Graph.from_edges(4, [])
        assert laplacian(g).laplacian.nnz == 0

    def test_path_row_sums_and_psd(self, path3):
        dense = laplacian(path3).laplacian.toarray()
        assert np.allclose(dense.sum(axis=0), 0)
        assert np.allclose(dense.sum(axis=1), 0)
        vals = np.linalg.eigvalsh(dense)
        assert vals.min() >= -1e-9
        assert abs(vals[0]) < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32), st.integers(2, 14))
    def test_row_sums_zero_random(self, seed, n):
        g = random_graph(np.random.default_rng(seed), n)
        dense = laplacian(g).laplacian.toarray()
        assert np.abs(dense.sum(axis=1)).max() <= 1e-9


class TestInjectNoise:
    def test_zero_noise_identity(self, two_triangles):
        assert inject_noise(two_triangles, NoiseSpec(0, 0, 123)) == two_triangles

    def test_exact_counts(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 10, p=0.45)
        m = g.num_edges
        noisy = inject_noise(g, NoiseSpec(0.1, 0.1, 9))
        adds = noisy.edge_set() - g.edge_set()
        dels = g.edge_set() - noisy.edge_set()
        assert len(adds) == m // 10 and len(dels) == m // 10
        assert noisy.num_edges == m

    def test_determinism(self):
        g = random_graph(np.random.default_rng(2), 15)
        a = inject_noise(g, NoiseSpec(0.2, 0.2, 77))
        b = inject_noise(g, NoiseSpec(0.2, 0.2, 77))
        assert a == b

    def test_pool_exhausted(self, triangle):
        with pytest.raises(GraphError, match="nonexistent pairs"):
            inject_noise(triangle, NoiseSpec(2.0, 0.0, 1))

    def test_features_unchanged(self):
        g = random_graph(np.random.default_rng(3), 8, d=3)
        noisy = inject_noise(g, NoiseSpec(0.5, 0.5, 4))
        assert np.array_equal(noisy.features, g.features)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32), st.floats(0, 0.5), st.floats(0, 0.5))
    def test_symmetric_difference_counts(self, seed, add_frac, del_frac):
        g = random_graph(np.random.default_rng(seed), 12, p=0.4)
        m = g.num_edges
        noisy = inject_noise(g, NoiseSpec(add_frac, del_frac, seed))
        expected = int(add_frac * m) + int(del_frac * m)
        assert len(g.edge_set() ^ noisy.edge_set()) == expected


class TestSynthClusterGraph:
    def test_modularity_within_band(self):
        g, labels = synth_cluster_graph(100, 4, 0.35, 8.0, seed=1)
        assert abs(modularity(g, labels) - 0.35) <= 0.05

    def test_single_block_zero_modularity(self):
        g, labels = synth_cluster_graph(30, 1, 0.0, 4.0, seed=2)
        assert modularity(g, labels) == pytest.approx(0.0, abs=1e-12)

    def test_determinism(self):
        a = synth_cluster_graph(40, 3, 0.3, 6.0, seed=9)
        b = synth_cluster_graph(40, 3, 0.3, 6.0, seed=9)
        assert a[0] == b[0] and np.array_equal(a[1], b[1])

    def test_infeasible_modularity(self):
        with pytest.raises(InfeasibleError):
            synth_cluster_graph(30, 2, 0.8, 6.0, seed=0)

    def test_features_shape_and_block_signal(self):
        g, labels = synth_cluster_graph(60, 3, 0.3, 6.0, seed=4)
        assert g.features.shape == (60, 3)
        onehot_guess = g.features.argmax(axis=1)
        assert (onehot_guess == labels).mean() > 0.95

    def test_strong_vs_weak_structure_separated(self):
        strong, weak = [], []
        for seed in range(20):
            g, lab = synth_cluster_graph(100, 4, 0.35, 8.0, seed=seed)
            strong.append(modularity(g, lab))
            g, lab = synth_cluster_graph(100, 4, 0.05, 8.0, seed=seed)
            weak.append(modularity(g, lab))
        assert np.mean(strong) - np.mean(weak) >= 0.2


class TestTuLoader:
    @staticmethod
    def _write_toy(tmp_path, with_labels=True):
        (tmp_path / "TOY_A.txt").write_text("1, 2\n2, 1\n2, 3\n3, 2\n4, 5\n5, 4\n")
        (tmp_path / "TOY_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
        if with_labels:
            (tmp_path / "TOY_node_labels.txt").write_text("0\n1\n0\n1\n1\n")

    def test_loads_graphs(self, tmp_path):
        self._write_toy(tmp_path)
        out = load_tu_dataset(tmp_path)
        assert len(out) == 2
        g0, _ = out[0]
        assert g0.n == 3 and g0.edges == ((0, 1), (1, 2))
        assert g0.features.shape == (3, 2)

    def test_missing_required_file(self, tmp_path):
        (tmp_path / "TOY_A.txt").write_text("1, 2\n")
        with pytest.raises(GraphError, match="missing required file"):
            load_tu_dataset(tmp_path)

    def test_empty_indicator(self, tmp_path):
        (tmp_path / "TOY_A.txt").write_text("")
        (tmp_path / "TOY_graph_indicator.txt").write_text("")
        with pytest.raises(GraphError, match="no graphs found"):
            load_tu_dataset(tmp_path)

    def test_cross_graph_edge_rejected(self, tmp_path):
        (tmp_path / "TOY_A.txt").write_text("1, 4\n4, 1\n")
        (tmp_path / "TOY_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
        with pytest.raises(GraphError, match="indicator/edge mismatch"):
            load_tu_dataset(tmp_path)


def test_non_edges_complement():
    g = Graph.from_edges(5, [(0, 1), (2, 3)])
    ne = set(non_edges(g))
    assert len(ne) == 10 - 2
    assert not (ne & g.edge_set())
