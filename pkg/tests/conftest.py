import numpy as np
import pytest

from gdn.graphs import Graph


@pytest.fixture
def triangle():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def two_triangles():
    return Graph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])


@pytest.fixture
def two_triangles_bridge():
    """Two triangles joined by one bridge edge (2, 3)."""
    return Graph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)])


def random_graph(rng: np.random.Generator, n: int, p: float = 0.4, d: int = 0) -> Graph:
    edges = [
        (i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p
    ]
    feats = rng.standard_normal((n, d)) if d else None
    return Graph.from_edges(n, edges, feats)
