import numpy as np
import pytest

from stua.graph import UrbanGraph


@pytest.fixture
def line_graph():
    """Three regions on a line, unit spacing."""
    return UrbanGraph(("a", "b", "c"), np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))


@pytest.fixture
def pair_graph():
    return UrbanGraph(("a", "b"), np.array([[0.0, 0.0], [1.0, 0.0]]))


def random_graph(rng, n):
    coords = rng.uniform(0, 10, size=(n, 2))
    return UrbanGraph(tuple(f"r{i}" for i in range(n)), coords)
