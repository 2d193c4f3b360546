import pytest

from sospath import Graph, leaf, parallel, series, build_series_parallel


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running checks")


@pytest.fixture
def parallel_pair():
    """Two parallel s-t edges with costs e_1 and e_2."""
    return Graph.from_edges(2, [(0, 1, (1, 0)), (0, 1, (0, 1))], 0, 1)


@pytest.fixture
def chain3():
    return Graph.from_edges(4, [(0, 1, 1), (1, 2, 2), (2, 3, 3)], 0, 3)


@pytest.fixture
def diamond():
    """Two disjoint 2-edge routes with costs e_1,e_2 and e_3,e_4."""
    edges = [(0, 1, (1, 0, 0, 0)), (1, 3, (0, 1, 0, 0)),
             (0, 2, (0, 0, 1, 0)), (2, 3, (0, 0, 0, 1))]
    return Graph.from_edges(4, edges, 0, 3)


def h_block():
    return parallel(leaf(1), leaf(0))


@pytest.fixture
def g1_2():
    return build_series_parallel(series(h_block(), h_block()))
