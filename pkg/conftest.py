"""Shared fixtures and the --runslow switch."""

import numpy as np
import pytest

from hypergraph import Hypergraph


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def random_hypergraph(rng: np.random.Generator, max_nodes: int = 20, max_edges: int = 15,
                      max_size: int = 5) -> Hypergraph:
    """Small random hypergraph; some nodes may be isolated"""
    n = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(1, max_edges + 1))
    members = []
    for _ in range(m):
        size = int(rng.integers(1, min(max_size, n) + 1))
        members.append(rng.choice(n, size=size, replace=False).tolist())
    return Hypergraph.from_members(n, members)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle():
    """One hyperedge holding three nodes"""
    return Hypergraph.from_members(3, [[0, 1, 2]])


@pytest.fixture
def chain30():
    """30 nodes joined by 29 pairwise hyperedges"""
    return Hypergraph.from_members(30, [[i, i + 1] for i in range(29)])


@pytest.fixture
def two_triangles():
    """Hyperedges {0,1,2} and {2,3,4} sharing node 2"""
    return Hypergraph.from_members(5, [[0, 1, 2], [2, 3, 4]])
