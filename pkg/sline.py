"""
s-line graphs and s-distances
Hyperedge overlap, s-line graph construction, hyperedge/node s-distances and s-diameter
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterator, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import csgraph

from config import SLINE_CONFIG
from hypergraph import Hypergraph

logger = logging.getLogger(__name__)

# Sentinel for "no s-path"; 1 / UNREACHABLE == 0 exactly
UNREACHABLE = np.inf


@dataclass(frozen=True)
class SLineGraph:
    s: int
    n_vertices: int
    edges: FrozenSet[Tuple[int, int]]
    adjacency: sparse.csr_matrix = field(repr=False, compare=False)


def overlap_matrix(h: Hypergraph) -> sparse.csr_matrix:
    """M x M matrix of pairwise intersection sizes |e_p & e_q| (H^T H)"""
    incidence = h.incidence
    return (incidence.T @ incidence).tocsr()


def build_s_line_graph(h: Hypergraph, s: int) -> SLineGraph:
    """Line graph whose vertices are hyperedges, adjacent when they share >= s nodes"""
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")

    overlap = overlap_matrix(h).tocoo()
    keep = (overlap.data >= s) & (overlap.row != overlap.col)
    rows, cols = overlap.row[keep], overlap.col[keep]

    adjacency = sparse.csr_matrix(
        (np.ones(rows.size, dtype=np.float64), (rows, cols)),
        shape=(h.n_hyperedges, h.n_hyperedges),
    )
    edges = frozenset((int(p), int(q)) for p, q in zip(rows, cols) if p < q)
    return SLineGraph(s=s, n_vertices=h.n_hyperedges, edges=edges, adjacency=adjacency)


def s_line_components(h: Hypergraph, s: int) -> Tuple[int, np.ndarray]:
    """Connected components of the s-line graph as (count, per-hyperedge label)"""
    graph = build_s_line_graph(h, s)
    if graph.n_vertices == 0:
        return 0, np.zeros(0, dtype=np.int64)
    count, labels = csgraph.connected_components(graph.adjacency, directed=False)
    return int(count), labels


def hyperedge_s_distances(h: Hypergraph, s: int) -> np.ndarray:
    """All-pairs shortest s-path lengths between hyperedges (BFS, inf if unreachable)"""
    graph = build_s_line_graph(h, s)
    if graph.n_vertices == 0:
        return np.zeros((0, 0))
    return csgraph.shortest_path(graph.adjacency, method='D', directed=False, unweighted=True)


def _node_distance_block(h: Hypergraph, edge_dist: np.ndarray, rows: Sequence[int], s: int) -> np.ndarray:
    """
    Node distances for a block of source rows

    d(i, j) = min over p in E_i, q in E_j of edge_dist[p, q] + 1, which is 1
    whenever i and j share a hyperedge (p == q). Only hyperedges with at
    least s members take part, so a node in no such hyperedge is unreachable.
    """
    n = h.n_nodes
    rows = np.asarray(rows, dtype=np.int64)
    block = np.full((rows.size, n), UNREACHABLE)
    eligible = np.flatnonzero(h.hyperedge_sizes >= s) if h.n_hyperedges else np.zeros(0, dtype=np.int64)
    if eligible.size == 0 or rows.size == 0:
        return block

    incidence = h.incidence.tocsc()[:, eligible].tocsr()
    indptr, indices = incidence.indptr, incidence.indices
    edge_dist = edge_dist[np.ix_(eligible, eligible)]

    # Columns: min over q in E_j of edge_dist[:, q]
    targets = np.flatnonzero(np.diff(indptr) > 0)
    edge_to_node = np.full((eligible.size, n), UNREACHABLE)
    if targets.size:
        gathered = edge_dist[:, indices]
        edge_to_node[:, targets] = np.minimum.reduceat(gathered, indptr[targets], axis=1)

    # Rows: min over p in E_i, plus one hop into the node
    sources = rows[np.diff(indptr)[rows] > 0]
    if sources.size:
        lengths = indptr[sources + 1] - indptr[sources]
        picked = np.concatenate([indices[indptr[i]:indptr[i + 1]] for i in sources])
        starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
        reduced = np.minimum.reduceat(edge_to_node[picked], starts, axis=0) + 1.0
        # rows arrive in ascending order
        block[np.searchsorted(rows, sources)] = reduced
    return block


def _off_diagonal_max(block: np.ndarray, rows: np.ndarray) -> float:
    masked = block.copy()
    masked[np.arange(rows.size), rows] = UNREACHABLE
    finite = masked[np.isfinite(masked)]
    return float(finite.max()) if finite.size else 0.0


@dataclass
class SLineDistances:
    """
    Hyperedge and node s-distances for one order s

    node_dist is None when N exceeds the materialization cap; rows are then
    computed on demand through row() / iter_rows().
    """
    s: int
    hypergraph: Hypergraph = field(repr=False)
    edge_dist: np.ndarray = field(repr=False)
    node_dist: Optional[np.ndarray] = field(repr=False)
    diameter: float
    row_block: int = SLINE_CONFIG['row_block']

    @property
    def materialized(self) -> bool:
        return self.node_dist is not None

    def row(self, i: int) -> np.ndarray:
        if self.node_dist is not None:
            return self.node_dist[i]
        return _node_distance_block(self.hypergraph, self.edge_dist, [i], self.s)[0]

    def iter_rows(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """Yield (row ids, distance block) pairs covering every node"""
        n = self.hypergraph.n_nodes
        for start in range(0, n, self.row_block):
            rows = np.arange(start, min(n, start + self.row_block))
            if self.node_dist is not None:
                yield rows, self.node_dist[rows]
            else:
                yield rows, _node_distance_block(self.hypergraph, self.edge_dist, rows, self.s)

    def dense(self) -> np.ndarray:
        """Full N x N node distance matrix, assembling it if it was not kept"""
        if self.node_dist is None:
            logger.warning(f"[WARN] Materializing {self.hypergraph.n_nodes}^2 node distances above the cap")
            return _node_distance_block(self.hypergraph, self.edge_dist, np.arange(self.hypergraph.n_nodes), self.s)
        return self.node_dist


def node_s_distance_matrix(h: Hypergraph, s: int, dense_cap: Optional[int] = None) -> SLineDistances:
    """
    Node s-distances lifted from hyperedge s-distances

    Args:
        h: Hypergraph
        s: Overlap order (>= 1)
        dense_cap: Largest N for which the N x N matrix is kept in memory

    Returns:
        SLineDistances with node_dist[i, i] = 1 for nodes in some hyperedge
    """
    if dense_cap is None:
        dense_cap = SLINE_CONFIG['dense_cap']

    edge_dist = hyperedge_s_distances(h, s)
    distances = SLineDistances(s=s, hypergraph=h, edge_dist=edge_dist, node_dist=None, diameter=0.0)

    if h.n_nodes <= dense_cap:
        node_dist = _node_distance_block(h, edge_dist, np.arange(h.n_nodes), s)
        distances.node_dist = node_dist
        distances.diameter = _off_diagonal_max(node_dist, np.arange(h.n_nodes))
    else:
        logger.info(f"[INFO] N={h.n_nodes} above cap {dense_cap}; node distances computed per row")
        diameter = 0.0
        for rows, block in distances.iter_rows():
            diameter = max(diameter, _off_diagonal_max(block, rows))
        distances.diameter = diameter

    logger.debug(f"s={s}: diameter {distances.diameter}")
    return distances


def s_distance_histogram(h: Hypergraph, s_max: int,
                         dense_cap: Optional[int] = None) -> Dict[int, Dict[int, int]]:
    """
    Counts of finite node distances over unordered pairs i < j, per s

    Returns:
        {s: {distance: count}} for s = 1..s_max
    """
    if s_max < 1:
        raise ValueError(f"s_max must be >= 1, got {s_max}")

    histogram: Dict[int, Dict[int, int]] = {}
    for s in range(1, s_max + 1):
        counts: Dict[int, int] = {}
        distances = node_s_distance_matrix(h, s, dense_cap)
        for rows, block in distances.iter_rows():
            upper = block[np.arange(h.n_nodes)[None, :] > rows[:, None]]
            values, freq = np.unique(upper[np.isfinite(upper)], return_counts=True)
            for value, count in zip(values, freq):
                counts[int(value)] = counts.get(int(value), 0) + int(count)
        histogram[s] = dict(sorted(counts.items()))
    return histogram


def histogram_frame(histogram: Dict[int, Dict[int, int]]) -> pd.DataFrame:
    """Flatten a histogram into (s, distance, count) rows"""
    records = [
        {'s': s, 'distance': distance, 'count': count}
        for s, counts in sorted(histogram.items())
        for distance, count in counts.items()
    ]
    return pd.DataFrame(records, columns=['s', 'distance', 'count'])
