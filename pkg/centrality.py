"""
Baseline node centralities
DC, HEDC, VC, HCC and HDF scores with deterministic tie-broken rankings
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import csgraph

from config import CENTRALITY_CONFIG
from hypergraph import Hypergraph, degrees
from sline import build_s_line_graph, hyperedge_s_distances, node_s_distance_matrix

logger = logging.getLogger(__name__)


def tie_broken_ranking(scores: np.ndarray) -> np.ndarray:
    """Node ids by descending score, equal scores in ascending id order"""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


@dataclass(frozen=True, eq=False)
class ScoreVector:
    method: str
    scores: np.ndarray
    params: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.scores)):
            raise ValueError(f"{self.method}: scores must be finite")

    @property
    def ranking(self) -> np.ndarray:
        return tie_broken_ranking(self.scores)

    def to_frame(self) -> pd.DataFrame:
        rank = np.empty(self.scores.size, dtype=np.int64)
        rank[self.ranking] = np.arange(1, self.scores.size + 1)
        return pd.DataFrame({'node_id': np.arange(self.scores.size), 'score': self.scores, 'rank': rank})


def distribute_to_nodes(h: Hypergraph, hyperedge_scores: np.ndarray) -> np.ndarray:
    """Node score = sum over its hyperedges of C(m) / K^E_m"""
    if h.n_hyperedges == 0:
        return np.zeros(h.n_nodes)
    shares = np.asarray(hyperedge_scores, dtype=np.float64) / h.hyperedge_sizes
    return np.asarray(h.incidence @ shares).ravel()


def size_bucket_matrix(h: Hypergraph, hyperedge_scores: np.ndarray) -> np.ndarray:
    """c[i, K] = (1/K) * sum of scores over hyperedges of size K containing i"""
    n_buckets = int(h.hyperedge_sizes.max()) + 1 if h.n_hyperedges else 1
    buckets = np.zeros((h.n_nodes, n_buckets))
    for edge_id, nodes in enumerate(h.members):
        size = len(nodes)
        for node in nodes:
            buckets[node, size] += hyperedge_scores[edge_id] / size
    return buckets


def dc(h: Hypergraph) -> ScoreVector:
    """Distinct-neighbour degree K^V"""
    return ScoreVector('dc', degrees(h).node_degree.astype(np.float64))


def hedc(h: Hypergraph) -> ScoreVector:
    """Hyperedge degree on the 1-line graph, shared evenly among members"""
    line = build_s_line_graph(h, 1)
    edge_degree = np.asarray(line.adjacency.sum(axis=1)).ravel()
    return ScoreVector('hedc', distribute_to_nodes(h, edge_degree))


def line_graph_eigenvector(adjacency: sparse.csr_matrix,
                           tol: float = CENTRALITY_CONFIG['vc_tol'],
                           max_iter: int = CENTRALITY_CONFIG['vc_max_iter']) -> np.ndarray:
    """
    Dominant eigenvector per connected component, each L2-normalized

    Power iteration runs on A + I so bipartite components converge; the
    eigenvectors are those of A. Isolated vertices score 1.
    """
    size = adjacency.shape[0]
    result = np.zeros(size)
    if size == 0:
        return result

    n_components, labels = csgraph.connected_components(adjacency, directed=False)
    for component in range(n_components):
        members = np.flatnonzero(labels == component)
        if members.size == 1:
            result[members] = 1.0
            continue
        shifted = adjacency[members][:, members] + sparse.identity(members.size, format='csr')
        vector = np.full(members.size, 1.0 / math.sqrt(members.size))
        for _ in range(max_iter):
            updated = shifted @ vector
            updated /= np.linalg.norm(updated)
            if np.linalg.norm(updated - vector) < tol:
                vector = updated
                break
            vector = updated
        else:
            logger.warning(f"[WARN] Power iteration hit {max_iter} iterations on a component of {members.size}")
        result[members] = vector

    if n_components > 1:
        logger.debug(f"Line graph has {n_components} components; eigenvectors computed per component")
    return result


def vc(h: Hypergraph, tol: float = CENTRALITY_CONFIG['vc_tol'],
       max_iter: int = CENTRALITY_CONFIG['vc_max_iter']) -> ScoreVector:
    """Hyperedge eigenvector centrality summed over per-size buckets"""
    line = build_s_line_graph(h, 1)
    hyperedge_scores = line_graph_eigenvector(line.adjacency, tol, max_iter)
    scores = size_bucket_matrix(h, hyperedge_scores).sum(axis=1)
    return ScoreVector('vc', scores, {'tol': tol, 'max_iter': max_iter})


def hyperedge_closeness(h: Hypergraph, s: int = 1) -> np.ndarray:
    """C(g) = (1/(M-1)) * sum over q != g of 1/d(g, q), with 1/inf = 0"""
    m = h.n_hyperedges
    if m < 2:
        return np.zeros(m)
    dist = hyperedge_s_distances(h, s)
    with np.errstate(divide='ignore'):
        inverse = 1.0 / dist
    np.fill_diagonal(inverse, 0.0)
    return inverse.sum(axis=1) / (m - 1)


def hcc(h: Hypergraph, s: int = CENTRALITY_CONFIG['hcc_s']) -> ScoreVector:
    """Hyperedge s-closeness shared evenly among members"""
    return ScoreVector('hcc', distribute_to_nodes(h, hyperedge_closeness(h, s)), {'s': s})


def fuzzy_entropy(row: np.ndarray, node: int, r: float, squared_membership: bool = True) -> float:
    """
    Local fuzzy entropy of one node from its distance row at a single order

    L = ceil(z / r) for the farthest finite distance z; shells l = 1..L are
    weighted by x(l) = exp(-l^2 / L^2).
    """
    others = np.delete(row, node)
    finite = others[np.isfinite(others)]
    if finite.size == 0:
        return 0.0
    z = finite.max()
    radius = int(math.ceil(z / r))
    if radius < 1:
        return 0.0

    shells = np.arange(1, radius + 1, dtype=np.float64)
    counts = np.bincount(finite[finite <= radius].astype(np.int64), minlength=radius + 1)[1:]
    membership = np.exp(-shells ** 2 / radius ** 2)
    weights = counts * (membership ** 2 if squared_membership else membership)
    total = weights.sum()
    if total <= 0:
        return 0.0
    p = weights / (math.e * total)
    positive = p > 0
    return float(np.sum(-p[positive] * np.log(p[positive]) / shells[positive] ** 2))


def hdf(h: Hypergraph, r: float = CENTRALITY_CONFIG['hdf_r'], s_m: int = CENTRALITY_CONFIG['hdf_s_m'],
        squared_membership: bool = CENTRALITY_CONFIG['hdf_squared_membership']) -> ScoreVector:
    """Mean local fuzzy entropy over orders s = 1..s_m"""
    if r <= 0:
        raise ValueError(f"r must be > 0, got {r}")
    if s_m < 1:
        raise ValueError(f"s_m must be >= 1, got {s_m}")

    total = np.zeros(h.n_nodes)
    for s in range(1, s_m + 1):
        distances = node_s_distance_matrix(h, s)
        for rows, block in distances.iter_rows():
            for offset, node in enumerate(rows):
                total[node] += fuzzy_entropy(block[offset], int(node), r, squared_membership)
    params = {'r': r, 's_m': s_m, 'squared_membership': squared_membership}
    return ScoreVector('hdf', total / s_m, params)


BASELINES: Dict[str, Callable[..., ScoreVector]] = {
    'dc': dc,
    'hedc': hedc,
    'vc': vc,
    'hcc': hcc,
    'hdf': hdf,
}


def rank_scores(h: Hypergraph, method: str, **params) -> ScoreVector:
    """Run a baseline by name with its keyword parameters"""
    if method not in BASELINES:
        raise ValueError(f"unknown method '{method}', expected one of {sorted(BASELINES)}")
    scores = BASELINES[method](h, **params)
    logger.info(f"[OK] {method.upper()} scores computed for {h.n_nodes} nodes")
    return scores
