"""
Hypergraph core
Immutable incidence structure, edge-list ingestion, degree accounting and node removal
"""

import logging
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

_TOKEN_SPLIT = re.compile(r'[\s,]+')


class HypergraphError(ValueError):
    """Raised for malformed or empty hypergraph input"""


@dataclass(frozen=True)
class Hypergraph:
    """
    Undirected hypergraph over nodes 0..n_nodes-1

    members[m] holds the sorted node ids of hyperedge m and incident[i] the
    sorted hyperedge ids containing node i. Duplicate hyperedges are allowed.
    """
    n_nodes: int
    members: Tuple[Tuple[int, ...], ...]
    incident: Tuple[Tuple[int, ...], ...]

    @classmethod
    def from_members(cls, n_nodes: int, members: Iterable[Iterable[int]]) -> 'Hypergraph':
        """Build from hyperedge member lists, deduplicating within each hyperedge"""
        if n_nodes < 0:
            raise HypergraphError(f"n_nodes must be >= 0, got {n_nodes}")

        normalized = []
        for index, edge in enumerate(members):
            nodes = tuple(sorted(set(int(v) for v in edge)))
            if not nodes:
                raise HypergraphError(f"hyperedge {index} is empty")
            if nodes[0] < 0 or nodes[-1] >= n_nodes:
                raise HypergraphError(f"hyperedge {index} references a node outside 0..{n_nodes - 1}")
            normalized.append(nodes)

        incident: List[List[int]] = [[] for _ in range(n_nodes)]
        for edge_id, nodes in enumerate(normalized):
            for node in nodes:
                incident[node].append(edge_id)

        return cls(
            n_nodes=n_nodes,
            members=tuple(normalized),
            incident=tuple(tuple(edges) for edges in incident),
        )

    @property
    def n_hyperedges(self) -> int:
        return len(self.members)

    @cached_property
    def incidence(self) -> sparse.csr_matrix:
        """N x M binary incidence matrix"""
        rows = [node for nodes in self.members for node in nodes]
        cols = [edge_id for edge_id, nodes in enumerate(self.members) for _ in nodes]
        data = np.ones(len(rows), dtype=np.float64)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_hyperedges))

    @cached_property
    def hyperedge_sizes(self) -> np.ndarray:
        return np.array([len(nodes) for nodes in self.members], dtype=np.int64)

    @cached_property
    def hyperdegrees(self) -> np.ndarray:
        return np.array([len(edges) for edges in self.incident], dtype=np.int64)


@dataclass(frozen=True)
class DegreeProfile:
    node_degree: np.ndarray       # K^V, distinct neighbours
    node_hyperdegree: np.ndarray  # K^H
    hyperedge_size: np.ndarray    # K^E


@dataclass(frozen=True)
class GraphStats:
    n: int
    m: int
    avg_degree: float
    avg_hyperdegree: float
    avg_hyperedge_size: float
    cv_degree: float

    def as_row(self) -> Dict[str, float]:
        return {
            'N': self.n,
            'M': self.m,
            'avg_degree': self.avg_degree,
            'avg_hyperdegree': self.avg_hyperdegree,
            'avg_hyperedge_size': self.avg_hyperedge_size,
            'cv_degree': self.cv_degree,
        }


def from_edge_list(lines: Iterable[str]) -> Tuple[Hypergraph, List[str]]:
    """
    Parse one hyperedge per line; tokens split on whitespace or commas

    Blank lines and lines starting with '#' are skipped. Node labels are
    remapped to 0..N-1 in first-seen order.

    Args:
        lines: Iterable of text lines

    Returns:
        (Hypergraph, labels) where labels[i] is the original label of node i
    """
    label_to_id: Dict[str, int] = {}
    labels: List[str] = []
    members: List[List[int]] = []

    for line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith('#'):
            continue
        edge = []
        for token in _TOKEN_SPLIT.split(stripped):
            if not token:
                continue
            if token not in label_to_id:
                label_to_id[token] = len(labels)
                labels.append(token)
            edge.append(label_to_id[token])
        if edge:
            members.append(edge)

    if not members:
        raise HypergraphError("no hyperedges")

    hypergraph = Hypergraph.from_members(len(labels), members)
    logger.debug(f"Parsed {hypergraph.n_nodes} nodes, {hypergraph.n_hyperedges} hyperedges")
    return hypergraph, labels


def to_edge_list(h: Hypergraph, labels: Optional[Sequence[str]] = None) -> List[str]:
    """Serialize hyperedges as space-separated lines"""
    if labels is None:
        return [' '.join(str(v) for v in nodes) for nodes in h.members]
    return [' '.join(str(labels[v]) for v in nodes) for nodes in h.members]


def parse_header(lines: Iterable[str]) -> Dict[str, str]:
    """Collect `key=value` pairs from leading '#' comment lines"""
    header: Dict[str, str] = {}
    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        if not stripped.startswith('#'):
            break
        for token in stripped.lstrip('#').split():
            if '=' in token:
                key, value = token.split('=', 1)
                header[key] = value
    return header


def read_hypergraph(path: str) -> Tuple[Hypergraph, List[str], Dict[str, str]]:
    """
    Load a hyperedge-list file

    Returns:
        (Hypergraph, labels, header) where header holds any `# key=value` metadata
    """
    with open(path, 'r', encoding='utf-8') as handle:
        lines = handle.readlines()
    hypergraph, labels = from_edge_list(lines)
    header = parse_header(lines)
    logger.info(f"[OK] Loaded {path}: N={hypergraph.n_nodes}, M={hypergraph.n_hyperedges}")
    return hypergraph, labels, header


def write_hypergraph(path: str, h: Hypergraph, header: Optional[str] = None,
                     labels: Optional[Sequence[str]] = None) -> str:
    """Write a hyperedge-list file with an optional '# ...' header line"""
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        if header:
            handle.write(f"# {header}\n")
        for line in to_edge_list(h, labels):
            handle.write(line + '\n')
    return path


def degrees(h: Hypergraph) -> DegreeProfile:
    """K^V (distinct neighbours), K^H and K^E for a hypergraph"""
    hyperdegree = h.hyperdegrees
    if h.n_nodes == 0:
        node_degree = np.zeros(0, dtype=np.int64)
    else:
        co_member = (h.incidence @ h.incidence.T).tocsr()
        co_member.eliminate_zeros()
        # Diagonal entry is present exactly when K^H >= 1
        node_degree = np.diff(co_member.indptr).astype(np.int64) - (hyperdegree > 0)
    return DegreeProfile(
        node_degree=node_degree,
        node_hyperdegree=hyperdegree.copy(),
        hyperedge_size=h.hyperedge_sizes.copy(),
    )


def stats(h: Hypergraph) -> GraphStats:
    """Summary statistics; CV uses the population standard deviation"""
    if h.n_nodes == 0:
        raise HypergraphError("cannot summarize a hypergraph with no nodes")

    profile = degrees(h)
    mean_degree = float(profile.node_degree.mean())
    cv = float(profile.node_degree.std() / mean_degree) if mean_degree > 0 else 0.0
    avg_size = float(profile.hyperedge_size.mean()) if h.n_hyperedges else 0.0

    return GraphStats(
        n=h.n_nodes,
        m=h.n_hyperedges,
        avg_degree=mean_degree,
        avg_hyperdegree=float(profile.node_hyperdegree.mean()),
        avg_hyperedge_size=avg_size,
        cv_degree=cv,
    )


def remove_nodes(h: Hypergraph, victims: Iterable[int]) -> Tuple[Hypergraph, np.ndarray]:
    """
    Delete nodes, shrink hyperedges and drop the ones left empty

    Surviving nodes are renumbered in ascending order of their old ids.

    Returns:
        (Hypergraph, kept) where kept[new_id] is the old id
    """
    removed = np.zeros(h.n_nodes, dtype=bool)
    for node in victims:
        if not 0 <= node < h.n_nodes:
            raise HypergraphError(f"node {node} is not in the hypergraph")
        removed[node] = True

    kept = np.flatnonzero(~removed)
    new_id = np.full(h.n_nodes, -1, dtype=np.int64)
    new_id[kept] = np.arange(kept.size)

    members = []
    for nodes in h.members:
        shrunk = [int(new_id[v]) for v in nodes if not removed[v]]
        if shrunk:
            members.append(shrunk)

    return Hypergraph.from_members(int(kept.size), members), kept


def permute_nodes(h: Hypergraph, perm: Sequence[int]) -> Hypergraph:
    """Relabel node i as perm[i]"""
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (h.n_nodes,) or not np.array_equal(np.sort(perm), np.arange(h.n_nodes)):
        raise HypergraphError("perm must be a permutation of 0..N-1")
    return Hypergraph.from_members(h.n_nodes, [[int(perm[v]) for v in nodes] for nodes in h.members])


def restrict_hyperedges(h: Hypergraph, edge_ids: Sequence[int]) -> Hypergraph:
    """Keep only the listed hyperedges, preserving the node set"""
    return Hypergraph.from_members(h.n_nodes, [h.members[m] for m in edge_ids])
