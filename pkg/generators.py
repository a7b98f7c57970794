"""
Synthetic uniform hypergraph generators
ERH (random), WSH (small-world ring with rewiring) and SFH (scale-free weights)

All randomness comes from numpy's PCG64 bit generator seeded with GenSpec.rng_seed.
"""

import logging
from dataclasses import dataclass, asdict
from math import comb
from typing import Dict, List, Set, Tuple

import numpy as np

from config import GENERATOR_CONFIG
from hypergraph import Hypergraph, write_hypergraph

logger = logging.getLogger(__name__)

FAMILIES = ('erh', 'wsh', 'sfh')


class GenerationError(ValueError):
    """Raised when a generator spec is infeasible or sampling runs away"""


@dataclass(frozen=True)
class GenSpec:
    family: str
    n_nodes: int
    n_hyperedges: int
    hyperedge_size: int
    rewire_p: float = GENERATOR_CONFIG['rewire_p']
    gamma: float = GENERATOR_CONFIG['gamma']
    rng_seed: int = 0

    def validate(self):
        errors = []
        if self.family not in FAMILIES:
            errors.append(f"unknown family '{self.family}'")
        if self.n_nodes < 1:
            errors.append(f"n_nodes must be >= 1, got {self.n_nodes}")
        if self.n_hyperedges < 0:
            errors.append(f"n_hyperedges must be >= 0, got {self.n_hyperedges}")
        if not 1 <= self.hyperedge_size <= self.n_nodes:
            errors.append(f"hyperedge_size must be in [1, {self.n_nodes}], got {self.hyperedge_size}")
        if not 0.0 <= self.rewire_p <= 1.0:
            errors.append(f"rewire_p must be in [0, 1], got {self.rewire_p}")
        if self.gamma <= 1.0:
            errors.append(f"gamma must be > 1, got {self.gamma}")
        if errors:
            raise GenerationError("; ".join(errors))

    def header(self) -> str:
        return ' '.join(f"{key}={value}" for key, value in asdict(self).items())

    @classmethod
    def from_header(cls, header: Dict[str, str]) -> 'GenSpec':
        """Rebuild a spec from parsed `key=value` header tokens"""
        return cls(
            family=header['family'],
            n_nodes=int(header['n_nodes']),
            n_hyperedges=int(header['n_hyperedges']),
            hyperedge_size=int(header['hyperedge_size']),
            rewire_p=float(header.get('rewire_p', GENERATOR_CONFIG['rewire_p'])),
            gamma=float(header.get('gamma', GENERATOR_CONFIG['gamma'])),
            rng_seed=int(header.get('rng_seed', 0)),
        )


def default_spec(family: str, n_nodes: int, n_hyperedges: int, rng_seed: int) -> GenSpec:
    """Spec with the family's default hyperedge size"""
    return GenSpec(
        family=family,
        n_nodes=n_nodes,
        n_hyperedges=n_hyperedges,
        hyperedge_size=GENERATOR_CONFIG['hyperedge_size'][family],
        rng_seed=rng_seed,
    )


def _check_capacity(spec: GenSpec):
    if comb(spec.n_nodes, spec.hyperedge_size) < spec.n_hyperedges:
        raise GenerationError(
            f"cannot draw {spec.n_hyperedges} distinct {spec.hyperedge_size}-node hyperedges "
            f"from {spec.n_nodes} nodes"
        )


def gen_erh(spec: GenSpec, max_rejections: int = GENERATOR_CONFIG['max_rejections']) -> Hypergraph:
    """Each hyperedge is K^E distinct nodes drawn uniformly; duplicates rejected"""
    spec.validate()
    _check_capacity(spec)
    rng = np.random.default_rng(spec.rng_seed)

    seen: Set[Tuple[int, ...]] = set()
    members: List[Tuple[int, ...]] = []
    rejections = 0
    while len(members) < spec.n_hyperedges:
        edge = tuple(sorted(int(v) for v in rng.choice(spec.n_nodes, spec.hyperedge_size, replace=False)))
        if edge in seen:
            rejections += 1
            if rejections > max_rejections:
                raise GenerationError("rejection sampling did not converge")
            continue
        rejections = 0
        seen.add(edge)
        members.append(edge)

    return Hypergraph.from_members(spec.n_nodes, members)


def gen_wsh(spec: GenSpec, max_rejections: int = GENERATOR_CONFIG['max_rejections']) -> Hypergraph:
    """
    Ring of consecutive K^E-node windows, then one rewiring pass

    Hyperedges are visited in index order and their original members in
    ascending id; each member is swapped with probability p for a uniform
    node outside the hyperedge. A replacement that would duplicate another
    hyperedge is resampled.
    """
    spec.validate()
    n, m, k, p = spec.n_nodes, spec.n_hyperedges, spec.hyperedge_size, spec.rewire_p
    if m > n:
        raise GenerationError(f"ring construction needs n_hyperedges <= n_nodes ({m} > {n})")
    if k == n and m > 1:
        raise GenerationError("hyperedge_size == n_nodes allows a single distinct hyperedge")
    if k == 1 and p > 0 and m >= n:
        raise GenerationError("singleton rewiring needs a free node (n_hyperedges < n_nodes)")

    rng = np.random.default_rng(spec.rng_seed)
    edges = [set((i + offset) % n for offset in range(k)) for i in range(m)]
    keys = [frozenset(edge) for edge in edges]
    counts: Dict[frozenset, int] = {}
    for key in keys:
        counts[key] = counts.get(key, 0) + 1

    for index in range(m):
        for node in sorted(edges[index]):
            if rng.random() >= p:
                continue
            outside = np.array(sorted(set(range(n)) - edges[index]), dtype=np.int64)
            if outside.size == 0:
                continue
            for _ in range(max_rejections):
                replacement = int(outside[rng.integers(outside.size)])
                candidate = frozenset(edges[index] - {node} | {replacement})
                if counts.get(candidate, 0) == 0:
                    break
            else:
                raise GenerationError("rewiring could not find a non-duplicate replacement")
            counts[keys[index]] -= 1
            edges[index] = set(candidate)
            keys[index] = candidate
            counts[candidate] = counts.get(candidate, 0) + 1

    return Hypergraph.from_members(n, [sorted(edge) for edge in edges])


def sfh_weights(n_nodes: int, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """Node selection weights from degrees drawn with P(k) proportional to k^-gamma on 1..N-1"""
    support = np.arange(1, max(2, n_nodes), dtype=np.float64)
    pmf = support ** (-gamma)
    pmf /= pmf.sum()
    degree = rng.choice(support, size=n_nodes, p=pmf)
    return degree / degree.sum()


def gen_sfh(spec: GenSpec, max_rejections: int = GENERATOR_CONFIG['max_rejections']) -> Hypergraph:
    """Weighted sampling without replacement under power-law node weights"""
    spec.validate()
    _check_capacity(spec)
    rng = np.random.default_rng(spec.rng_seed)
    weights = sfh_weights(spec.n_nodes, spec.gamma, rng)
    # Nodes with weight 0 can never be chosen; guard the without-replacement draw
    if np.count_nonzero(weights) < spec.hyperedge_size:
        raise GenerationError("degree sequence too concentrated")

    seen: Set[Tuple[int, ...]] = set()
    members: List[Tuple[int, ...]] = []
    rejections = 0
    while len(members) < spec.n_hyperedges:
        edge = tuple(sorted(int(v) for v in rng.choice(spec.n_nodes, spec.hyperedge_size, replace=False, p=weights)))
        if edge in seen:
            rejections += 1
            if rejections > max_rejections:
                raise GenerationError("degree sequence too concentrated")
            continue
        rejections = 0
        seen.add(edge)
        members.append(edge)

    return Hypergraph.from_members(spec.n_nodes, members)


_GENERATORS = {'erh': gen_erh, 'wsh': gen_wsh, 'sfh': gen_sfh}


def generate(spec: GenSpec) -> Hypergraph:
    """Dispatch on spec.family"""
    spec.validate()
    hypergraph = _GENERATORS[spec.family](spec)
    logger.info(f"[OK] Generated {spec.family.upper()}: N={hypergraph.n_nodes}, "
                f"M={hypergraph.n_hyperedges}, K^E={spec.hyperedge_size}, seed={spec.rng_seed}")
    return hypergraph


def write_generated(path: str, spec: GenSpec, h: Hypergraph) -> str:
    """Hyperedge-list file with the GenSpec fields as a header comment"""
    return write_hypergraph(path, h, header=spec.header())
