"""
Hypergraph SIR contagion
Monte Carlo outbreak simulation, per-node influence labels and an exact small-instance oracle

Each infected node activates one hyperedge per step, chosen uniformly from the
hyperedges it belongs to; every susceptible member of that hyperedge is
infected independently with probability beta. The node then recovers with
probability gamma in the same step. Updates are synchronous.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import SIR_CONFIG
from hypergraph import Hypergraph

logger = logging.getLogger(__name__)

SUSCEPTIBLE, INFECTED, RECOVERED = 0, 1, 2

# chooser(step, node, incident_hyperedges) -> hyperedge id
HyperedgeChooser = Callable[[int, int, Tuple[int, ...]], int]


class BudgetExceededError(RuntimeError):
    """Raised when exact enumeration would exceed its transition budget"""


@dataclass(frozen=True)
class SirParams:
    beta: float
    gamma: float = SIR_CONFIG['gamma']
    max_steps: int = SIR_CONFIG['max_steps']

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.max_steps < 0:
            raise ValueError(f"max_steps must be >= 0, got {self.max_steps}")


@dataclass
class SirResult:
    outbreak_size: int
    steps: int
    timeline: Optional[List[Tuple[int, int, int]]] = None
    infection_order: Optional[List[List[int]]] = None


@dataclass
class InfluenceLabels:
    """Mean outbreak size per labelled node"""
    nodes: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    replicas: int
    params: SirParams
    master_seed: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'node_id': self.nodes, 'label': self.values, 'stderr': self.stderr})

    def provenance(self) -> dict:
        return {
            'beta': self.params.beta,
            'gamma': self.params.gamma,
            'max_steps': self.params.max_steps,
            'replicas': self.replicas,
            'master_seed': self.master_seed,
        }

    def restrict(self, nodes: Sequence[int]) -> 'InfluenceLabels':
        position = {int(node): k for k, node in enumerate(self.nodes)}
        picks = np.array([position[int(node)] for node in nodes], dtype=np.int64)
        return InfluenceLabels(
            nodes=self.nodes[picks], values=self.values[picks], stderr=self.stderr[picks],
            replicas=self.replicas, params=self.params, master_seed=self.master_seed,
        )


def replica_rng(master_seed: int, node: int, replica: int) -> np.random.Generator:
    """Private stream for one (node, replica) task"""
    return np.random.default_rng([master_seed, node, replica])


def sir_run(h: Hypergraph, seed_node: int, params: SirParams, rng: np.random.Generator,
            record_timeline: bool = False,
            choose_hyperedge: Optional[HyperedgeChooser] = None) -> SirResult:
    """
    One outbreak from a single seed node

    Args:
        h: Hypergraph
        seed_node: Initially infected node
        params: SIR parameters
        rng: Random stream (hyperedge choices and coins)
        record_timeline: Keep (S, I, R) counts and newly infected nodes per step
        choose_hyperedge: Optional override of the uniform hyperedge choice

    Returns:
        SirResult
    """
    if not 0 <= seed_node < h.n_nodes:
        raise ValueError(f"seed node {seed_node} is not in the hypergraph")

    n = h.n_nodes
    beta, gamma = params.beta, params.gamma
    state = [SUSCEPTIBLE] * n
    state[seed_node] = INFECTED
    infected = [seed_node]
    recovered = 0

    timeline = [(n - 1, 1, 0)] if record_timeline else None
    order = [[seed_node]] if record_timeline else None
    steps = 0

    while infected and (params.max_steps == 0 or steps < params.max_steps):
        steps += 1
        newly: List[int] = []
        for node in infected:
            options = h.incident[node]
            if not options:
                continue
            if choose_hyperedge is None:
                edge = options[int(rng.integers(len(options)))]
            else:
                edge = choose_hyperedge(steps, node, options)
            for member in h.members[edge]:
                if state[member] == SUSCEPTIBLE and rng.random() < beta:
                    state[member] = INFECTED
                    newly.append(member)

        still_infected = []
        for node in infected:
            if gamma >= 1.0 or rng.random() < gamma:
                state[node] = RECOVERED
                recovered += 1
            else:
                still_infected.append(node)

        infected = sorted(still_infected + newly)
        if record_timeline:
            timeline.append((n - len(infected) - recovered, len(infected), recovered))
            order.append(sorted(newly))

    outbreak = n - state.count(SUSCEPTIBLE)
    return SirResult(outbreak_size=outbreak, steps=steps, timeline=timeline, infection_order=order)


def _label_node(task: Tuple[Hypergraph, int, SirParams, int, int]) -> Tuple[float, float]:
    h, node, params, replicas, master_seed = task
    sizes = np.empty(replicas, dtype=np.float64)
    for replica in range(replicas):
        sizes[replica] = sir_run(h, node, params, replica_rng(master_seed, node, replica)).outbreak_size
    stderr = float(sizes.std(ddof=1) / np.sqrt(replicas)) if replicas > 1 else 0.0
    return float(sizes.mean()), stderr


def influence_labels(h: Hypergraph, params: SirParams, replicas: int = SIR_CONFIG['replicas'],
                     master_seed: int = SIR_CONFIG['master_seed'],
                     nodes: Optional[Sequence[int]] = None, threads: int = 1) -> InfluenceLabels:
    """
    Mean outbreak size with each node as the single seed

    Replica r of node v draws from the stream (master_seed, v, r), so the
    result does not depend on the number of worker processes.
    """
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")

    node_ids = np.arange(h.n_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
    tasks = [(h, int(node), params, replicas, master_seed) for node in node_ids]

    logger.info(f"[INFO] Simulating {len(tasks)} seed nodes x {replicas} replicas "
                f"(beta={params.beta}, gamma={params.gamma}, threads={threads})")
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_label_node, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        results = [_label_node(task) for task in tasks]

    values = np.array([mean for mean, _ in results], dtype=np.float64)
    stderr = np.array([err for _, err in results], dtype=np.float64)
    logger.info(f"[OK] Labels ready: mean {values.mean() if values.size else 0:.3f}, "
                f"max {values.max() if values.size else 0:.3f}")
    return InfluenceLabels(nodes=node_ids, values=values, stderr=stderr,
                           replicas=replicas, params=params, master_seed=master_seed)


class _ExactChain:
    """Expected final outbreak over the Markov chain of node states"""

    def __init__(self, h: Hypergraph, params: SirParams, budget: int):
        self.h = h
        self.beta = params.beta
        self.gamma = params.gamma
        self.budget = budget
        self.work = 0
        self.memo: Dict[Tuple[int, ...], float] = {}

    def _charge(self, amount: int = 1):
        self.work += amount
        if self.work > self.budget:
            raise BudgetExceededError(f"exact enumeration exceeded {self.budget} transitions")

    def transitions(self, state: Tuple[int, ...]) -> Dict[Tuple[int, ...], float]:
        infected = [i for i, value in enumerate(state) if value == INFECTED]
        option_lists = [self.h.incident[i] or (None,) for i in infected]
        outgoing: Dict[Tuple[int, ...], float] = {}

        for choice in product(*option_lists):
            p_choice = 1.0
            exposure: Dict[int, int] = {}
            for node, edge in zip(infected, choice):
                if edge is None:
                    continue
                p_choice /= len(self.h.incident[node])
                for member in self.h.members[edge]:
                    if state[member] == SUSCEPTIBLE:
                        exposure[member] = exposure.get(member, 0) + 1

            exposed = sorted(exposure)
            p_hit = [1.0 - (1.0 - self.beta) ** exposure[j] for j in exposed]

            for hits in product((False, True), repeat=len(exposed)):
                p_infect = p_choice
                for hit, p in zip(hits, p_hit):
                    p_infect *= p if hit else 1.0 - p
                if p_infect == 0.0:
                    continue
                recover_options = ((True,),) * len(infected) if self.gamma >= 1.0 else \
                    ((False, True),) * len(infected)
                for recoveries in product(*recover_options):
                    self._charge()
                    p_total = p_infect
                    nxt = list(state)
                    for node, recovers in zip(infected, recoveries):
                        if self.gamma < 1.0:
                            p_total *= self.gamma if recovers else 1.0 - self.gamma
                        if recovers:
                            nxt[node] = RECOVERED
                    for hit, j in zip(hits, exposed):
                        if hit:
                            nxt[j] = INFECTED
                    if p_total == 0.0:
                        continue
                    key = tuple(nxt)
                    outgoing[key] = outgoing.get(key, 0.0) + p_total
        return outgoing

    def expected(self, state: Tuple[int, ...]) -> float:
        if state in self.memo:
            return self.memo[state]
        if INFECTED not in state:
            value = float(sum(1 for v in state if v != SUSCEPTIBLE))
        else:
            outgoing = self.transitions(state)
            p_stay = outgoing.pop(state, 0.0)
            value = sum(p * self.expected(nxt) for nxt, p in outgoing.items()) / (1.0 - p_stay)
        self.memo[state] = value
        return value


def exact_influence_small(h: Hypergraph, seed_node: int, params: SirParams,
                          budget: int = SIR_CONFIG['exact_budget'],
                          max_nodes: int = SIR_CONFIG['exact_max_nodes']) -> float:
    """
    Exact expected outbreak size by enumerating hyperedge choices and coins

    The chain is treated as uncapped (max_steps is ignored).

    Raises:
        BudgetExceededError: instance too large to enumerate
    """
    if h.n_nodes > max_nodes:
        raise BudgetExceededError(f"exact enumeration supports N <= {max_nodes}, got {h.n_nodes}")
    if not 0 <= seed_node < h.n_nodes:
        raise ValueError(f"seed node {seed_node} is not in the hypergraph")

    start = [SUSCEPTIBLE] * h.n_nodes
    start[seed_node] = INFECTED
    return _ExactChain(h, params, budget).expected(tuple(start))
