"""
Ranking-quality and dismantling metrics
Kendall tau, top-f% rank overlap, s-efficiency and efficiency loss after node removal
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Sequence, Union

import numpy as np

from centrality import tie_broken_ranking
from config import EVAL_CONFIG
from hypergraph import Hypergraph, remove_nodes, restrict_hyperedges
from sline import hyperedge_s_distances

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    method: str
    tau: float
    overlap: Dict[int, float] = field(default_factory=dict)
    delta_eff: Dict[float, float] = field(default_factory=dict)
    params: Dict[str, object] = field(default_factory=dict)

    def to_json(self) -> dict:
        payload = asdict(self)
        payload['overlap'] = {str(k): v for k, v in self.overlap.items()}
        payload['delta_eff'] = {f"{k:.2f}": v for k, v in self.delta_eff.items()}
        return payload


def _count_inversions(values: List) -> int:
    """Strictly decreasing pairs, by merge sort; equal values are not inversions"""
    if len(values) < 2:
        return 0
    middle = len(values) // 2
    left, right = values[:middle], values[middle:]
    swaps = _count_inversions(left) + _count_inversions(right)
    i = j = k = 0
    while i < len(left) and j < len(right):
        if right[j] < left[i]:
            values[k] = right[j]
            swaps += len(left) - i
            j += 1
        else:
            values[k] = left[i]
            i += 1
        k += 1
    values[k:] = left[i:] + right[j:]
    return swaps


def _tied_pairs(counts: np.ndarray) -> int:
    return int(sum(int(c) * (int(c) - 1) // 2 for c in counts))


def kendall_tau(x: Sequence[float], y: Sequence[float], variant: str = EVAL_CONFIG['tau_variant']) -> float:
    """
    Kendall rank correlation in O(n log n)

    variant 'a' divides by all n(n-1)/2 pairs with ties counted in neither
    P nor Q; variant 'b' uses the tie-corrected denominator.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    n = x.size
    if n < 2:
        raise ValueError("kendall_tau needs at least 2 items")

    order = np.lexsort((y, x))
    y_sorted = [float(v) for v in y[order]]
    swaps = _count_inversions(y_sorted)

    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(np.unique(x, return_counts=True)[1])
    n2 = _tied_pairs(np.unique(y, return_counts=True)[1])
    n3 = _tied_pairs(np.unique(np.stack([x, y], axis=1), axis=0, return_counts=True)[1])
    difference = n0 - n1 - n2 + n3 - 2 * swaps

    if variant == 'a':
        return difference / n0
    if variant == 'b':
        denominator = math.sqrt((n0 - n1) * (n0 - n2))
        if denominator == 0:
            logger.warning("[WARN] tau-b undefined for a constant vector; returning 0")
            return 0.0
        return difference / denominator
    raise ValueError(f"unknown tau variant '{variant}'")


def _ranking_of(scores_or_vector) -> np.ndarray:
    ranking = getattr(scores_or_vector, 'ranking', None)
    if ranking is not None:
        return np.asarray(ranking)
    return tie_broken_ranking(np.asarray(scores_or_vector, dtype=np.float64))


def rank_overlap(truth, pred, f_percent: int) -> float:
    """Percentage of the true top-f% nodes also in the predicted top-f%"""
    true_ranking = _ranking_of(truth)
    pred_ranking = _ranking_of(pred)
    if true_ranking.size != pred_ranking.size:
        raise ValueError("rankings cover different node sets")
    n_top = (true_ranking.size * int(f_percent)) // 100
    if n_top == 0:
        raise ValueError(f"top {f_percent}% of {true_ranking.size} nodes is empty")
    common = np.intersect1d(true_ranking[:n_top], pred_ranking[:n_top]).size
    return common / n_top * 100.0


def overlap_curve(truth, pred, fractions: Sequence[int] = tuple(EVAL_CONFIG['overlap_f'])) -> Dict[int, float]:
    return {int(f): rank_overlap(truth, pred, f) for f in fractions}


def s_efficiency(h: Hypergraph, s: int) -> float:
    """Mean inverse s-distance over pairs of hyperedges with >= s nodes (1/inf = 0)"""
    eligible = np.flatnonzero(h.hyperedge_sizes >= s) if h.n_hyperedges else np.zeros(0, dtype=np.int64)
    count = eligible.size
    if count < 2:
        return 0.0
    dist = hyperedge_s_distances(restrict_hyperedges(h, eligible), s)
    upper = dist[np.triu_indices(count, k=1)]
    with np.errstate(divide='ignore'):
        inverse = 1.0 / upper
    return float(inverse.sum() / (count * (count - 1) / 2))


def efficiency_profile(h: Hypergraph, s_max: int = EVAL_CONFIG['s_max']) -> List[float]:
    return [s_efficiency(h, s) for s in range(1, s_max + 1)]


def removal_count(n_nodes: int, p: float) -> int:
    """floor(p * N), robust to binary representation of p"""
    return int(math.floor(p * n_nodes + 1e-9))


def delta_efficiency(h: Hypergraph, ranking: Sequence[int], p: float, s_max: int = EVAL_CONFIG['s_max'],
                     baseline: Union[None, Sequence[float]] = None) -> float:
    """
    Total s-efficiency lost (s = 1..s_max) after removing the top floor(pN) ranked nodes

    Args:
        baseline: Precomputed efficiency profile of h, reused across p values
    """
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"p must be in [0, 0.5], got {p}")
    before = list(baseline) if baseline is not None else efficiency_profile(h, s_max)
    victims = [int(v) for v in np.asarray(ranking)[:removal_count(h.n_nodes, p)]]
    if not victims:
        return 0.0
    reduced, _ = remove_nodes(h, victims)
    after = efficiency_profile(reduced, s_max)
    return float(sum(b - a for b, a in zip(before, after)))


def dismantling_curve(h: Hypergraph, ranking: Sequence[int],
                      fractions: Sequence[float] = tuple(EVAL_CONFIG['dismantle_p']),
                      s_max: int = EVAL_CONFIG['s_max']) -> Dict[float, float]:
    baseline = efficiency_profile(h, s_max)
    return {float(p): delta_efficiency(h, ranking, p, s_max, baseline) for p in fractions}


def evaluate_method(method: str, truth_labels: np.ndarray, pred, h: Hypergraph,
                    overlap_f: Sequence[int] = tuple(EVAL_CONFIG['overlap_f']),
                    dismantle_p: Sequence[float] = tuple(EVAL_CONFIG['dismantle_p']),
                    s_max: int = EVAL_CONFIG['s_max'], with_dismantling: bool = True) -> EvalReport:
    """tau, overlap curve and (optionally) dismantling curve for one method"""
    scores = np.asarray(getattr(pred, 'scores', pred), dtype=np.float64)
    report = EvalReport(
        method=method,
        tau=kendall_tau(scores, truth_labels),
        overlap=overlap_curve(truth_labels, scores, overlap_f),
        params=dict(getattr(pred, 'params', {}) or {}),
    )
    if with_dismantling:
        report.delta_eff = dismantling_curve(h, _ranking_of(scores), dismantle_p, s_max)
    logger.info(f"[OK] {method}: tau={report.tau:.4f}")
    return report
