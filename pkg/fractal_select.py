"""
Representative-node selection for fine-tuning

Global fractal dimension from greedy box covering, per-node local dimensions
from neighbourhood growth, degree-profile proportions, the similarity and
relevance matrices, and greedy pruning of the thresholded relevance graph.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats as scipy_stats

from centrality import tie_broken_ranking
from config import FRACTAL_CONFIG
from hypergraph import Hypergraph, degrees
from sline import SLineDistances, node_s_distance_matrix

logger = logging.getLogger(__name__)


class DegenerateDiameterError(ValueError):
    """Raised when the s-diameter is too small to fit a dimension"""


@dataclass
class FractalEstimate:
    d_f: float
    intercept: float
    fit_points: List[Tuple[float, float]]
    residual: float
    box_counts: List[int]
    degenerate: bool = False


@dataclass
class LocalFractalProfile:
    d_l: np.ndarray
    intercept: np.ndarray
    radii: np.ndarray
    neighborhood_sizes: np.ndarray  # N x len(radii)
    single_point: bool = False


@dataclass
class DegreeProportions:
    matrix: np.ndarray        # N x (max degree + 1)
    node_degree: np.ndarray
    r_l: int
    flagged: np.ndarray       # nodes whose neighbourhood carries no d_l mass


@dataclass
class RelevanceMatrix:
    S: np.ndarray
    R: np.ndarray


@dataclass
class SelectionResult:
    node_ids: List[int]
    theta: float
    n_filled: int = 0
    s: Optional[int] = None
    theta_quantile: Optional[float] = None
    d_f: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    @property
    def filled(self) -> bool:
        return self.n_filled > 0

    def to_json(self) -> dict:
        return {
            's': self.s,
            'theta_quantile': self.theta_quantile,
            'd_f': self.d_f,
            'node_ids': [int(v) for v in self.node_ids],
        }


def _distances(h: Hypergraph, s: int, distances: Optional[SLineDistances]) -> SLineDistances:
    return distances if distances is not None else node_s_distance_matrix(h, s)


def greedy_box_cover(dist: np.ndarray, r_b: float, inclusive: bool = FRACTAL_CONFIG['box_inclusive']) -> int:
    """
    Greedy box count for one radius

    Any node may be a box centre; the centre covering the most uncovered
    nodes is taken first, ties by ascending id. A box holds the nodes at
    distance <= r_b (inclusive) or < r_b (exclusive) from its centre.
    """
    n = dist.shape[0]
    if n == 0:
        return 0
    within = dist <= r_b if inclusive else dist < r_b
    within = within | np.eye(n, dtype=bool)

    uncovered = np.ones(n, dtype=bool)
    gains = within.sum(axis=1).astype(np.int64)
    boxes = 0
    while uncovered.any():
        centre = int(np.argmax(gains))
        newly = within[centre] & uncovered
        uncovered &= ~newly
        gains -= within[:, newly].sum(axis=1)
        boxes += 1
    return boxes


def box_cover_counts(dist: np.ndarray, radii: Sequence[float],
                     inclusive: bool = FRACTAL_CONFIG['box_inclusive']) -> List[int]:
    """Box counts over ascending radii; a cover valid at r stays valid at larger r"""
    counts: List[int] = []
    best = None
    for r_b in radii:
        count = greedy_box_cover(dist, r_b, inclusive)
        best = count if best is None else min(best, count)
        counts.append(best)
    return counts


def box_cover_count(dist: np.ndarray, r_b: int, inclusive: bool = FRACTAL_CONFIG['box_inclusive']) -> int:
    """Number of boxes of radius r_b needed to cover every node"""
    if dist.shape[0] == 0:
        return 0
    return box_cover_counts(dist, range(1, int(r_b) + 1), inclusive)[-1]


def fit_fractal_dimension(radii: Sequence[float], counts: Sequence[int]) -> FractalEstimate:
    """Least squares of ln B on ln r_B; d_f is minus the slope"""
    if len(radii) < 2:
        raise DegenerateDiameterError("degenerate diameter: need at least two radii")
    x = np.log(np.asarray(radii, dtype=np.float64))
    y = np.log(np.asarray(counts, dtype=np.float64))
    fit = scipy_stats.linregress(x, y)
    residual = float(np.sum((y - (fit.intercept + fit.slope * x)) ** 2))
    degenerate = bool(np.all(np.asarray(counts) == counts[0]))
    if degenerate:
        logger.warning("[WARN] All box counts are equal; fractal dimension is 0")
    return FractalEstimate(
        d_f=float(-fit.slope) if not degenerate else 0.0,
        intercept=float(fit.intercept),
        fit_points=[(float(a), float(b)) for a, b in zip(x, y)],
        residual=residual,
        box_counts=[int(c) for c in counts],
        degenerate=degenerate,
    )


def global_fractal_dim(h: Hypergraph, s: int, distances: Optional[SLineDistances] = None,
                       inclusive: bool = FRACTAL_CONFIG['box_inclusive']) -> FractalEstimate:
    """
    Box-covering fractal dimension at order s over radii 1..s-diameter

    Raises:
        DegenerateDiameterError: s-diameter below 2
    """
    distances = _distances(h, s, distances)
    diameter = int(distances.diameter)
    if diameter < 2:
        raise DegenerateDiameterError(f"degenerate diameter: s-diameter {diameter} at s={s}")

    radii = list(range(1, diameter + 1))
    counts = box_cover_counts(distances.dense(), radii, inclusive)
    estimate = fit_fractal_dimension(radii, counts)
    logger.info(f"[OK] Global fractal dimension at s={s}: d_f={estimate.d_f:.4f} "
                f"over {len(radii)} radii")
    return estimate


def local_fractal_dims(h: Hypergraph, s: int, distances: Optional[SLineDistances] = None) -> LocalFractalProfile:
    """Per-node slope of |N_i^r| against r for r = 1..floor(diameter / 2)"""
    distances = _distances(h, s, distances)
    diameter = int(distances.diameter)
    radii = np.arange(1, diameter // 2 + 1)
    if radii.size == 0:
        raise DegenerateDiameterError(f"degenerate diameter: s-diameter {diameter} at s={s}")

    dist = distances.dense().copy()
    np.fill_diagonal(dist, np.inf)
    sizes = np.stack([(dist <= r).sum(axis=1) for r in radii], axis=1).astype(np.float64)

    if radii.size == 1:
        logger.warning("[WARN] Single radius in the local grid; d_l falls back to |N_i^1|")
        return LocalFractalProfile(d_l=sizes[:, 0].copy(), intercept=np.zeros(h.n_nodes),
                                   radii=radii, neighborhood_sizes=sizes, single_point=True)

    x = radii.astype(np.float64)
    x_centred = x - x.mean()
    slope = (sizes - sizes.mean(axis=1, keepdims=True)) @ x_centred / np.dot(x_centred, x_centred)
    intercept = sizes.mean(axis=1) - slope * x.mean()
    return LocalFractalProfile(d_l=slope, intercept=intercept, radii=radii, neighborhood_sizes=sizes)


def degree_profile_proportions(h: Hypergraph, s: int, local: LocalFractalProfile,
                               r_l: Optional[int] = None,
                               distances: Optional[SLineDistances] = None) -> DegreeProportions:
    """
    Share of local-dimension mass per neighbour degree inside radius r_l

    P[i, K] = sum of d_l(v) over neighbours v of degree K / sum of d_l(v) over all neighbours
    """
    if r_l is None:
        r_l = int(local.radii[-1])
    if r_l not in set(int(r) for r in local.radii):
        raise ValueError(f"r_l={r_l} is outside the local radius grid {list(local.radii)}")

    distances = _distances(h, s, distances)
    dist = distances.dense().copy()
    np.fill_diagonal(dist, np.inf)
    neighbourhood = (dist <= r_l).astype(np.float64)

    node_degree = degrees(h).node_degree
    one_hot = np.zeros((h.n_nodes, int(node_degree.max()) + 1 if h.n_nodes else 1))
    one_hot[np.arange(h.n_nodes), node_degree] = local.d_l

    numerator = neighbourhood @ one_hot
    denominator = neighbourhood @ local.d_l
    flagged = denominator == 0
    matrix = np.zeros_like(numerator)
    matrix[~flagged] = numerator[~flagged] / denominator[~flagged, None]
    if flagged.any():
        logger.warning(f"[WARN] {int(flagged.sum())} nodes have no local-dimension mass within r_l={r_l}")
    return DegreeProportions(matrix=matrix, node_degree=node_degree, r_l=r_l, flagged=flagged)


def similarity_matrices(profiles: DegreeProportions, d_f: float,
                        flat_tol: float = FRACTAL_CONFIG['flat_tol']) -> RelevanceMatrix:
    """
    Directed similarity S and symmetric relevance R = S + S^T

    S[i, j] sums ((x^d_f - x) / (1 - d_f)) over degrees K <= max(K_i, K_j)
    with P[j, K] != 0, where x = P[i, K] / P[j, K]. Near d_f = 1 the
    limit -x ln x is used.
    """
    if not np.isfinite(d_f):
        raise ValueError("d_f must be finite")

    P = profiles.matrix
    degree = profiles.node_degree
    n = P.shape[0]
    S = np.zeros((n, n))
    flat = abs(1.0 - d_f) < flat_tol

    for j in range(n):
        columns = np.flatnonzero(P[j] != 0)
        if columns.size == 0:
            continue
        x = P[:, columns] / P[j, columns]
        with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
            if flat:
                terms = np.where(x > 0, -x * np.log(x), 0.0)
            else:
                terms = np.where(x > 0, (np.power(x, d_f) - x) / (1.0 - d_f), 0.0)
        in_range = columns[None, :] <= np.maximum(degree, degree[j])[:, None]
        S[:, j] = np.where(in_range, terms, 0.0).sum(axis=1)

    np.fill_diagonal(S, 0.0)
    return RelevanceMatrix(S=S, R=S + S.T)


def _fill_order(n: int, fallback_scores: Optional[np.ndarray]) -> np.ndarray:
    if fallback_scores is None:
        return np.arange(n)
    return tie_broken_ranking(fallback_scores)


def select_representatives(relevance: Union[RelevanceMatrix, np.ndarray],
                           theta_quantile: float = FRACTAL_CONFIG['theta_quantile'],
                           n_rep: int = FRACTAL_CONFIG['n_rep'],
                           theta: Optional[float] = FRACTAL_CONFIG['theta'],
                           fallback_scores: Optional[np.ndarray] = None) -> SelectionResult:
    """
    Greedy max-degree pruning of the graph with edges r_ij > theta

    theta is the theta_quantile of off-diagonal relevance values unless given.
    Remaining slots after the graph empties are filled in fallback_scores
    order (ascending id when no scores are given). Only nodes with at least
    one live neighbour are picked by the graph loop, so a node left isolated
    by pruning is treated like one isolated from the start.
    """
    if not 0.0 < theta_quantile < 1.0:
        raise ValueError(f"theta_quantile must be in (0, 1), got {theta_quantile}")
    if n_rep < 1:
        raise ValueError(f"n_rep must be >= 1, got {n_rep}")

    R = relevance.R if isinstance(relevance, RelevanceMatrix) else np.asarray(relevance, dtype=np.float64)
    n = R.shape[0]
    off_diagonal = ~np.eye(n, dtype=bool)
    if theta is None:
        theta = float(np.quantile(R[off_diagonal], theta_quantile)) if n > 1 else 0.0

    adjacency = (R > theta) & off_diagonal
    alive = adjacency.any(axis=1)
    chosen: List[int] = []
    while len(chosen) < n_rep and alive.any():
        degree = np.where(alive, (adjacency & alive[None, :]).sum(axis=1), -1)
        pick = int(np.argmax(degree))
        chosen.append(pick)
        alive &= ~adjacency[pick]
        alive[pick] = False
        alive &= (adjacency & alive[None, :]).any(axis=1)

    if len(chosen) > 1 and adjacency[np.ix_(chosen, chosen)].any():
        raise RuntimeError("representatives are not independent in the relevance graph")

    picked_by_graph = len(chosen)
    if len(chosen) < n_rep:
        taken = set(chosen)
        for node in _fill_order(n, fallback_scores):
            if len(chosen) >= min(n_rep, n):
                break
            if int(node) not in taken:
                chosen.append(int(node))
                taken.add(int(node))

    result = SelectionResult(node_ids=chosen, theta=theta, n_filled=len(chosen) - picked_by_graph,
                             theta_quantile=theta_quantile)
    if result.filled:
        result.notes.append('filled')
        logger.warning(f"[WARN] Relevance graph exhausted after {picked_by_graph} picks; "
                       f"filled {result.n_filled} slots by fallback ranking")
    return result


def select_for_finetune(h: Hypergraph, s: int = FRACTAL_CONFIG['s'],
                        theta_quantile: float = FRACTAL_CONFIG['theta_quantile'],
                        n_rep: int = FRACTAL_CONFIG['n_rep'],
                        theta: Optional[float] = FRACTAL_CONFIG['theta'],
                        r_l: Optional[int] = FRACTAL_CONFIG['r_l'],
                        inclusive: bool = FRACTAL_CONFIG['box_inclusive']) -> SelectionResult:
    """Distances, both dimensions, proportions, relevance and pruning at order s"""
    fallback = degrees(h).node_degree.astype(np.float64)
    distances = node_s_distance_matrix(h, s)
    try:
        estimate = global_fractal_dim(h, s, distances, inclusive)
        local = local_fractal_dims(h, s, distances)
    except DegenerateDiameterError as exc:
        logger.warning(f"[WARN] {exc}; representatives taken by degree")
        result = select_representatives(np.zeros((h.n_nodes, h.n_nodes)), theta_quantile, n_rep,
                                         theta=0.0, fallback_scores=fallback)
        result.s = s
        result.notes.append('degenerate diameter')
        return result

    proportions = degree_profile_proportions(h, s, local, r_l, distances)
    relevance = similarity_matrices(proportions, estimate.d_f)
    result = select_representatives(relevance, theta_quantile, n_rep, theta, fallback_scores=fallback)
    result.s = s
    result.d_f = estimate.d_f
    logger.info(f"[OK] Selected {len(result.node_ids)} representatives at s={s} (theta={result.theta:.4g})")
    return result
