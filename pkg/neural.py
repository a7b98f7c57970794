"""
Hypergraph neural network core on numpy
Propagation operator, HGNN layers, autoencoder and ranker forward/backward passes,
reconstruction and ListMLE losses, Adam, finite-difference gradient checks and
model persistence.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from centrality import ScoreVector, tie_broken_ranking
from hypergraph import Hypergraph

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

Params = Dict[str, np.ndarray]


class TrainingError(RuntimeError):
    """Raised when optimisation diverges or inputs do not conform"""


# ============================================================================
# PROPAGATION OPERATOR
# ============================================================================

@dataclass(frozen=True, eq=False)
class Propagator:
    matrix: np.ndarray          # N x N
    w_diag: np.ndarray          # M hyperedge weights, frozen
    zero_rows: np.ndarray       # nodes with no hyperedge


def build_propagator(h: Hypergraph, rng: Optional[np.random.Generator] = None,
                     w_diag: Optional[np.ndarray] = None) -> Propagator:
    """
    P = Dv^-1/2 H W De^-1 H^T Dv^-1/2 with W = diag(U[0, 1]) unless given

    Nodes outside every hyperedge get zero rows and columns.
    """
    if w_diag is None:
        rng = rng if rng is not None else np.random.default_rng()
        w_diag = rng.uniform(0.0, 1.0, size=h.n_hyperedges)
    w_diag = np.asarray(w_diag, dtype=np.float64)
    if w_diag.shape != (h.n_hyperedges,):
        raise ValueError(f"w_diag must have length {h.n_hyperedges}, got {w_diag.shape}")

    incidence = h.incidence.toarray()
    hyperdegree = h.hyperdegrees.astype(np.float64)
    zero_rows = np.flatnonzero(hyperdegree == 0)
    inv_sqrt = np.zeros_like(hyperdegree)
    inv_sqrt[hyperdegree > 0] = 1.0 / np.sqrt(hyperdegree[hyperdegree > 0])

    edge_scale = w_diag / h.hyperedge_sizes if h.n_hyperedges else w_diag
    left = inv_sqrt[:, None] * incidence
    matrix = (left * edge_scale[None, :]) @ left.T

    if zero_rows.size:
        logger.warning(f"[WARN] {zero_rows.size} nodes belong to no hyperedge; their propagator rows are zero")
    return Propagator(matrix=matrix, w_diag=w_diag, zero_rows=zero_rows)


# ============================================================================
# LAYERS
# ============================================================================

def relu(values: np.ndarray) -> np.ndarray:
    return np.maximum(values, 0.0)


def _check_shapes(P: np.ndarray, X: np.ndarray, theta: np.ndarray):
    if P.shape[1] != X.shape[0] or X.shape[1] != theta.shape[0]:
        raise ValueError(f"shape mismatch: P{P.shape} X{X.shape} theta{theta.shape}")


def hgnn_layer(P: np.ndarray, X: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """ReLU(P X theta)"""
    _check_shapes(P, X, theta)
    return relu(P @ X @ theta)


def _hgnn_forward(P: np.ndarray, X: Optional[np.ndarray], theta: np.ndarray):
    # X None stands for the identity (one-hot node features)
    PX = P if X is None else P @ X
    if PX.shape[1] != theta.shape[0]:
        raise ValueError(f"shape mismatch: PX{PX.shape} theta{theta.shape}")
    pre = PX @ theta
    return relu(pre), (PX, pre)


def _hgnn_backward(P: np.ndarray, theta: np.ndarray, cache, grad_out: np.ndarray,
                   need_input_grad: bool = True):
    PX, pre = cache
    grad_pre = grad_out * (pre > 0)
    grad_theta = PX.T @ grad_pre
    grad_input = P.T @ (grad_pre @ theta.T) if need_input_grad else None
    return grad_input, grad_theta


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


# ============================================================================
# AUTOENCODER
# ============================================================================

def encoder_widths(n_nodes: int, d: int, depth: int) -> List[int]:
    """N -> d -> ... -> d/4; intermediate layers keep width d"""
    if d % 4 != 0:
        raise ValueError(f"d must be divisible by 4, got {d}")
    return [n_nodes] + [d] * (depth - 1) + [d // 4]


def init_autoencoder(n_nodes: int, d: int, rng: np.random.Generator, depth: int = 2,
                     decoder_hidden: int = 0) -> Params:
    widths = encoder_widths(n_nodes, d, depth)
    hidden = decoder_hidden or d // 4
    params: Params = {}
    for layer in range(depth):
        params[f'enc{layer}'] = glorot(rng, widths[layer], widths[layer + 1])
    params['dec_w0'] = glorot(rng, d // 4, hidden)
    params['dec_b0'] = np.zeros(hidden)
    params['dec_w1'] = glorot(rng, hidden, 1)
    params['dec_b1'] = np.zeros(1)
    return params


def _encoder_depth(params: Params) -> int:
    return sum(1 for key in params if key.startswith('enc'))


def _encode(P: np.ndarray, params: Params):
    X, caches = None, []
    for layer in range(_encoder_depth(params)):
        X, cache = _hgnn_forward(P, X, params[f'enc{layer}'])
        caches.append(cache)
    return X, caches


def encode(P: np.ndarray, params: Params) -> np.ndarray:
    """Stacked HGNN layers from one-hot node features; output N x d/4"""
    embeddings, _ = _encode(P, params)
    return embeddings


def _decode(embeddings: np.ndarray, params: Params, relu_hidden: bool):
    pre = embeddings @ params['dec_w0'] + params['dec_b0']
    hidden = relu(pre) if relu_hidden else pre
    out = hidden @ params['dec_w1'] + params['dec_b1']
    return out, (embeddings, pre, hidden)


def decode(embeddings: np.ndarray, params: Params, relu_hidden: bool = False) -> np.ndarray:
    """Two affine layers to one value per node"""
    out, _ = _decode(embeddings, params, relu_hidden)
    return out


def normalized_degree_target(node_degree: np.ndarray) -> np.ndarray:
    """Min-max scaled degrees; a constant vector maps to 0.5"""
    node_degree = np.asarray(node_degree, dtype=np.float64)
    low, high = node_degree.min(), node_degree.max()
    if high == low:
        return np.full(node_degree.shape, 0.5)
    return (node_degree - low) / (high - low)


def reconstruction_loss(Z: np.ndarray, target: np.ndarray) -> float:
    """Euclidean norm of Z - target"""
    Z = np.asarray(Z, dtype=np.float64).ravel()
    if Z.shape != np.shape(target):
        raise ValueError(f"length mismatch: {Z.shape} vs {np.shape(target)}")
    return float(np.linalg.norm(Z - target))


def autoencoder_loss_and_grads(P: np.ndarray, params: Params, target: np.ndarray,
                               relu_hidden: bool = False) -> Tuple[float, Params, np.ndarray]:
    """Reconstruction loss, its gradients for every tensor, and the embeddings"""
    embeddings, enc_caches = _encode(P, params)
    out, (emb, pre, hidden) = _decode(embeddings, params, relu_hidden)
    residual = out.ravel() - target
    loss = float(np.linalg.norm(residual))

    grads: Params = {}
    grad_out = (residual / loss if loss > 0 else np.zeros_like(residual))[:, None]
    grads['dec_w1'] = hidden.T @ grad_out
    grads['dec_b1'] = grad_out.sum(axis=0)
    grad_hidden = grad_out @ params['dec_w1'].T
    grad_pre = grad_hidden * (pre > 0) if relu_hidden else grad_hidden
    grads['dec_w0'] = emb.T @ grad_pre
    grads['dec_b0'] = grad_pre.sum(axis=0)
    grad_x = grad_pre @ params['dec_w0'].T

    for layer in reversed(range(len(enc_caches))):
        grad_x, grads[f'enc{layer}'] = _hgnn_backward(
            P, params[f'enc{layer}'], enc_caches[layer], grad_x, need_input_grad=layer > 0)
    return loss, grads, embeddings


# ============================================================================
# RANKER
# ============================================================================

def init_ranker(in_width: int, rng: np.random.Generator, layers: int = 2, hidden: int = 0) -> Params:
    """L HGNN layers of width `hidden` (default in_width) then an affine head"""
    width = hidden or in_width
    params: Params = {}
    fan_in = in_width
    for layer in range(layers):
        params[f'rank{layer}'] = glorot(rng, fan_in, width)
        fan_in = width
    params['head_w'] = glorot(rng, fan_in, 1)
    params['head_b'] = np.zeros(1)
    return params


def ranker_input_width(params: Params) -> int:
    return params['rank0'].shape[0]


def _ranker_layers(params: Params) -> int:
    return sum(1 for key in params if key.startswith('rank'))


def _rank(P: np.ndarray, features: np.ndarray, params: Params):
    if features.shape[1] != ranker_input_width(params):
        raise ValueError(f"feature width {features.shape[1]} != ranker input width {ranker_input_width(params)}")
    X, caches = features, []
    for layer in range(_ranker_layers(params)):
        X, cache = _hgnn_forward(P, X, params[f'rank{layer}'])
        caches.append(cache)
    scores = (X @ params['head_w']).ravel() + params['head_b'][0]
    return scores, (X, caches)


def rank_forward(P: np.ndarray, features: np.ndarray, params: Params, method: str = 'ahga') -> ScoreVector:
    """One score per node from L HGNN layers and an affine head"""
    scores, _ = _rank(P, features, params)
    return ScoreVector(method, scores)


def true_ranking(labels: np.ndarray) -> np.ndarray:
    """Target permutation: descending label, ties by ascending index"""
    return tie_broken_ranking(labels)


def _suffix_logsumexp(ordered: np.ndarray) -> np.ndarray:
    # lse[k] = log sum_{m >= k} exp(ordered[m]), stabilised by the running maximum
    return np.logaddexp.accumulate(ordered[::-1])[::-1]


def listmle_loss(scores: np.ndarray, ranking: np.ndarray) -> float:
    """Negative Plackett-Luce log-likelihood of the target permutation"""
    ordered = np.asarray(scores, dtype=np.float64)[np.asarray(ranking)]
    return float(np.sum(_suffix_logsumexp(ordered) - ordered))


def listmle_grad(scores: np.ndarray, ranking: np.ndarray) -> np.ndarray:
    """
    d loss / d score_j = sum over prefixes k <= pos(j) of softmax_k(j) - 1

    softmax_k(j) = exp(s_j - lse_k), so the prefix sum is
    exp(s_j) * cumsum(exp(-lse)) evaluated in log space.
    """
    ranking = np.asarray(ranking)
    ordered = np.asarray(scores, dtype=np.float64)[ranking]
    lse = _suffix_logsumexp(ordered)
    log_prefix = np.logaddexp.accumulate(-lse)
    grad_ordered = np.exp(ordered + log_prefix) - 1.0
    grad = np.empty_like(grad_ordered)
    grad[ranking] = grad_ordered
    return grad


def ranker_loss_and_grads(P: np.ndarray, features: np.ndarray, params: Params, labels: np.ndarray,
                          subset: Optional[np.ndarray] = None) -> Tuple[float, Params]:
    """
    ListMLE over all nodes, or over `subset` only with labels aligned to it

    The forward pass always runs on the full graph.
    """
    scores, (top, caches) = _rank(P, features, params)
    if subset is None:
        ranking = true_ranking(labels)
        loss = listmle_loss(scores, ranking)
        grad_scores = listmle_grad(scores, ranking)
    else:
        subset = np.asarray(subset, dtype=np.int64)
        local_ranking = true_ranking(labels)
        loss = listmle_loss(scores[subset], local_ranking)
        grad_scores = np.zeros_like(scores)
        grad_scores[subset] = listmle_grad(scores[subset], local_ranking)

    grads: Params = {}
    grads['head_w'] = top.T @ grad_scores[:, None]
    grads['head_b'] = np.array([grad_scores.sum()])
    grad_x = grad_scores[:, None] @ params['head_w'].T
    for layer in reversed(range(len(caches))):
        grad_x, grads[f'rank{layer}'] = _hgnn_backward(
            P, params[f'rank{layer}'], caches[layer], grad_x, need_input_grad=layer > 0)
    return loss, grads


def random_projection(n_nodes: int, width: int, seed: int) -> np.ndarray:
    """Unlearned projection of one-hot node features to the ranker width"""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / np.sqrt(width), size=(n_nodes, width))


# ============================================================================
# OPTIMISER
# ============================================================================

@dataclass
class AdamState:
    t: int
    m: Params
    v: Params


def init_adam_state(params: Params) -> AdamState:
    return AdamState(
        t=0,
        m={key: np.zeros_like(value) for key, value in params.items()},
        v={key: np.zeros_like(value) for key, value in params.items()},
    )


def adam_step(params: Params, grads: Params, state: AdamState, learning_rate: float = 0.01,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> Tuple[Params, AdamState]:
    """Bias-corrected Adam update; returns new params and state"""
    t = state.t + 1
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for key, value in params.items():
        grad = grads[key]
        if grad.shape != value.shape:
            raise ValueError(f"gradient shape {grad.shape} != parameter shape {value.shape} for '{key}'")
        new_m[key] = beta1 * state.m[key] + (1.0 - beta1) * grad
        new_v[key] = beta2 * state.v[key] + (1.0 - beta2) * grad * grad
        m_hat = new_m[key] / (1.0 - beta1 ** t)
        v_hat = new_v[key] / (1.0 - beta2 ** t)
        new_params[key] = value - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(t=t, m=new_m, v=new_v)


# ============================================================================
# GRADIENT CHECK
# ============================================================================

LossClosure = Callable[[Params], Tuple[float, Params]]


def grad_check(closure: LossClosure, params: Params, eps: float = 1e-5, n_coords: int = 100,
               rng: Optional[np.random.Generator] = None) -> float:
    """
    Max relative error between analytic and central-difference gradients

    Samples at least one coordinate from every tensor and n_coords overall
    (or every coordinate when there are fewer).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must be in [1e-7, 1e-3], got {eps}")
    rng = rng if rng is not None else np.random.default_rng(0)

    _, analytic = closure(params)
    keys = sorted(params)
    total = sum(params[key].size for key in keys)
    budget = max(n_coords, len(keys))

    coords: List[Tuple[str, int]] = []
    for key in keys:
        size = params[key].size
        share = size if total <= budget else max(1, int(np.ceil(budget * size / total)))
        picks = rng.choice(size, size=min(share, size), replace=False)
        coords.extend((key, int(index)) for index in picks)

    worst = 0.0
    for key, index in coords:
        shifted = {name: value.copy() for name, value in params.items()}
        flat = shifted[key].reshape(-1)
        original = flat[index]
        flat[index] = original + eps
        loss_plus, _ = closure(shifted)
        flat[index] = original - eps
        loss_minus, _ = closure(shifted)
        numeric = (loss_plus - loss_minus) / (2.0 * eps)
        exact = float(analytic[key].reshape(-1)[index])
        error = abs(exact - numeric) / max(1.0, abs(exact), abs(numeric))
        worst = max(worst, error)
    logger.debug(f"Gradient check over {len(coords)} coordinates: max rel-err {worst:.3e}")
    return worst


# ============================================================================
# MODEL CONTAINER
# ============================================================================

@dataclass
class ModelParams:
    ranker: Params
    autoencoder: Params = field(default_factory=dict)
    w_diag: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dims: Dict[str, int] = field(default_factory=dict)
    meta: Dict[str, object] = field(default_factory=dict)


def save_model(path: str, model: ModelParams) -> str:
    """Write a versioned .npz holding every tensor plus JSON metadata"""
    arrays = {f'ranker/{key}': value for key, value in model.ranker.items()}
    arrays.update({f'autoencoder/{key}': value for key, value in model.autoencoder.items()})
    arrays['w_diag'] = model.w_diag
    header = {'format_version': MODEL_FORMAT_VERSION, 'dims': model.dims, 'meta': model.meta}
    arrays['metadata'] = np.frombuffer(json.dumps(header, sort_keys=True).encode('utf-8'), dtype=np.uint8)
    with open(path, 'wb') as handle:
        np.savez(handle, **arrays)
    return path


def load_model(path: str) -> ModelParams:
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(bytes(archive['metadata']).decode('utf-8'))
        if header.get('format_version') != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {header.get('format_version')}")
        ranker = {key.split('/', 1)[1]: archive[key] for key in archive.files if key.startswith('ranker/')}
        autoencoder = {key.split('/', 1)[1]: archive[key] for key in archive.files
                       if key.startswith('autoencoder/')}
        return ModelParams(ranker=ranker, autoencoder=autoencoder, w_diag=archive['w_diag'],
                           dims=header['dims'], meta=header['meta'])
