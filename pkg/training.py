"""
Training loops
Per-graph autoencoder feature extraction, cross-graph ranker pre-training with
early stopping on validation Kendall tau, and fine-tuning on representatives.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from config import MODEL_CONFIG, TRAIN_CONFIG
from evaluation import kendall_tau
from hypergraph import Hypergraph, degrees
from neural import (
    Params, Propagator, TrainingError, adam_step, autoencoder_loss_and_grads, build_propagator,
    encode, init_adam_state, init_autoencoder, init_ranker, normalized_degree_target,
    random_projection, rank_forward, ranker_input_width, ranker_loss_and_grads,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = TRAIN_CONFIG['learning_rate']
    epochs: int = TRAIN_CONFIG['ae_epochs']
    adam_beta1: float = TRAIN_CONFIG['adam_beta1']
    adam_beta2: float = TRAIN_CONFIG['adam_beta2']
    adam_eps: float = TRAIN_CONFIG['adam_eps']
    rng_seed: int = 0
    fine_tune_lr: float = TRAIN_CONFIG['fine_tune_lr']
    fine_tune_epochs: int = TRAIN_CONFIG['fine_tune_epochs']
    pretrain_epochs: int = TRAIN_CONFIG['pretrain_epochs']
    patience: int = TRAIN_CONFIG['patience']
    d: int = MODEL_CONFIG['d']
    encoder_depth: int = MODEL_CONFIG['encoder_depth']
    decoder_hidden: int = MODEL_CONFIG['decoder_hidden']
    decoder_relu: bool = MODEL_CONFIG['decoder_relu']
    ranker_layers: int = MODEL_CONFIG['ranker_layers']
    ranker_hidden: int = MODEL_CONFIG['ranker_hidden']

    def __post_init__(self):
        errors = []
        if self.learning_rate <= 0 or self.fine_tune_lr <= 0:
            errors.append("learning rates must be > 0")
        if self.epochs < 1:
            errors.append(f"epochs must be >= 1, got {self.epochs}")
        if self.d % 4 != 0:
            errors.append(f"d must be divisible by 4, got {self.d}")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def feature_width(self) -> int:
        return self.d // 4

    def adam(self, learning_rate: Optional[float] = None) -> dict:
        return {
            'learning_rate': self.learning_rate if learning_rate is None else learning_rate,
            'beta1': self.adam_beta1,
            'beta2': self.adam_beta2,
            'eps': self.adam_eps,
        }


@dataclass
class AutoencoderResult:
    params: Params
    embeddings: np.ndarray
    propagator: Propagator
    history: List[float]


@dataclass
class GraphSample:
    """One hypergraph prepared for the ranker: operator, features and labels"""
    name: str
    hypergraph: Hypergraph
    propagator: Propagator
    features: np.ndarray
    labels: np.ndarray


@dataclass
class PretrainResult:
    params: Params
    history: List[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_tau: Optional[float] = None


def _check_finite(loss: float, epoch: int, stage: str):
    if not math.isfinite(loss):
        raise TrainingError(f"{stage} diverged at epoch {epoch}; last finite epoch {epoch - 1}")


def train_autoencoder(h: Hypergraph, config: TrainConfig, rng: Optional[np.random.Generator] = None,
                      propagator: Optional[Propagator] = None) -> AutoencoderResult:
    """
    Full-batch Adam on the degree reconstruction loss

    Returns:
        AutoencoderResult with the encoder output as node features
    """
    rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
    if propagator is None:
        propagator = build_propagator(h, rng)
    target = normalized_degree_target(degrees(h).node_degree)
    params = init_autoencoder(h.n_nodes, config.d, rng, config.encoder_depth, config.decoder_hidden)
    state = init_adam_state(params)

    history: List[float] = []
    for epoch in range(1, config.epochs + 1):
        loss, grads, _ = autoencoder_loss_and_grads(propagator.matrix, params, target, config.decoder_relu)
        _check_finite(loss, epoch, 'autoencoder')
        history.append(loss)
        params, state = adam_step(params, grads, state, **config.adam())
        logger.debug(f"autoencoder epoch {epoch}: L1={loss:.6f}")

    embeddings = encode(propagator.matrix, params)
    logger.info(f"[OK] Autoencoder trained: L1 {history[0]:.4f} -> {history[-1]:.4f} over {config.epochs} epochs")
    return AutoencoderResult(params=params, embeddings=embeddings, propagator=propagator, history=history)


def build_sample(name: str, h: Hypergraph, labels: np.ndarray, config: TrainConfig,
                 seed: int, use_autoencoder: bool = True) -> GraphSample:
    """
    Operator and features for one graph

    With use_autoencoder=False features are a seeded random projection of
    the one-hot node features.
    """
    rng = np.random.default_rng(seed)
    propagator = build_propagator(h, rng)
    if use_autoencoder:
        features = train_autoencoder(h, replace(config, rng_seed=seed), rng, propagator).embeddings
    else:
        features = random_projection(h.n_nodes, config.feature_width, seed)
    return GraphSample(name=name, hypergraph=h, propagator=propagator, features=features,
                       labels=np.asarray(labels, dtype=np.float64))


def evaluate_tau(params: Params, sample: GraphSample) -> float:
    """Kendall tau between predicted scores and the sample's labels"""
    scores = rank_forward(sample.propagator.matrix, sample.features, params).scores
    return kendall_tau(scores, sample.labels)


def _check_widths(samples: Sequence[GraphSample], width: int):
    for sample in samples:
        if sample.features.shape[1] != width:
            raise ValueError(f"graph '{sample.name}' has feature width {sample.features.shape[1]}, expected {width}")


def pretrain_ranker(corpus: Sequence[GraphSample], config: TrainConfig,
                    validation: Sequence[GraphSample] = (), params: Optional[Params] = None,
                    epochs: Optional[int] = None) -> PretrainResult:
    """
    ListMLE over each graph's full node list, graphs visited in corpus order

    With a validation set, the parameters with the best mean validation tau
    are kept and training stops after `patience` epochs without improvement.
    """
    if not corpus:
        raise ValueError("pre-training corpus is empty")
    width = corpus[0].features.shape[1]
    _check_widths(list(corpus) + list(validation), width)

    if params is None:
        params = init_ranker(width, np.random.default_rng(config.rng_seed),
                             config.ranker_layers, config.ranker_hidden)
    elif ranker_input_width(params) != width:
        raise ValueError(f"ranker expects width {ranker_input_width(params)}, corpus has {width}")

    epochs = config.pretrain_epochs if epochs is None else epochs
    state = init_adam_state(params)
    result = PretrainResult(params=params)
    best_tau, stale = -math.inf, 0

    for epoch in range(1, epochs + 1):
        losses = []
        for sample in corpus:
            loss, grads = ranker_loss_and_grads(sample.propagator.matrix, sample.features, params, sample.labels)
            _check_finite(loss, epoch, f"pre-training on '{sample.name}'")
            params, state = adam_step(params, grads, state, **config.adam())
            losses.append(loss)

        record = {'epoch': epoch, 'L2': float(np.mean(losses)), 'val_tau': None}
        if validation:
            val_tau = float(np.mean([evaluate_tau(params, sample) for sample in validation]))
            record['val_tau'] = val_tau
            if val_tau > best_tau:
                best_tau, stale = val_tau, 0
                result.params, result.best_epoch, result.best_val_tau = params, epoch, val_tau
            else:
                stale += 1
        else:
            result.params, result.best_epoch = params, epoch
        result.history.append(record)
        logger.debug(f"pretrain epoch {epoch}: L2={record['L2']:.4f} val_tau={record['val_tau']}")

        if validation and stale >= config.patience:
            logger.info(f"[INFO] Early stop at epoch {epoch}; best epoch {result.best_epoch} "
                        f"(val tau {best_tau:.4f})")
            break

    logger.info(f"[OK] Ranker pre-trained on {len(corpus)} graphs for {len(result.history)} epochs")
    return result


def finetune(params: Params, sample: GraphSample, rep_nodes: Sequence[int],
             rep_labels: Sequence[float], config: TrainConfig) -> Params:
    """
    ListMLE on the representative sub-list only, forward pass on the full graph

    Fewer than two representatives leave the parameters unchanged.
    """
    rep_nodes = np.asarray(rep_nodes, dtype=np.int64)
    rep_labels = np.asarray(rep_labels, dtype=np.float64)
    if rep_nodes.size != rep_labels.size:
        raise ValueError(f"{rep_nodes.size} representatives but {rep_labels.size} labels")
    if rep_nodes.size < 2:
        logger.warning("[WARN] Fewer than 2 representatives; fine-tuning skipped")
        return params
    _check_widths([sample], ranker_input_width(params))

    state = init_adam_state(params)
    for epoch in range(1, config.fine_tune_epochs + 1):
        loss, grads = ranker_loss_and_grads(sample.propagator.matrix, sample.features, params,
                                            rep_labels, subset=rep_nodes)
        _check_finite(loss, epoch, 'fine-tuning')
        params, state = adam_step(params, grads, state, **config.adam(config.fine_tune_lr))
        logger.debug(f"finetune epoch {epoch}: L2={loss:.4f}")
    logger.info(f"[OK] Fine-tuned on {rep_nodes.size} representatives for {config.fine_tune_epochs} epochs")
    return params
