"""
Pipeline stages
Corpus generation, labelling, feature extraction, pre-training, representative
fine-tuning, baselines and evaluation, run per seed and written to a run folder.
"""

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import artifacts
from centrality import ScoreVector, rank_scores
from config import (
    DATASET_BETA0, EVAL_CONFIG, PIPELINE_CONFIG, OUTPUT_CONFIG, RunConfig,
)
from diffusion import InfluenceLabels, SirParams, influence_labels
from evaluation import EvalReport, evaluate_method
from fractal_select import SelectionResult, select_for_finetune
from generators import default_spec, generate
from hypergraph import Hypergraph, read_hypergraph
from neural import ModelParams, build_propagator, rank_forward, save_model
from training import (
    AutoencoderResult, GraphSample, TrainConfig, build_sample, evaluate_tau, finetune, pretrain_ranker,
    train_autoencoder,
)

logger = logging.getLogger(__name__)

BASELINE_METHODS = ('dc', 'hedc', 'vc', 'hcc', 'hdf')


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name"""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def run_stage(name: str, description: str, fn: Callable, *args, **kwargs):
    """
    Run one stage between banners

    Args:
        name: Stage name recorded on failure
        description: Human-readable description for the log
        fn: Callable doing the work

    Returns:
        Whatever fn returns

    Raises:
        StageError: wrapping the original exception
    """
    logger.info("=" * 80)
    logger.info(f"Starting: {description}")
    logger.info("=" * 80)
    try:
        result = fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        logger.error(f"{name} failed: {exc}")
        raise StageError(name, exc) from exc
    logger.info(f"[OK] {description} completed")
    return result


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from integer parts"""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def train_config_for(cfg: RunConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        epochs=cfg.ae_epochs,
        rng_seed=seed,
        fine_tune_lr=cfg.fine_tune_lr,
        fine_tune_epochs=cfg.fine_tune_epochs,
        pretrain_epochs=cfg.pretrain_epochs,
        patience=cfg.patience,
        d=cfg.d,
        encoder_depth=cfg.encoder_depth,
        decoder_relu=cfg.decoder_relu,
        ranker_layers=cfg.L,
    )


def beta_for(name: str, cfg: RunConfig) -> float:
    """Configured beta0, else the per-dataset value"""
    if cfg.beta0 is not None:
        return cfg.beta0
    key = name.upper() if name.lower() in ('erh', 'wsh', 'sfh') else name
    if key not in DATASET_BETA0:
        raise ValueError(f"no beta0 known for '{name}'; set beta0 in the run config")
    return DATASET_BETA0[key]


@dataclass
class LabelledGraph:
    name: str
    family: str
    hypergraph: Hypergraph
    labels: InfluenceLabels


@dataclass
class Corpus:
    train: List[LabelledGraph]
    validation: List[LabelledGraph]
    test: Optional[LabelledGraph]


@dataclass
class SeedOutcome:
    seed: int
    dataset: str
    reports: List[EvalReport] = field(default_factory=list)
    basic_tau: float = 0.0
    s_taus: Dict[int, float] = field(default_factory=dict)
    ablation: Dict[str, float] = field(default_factory=dict)


def _label(name: str, family: str, h: Hypergraph, cfg: RunConfig, seed: int) -> LabelledGraph:
    params = SirParams(beta=beta_for(family if family != 'dataset' else name, cfg), gamma=cfg.gamma)
    labels = influence_labels(h, params, cfg.replicas, derive_seed(cfg.master_seed, seed),
                              threads=cfg.threads)
    return LabelledGraph(name=name, family=family, hypergraph=h, labels=labels)


def evaluated_graph_name(cfg: RunConfig) -> str:
    if cfg.dataset:
        return cfg.dataset_name or os.path.splitext(os.path.basename(cfg.dataset))[0]
    return f"{cfg.test_family}_test"


def build_corpus(cfg: RunConfig, seed: int, with_test: bool = True) -> Corpus:
    """Synthetic train and validation graphs plus the labelled test graph"""
    train = []
    for f_index, family in enumerate(cfg.train_families):
        for k in range(cfg.train_per_family):
            spec = default_spec(family, cfg.n_nodes, cfg.n_hyperedges, derive_seed(seed, 1, f_index, k))
            train.append(_label(f"{family}_train{k}", family, generate(spec), cfg, seed))

    validation = []
    for k in range(cfg.val_graphs):
        family = cfg.train_families[k % len(cfg.train_families)]
        spec = default_spec(family, cfg.n_nodes, cfg.n_hyperedges, derive_seed(seed, 2, k))
        validation.append(_label(f"{family}_val{k}", family, generate(spec), cfg, seed))

    if not with_test:
        test = None
    elif cfg.dataset:
        h, _, _ = read_hypergraph(cfg.dataset)
        test = _label(evaluated_graph_name(cfg), 'dataset', h, cfg, seed)
    else:
        spec = default_spec(cfg.test_family, cfg.n_nodes, cfg.n_hyperedges, derive_seed(seed, 3))
        test = _label(evaluated_graph_name(cfg), cfg.test_family, generate(spec), cfg, seed)
    return Corpus(train=train, validation=validation, test=test)


def prepare_samples(graphs: Sequence[LabelledGraph], tc: TrainConfig, seed: int, tag: int,
                    use_autoencoder: bool) -> List[GraphSample]:
    return [
        build_sample(graph.name, graph.hypergraph, graph.labels.values, tc,
                     derive_seed(seed, tag, index), use_autoencoder)
        for index, graph in enumerate(graphs)
    ]


def dataset_sample(name: str, h: Hypergraph, labels: np.ndarray, cfg: RunConfig, seed: int,
                   use_autoencoder: bool = True) -> GraphSample:
    """Operator and features for the graph under test, seeded the same way in every command"""
    tag = 12 if use_autoencoder else 22
    return build_sample(name, h, labels, train_config_for(cfg, seed), derive_seed(seed, tag, 0), use_autoencoder)


def write_labels(folder: str, graph: LabelledGraph, cfg: RunConfig, seed: int) -> str:
    frame = graph.labels.to_frame()[['node_id', 'label']]
    path = os.path.join(folder, f"labels_{graph.name}.csv")
    artifacts.write_csv(path, frame, 'label', cfg.to_dict(), [seed], graph.labels.provenance())
    return path


def write_scores(folder: str, name: str, scores: ScoreVector, cfg: RunConfig, seed: int) -> str:
    path = os.path.join(folder, f"scores_{name}.csv")
    artifacts.write_csv(path, scores.to_frame(), 'rank', cfg.to_dict(), [seed],
                        {'method': scores.method, **scores.params})
    return path


def active_learning(test_sample: GraphSample, test: LabelledGraph, basic: ModelParams, cfg: RunConfig,
                    tc: TrainConfig, orders: Sequence[int], folder: Optional[str],
                    seed: int) -> Dict[int, Tuple[dict, float, SelectionResult]]:
    """Fine-tune the pre-trained ranker on representatives picked at each order s"""
    tuned = {}
    for s in orders:
        selection = select_for_finetune(test.hypergraph, s, cfg.theta_quantile, cfg.n_rep, cfg.theta,
                                        cfg.r_l, cfg.box_inclusive)
        rep_labels = test.labels.restrict(selection.node_ids).values
        params = finetune(basic.ranker, test_sample, selection.node_ids, rep_labels, tc)
        tau = evaluate_tau(params, test_sample)
        tuned[s] = (params, tau, selection)
        logger.info(f"[INFO] s={s}: fine-tuned tau {tau:.4f} with {len(selection.node_ids)} representatives")
        if folder:
            artifacts.write_report(os.path.join(folder, f"representatives_s{s}.json"), selection.to_json(),
                                   'select-reps', cfg.to_dict(), [seed])
    return tuned


def run_seed(cfg: RunConfig, seed: int, folder: Optional[str] = None,
             with_baselines: bool = True, with_dismantling: bool = True) -> SeedOutcome:
    """
    Full protocol for one seed

    Writes per-seed artifacts under `folder` when given.
    """
    tc = train_config_for(cfg, seed)
    if folder:
        os.makedirs(folder, exist_ok=True)

    logger.info(f"\n[STEP 1/6] Generating and labelling graphs (seed {seed})...")
    corpus = run_stage('label', 'Corpus generation and SIR labelling', build_corpus, cfg, seed)
    test = corpus.test
    if folder:
        for graph in corpus.train + corpus.validation + [test]:
            write_labels(folder, graph, cfg, seed)

    logger.info("\n[STEP 2/6] Extracting autoencoder features...")
    train_s, val_s, test_s = run_stage('train-ae', 'Autoencoder feature extraction', lambda: (
        prepare_samples(corpus.train, tc, seed, 10, True),
        prepare_samples(corpus.validation, tc, seed, 11, True),
        dataset_sample(test.name, test.hypergraph, test.labels.values, cfg, seed, True),
    ))
    train_hg = prepare_samples(corpus.train, tc, seed, 20, False)
    val_hg = prepare_samples(corpus.validation, tc, seed, 21, False)
    test_hg = dataset_sample(test.name, test.hypergraph, test.labels.values, cfg, seed, False)

    logger.info("\n[STEP 3/6] Pre-training rankers...")
    pre = run_stage('pretrain', 'Ranker pre-training', pretrain_ranker, train_s, tc, val_s)
    pre_hg = run_stage('pretrain', 'Ranker pre-training without autoencoder', pretrain_ranker,
                       train_hg, tc, val_hg)
    basic = ModelParams(ranker=pre.params, dims={'d': cfg.d, 'L': cfg.L},
                        meta={'seed': seed, 'best_epoch': pre.best_epoch})
    if folder:
        artifacts.write_csv(os.path.join(folder, 'loss_pretrain.csv'),
                            pd.DataFrame(pre.history, columns=['epoch', 'L2', 'val_tau']),
                            'pretrain', cfg.to_dict(), [seed])
        save_model(os.path.join(folder, 'model_basic.npz'), basic)

    outcome = SeedOutcome(seed=seed, dataset=test.name)
    outcome.basic_tau = evaluate_tau(basic.ranker, test_s)

    logger.info("\n[STEP 4/6] Representative selection and fine-tuning...")
    orders = sorted(set(cfg.s_grid) | {cfg.s})
    tuned = run_stage('finetune', 'Active-learning fine-tuning', active_learning,
                      test_s, test, basic, cfg, tc, orders, folder, seed)
    outcome.s_taus = {s: tuned[s][1] for s in orders}
    ahga_params = tuned[cfg.s][0]
    if folder:
        save_model(os.path.join(folder, 'model_ahga.npz'),
                   replace(basic, ranker=ahga_params, meta={**basic.meta, 's': cfg.s}))

    predictions: Dict[str, ScoreVector] = {
        'AHGA': rank_forward(test_s.propagator.matrix, test_s.features, ahga_params, 'ahga'),
        'AHG': rank_forward(test_s.propagator.matrix, test_s.features, basic.ranker, 'ahg'),
        'HG': rank_forward(test_hg.propagator.matrix, test_hg.features, pre_hg.params, 'hg'),
    }

    if with_baselines:
        logger.info("\n[STEP 5/6] Computing baseline centralities...")
        baseline_params = {'hcc': {'s': cfg.hcc_s}, 'hdf': {'r': cfg.hdf_r, 's_m': cfg.hdf_s_m}}
        for method in BASELINE_METHODS:
            predictions[method.upper()] = run_stage(
                'rank', f"{method.upper()} baseline", rank_scores, test.hypergraph, method,
                **baseline_params.get(method, {}))

    logger.info("\n[STEP 6/6] Evaluating rankings...")
    for name, scores in predictions.items():
        report = run_stage('evaluate', f"Evaluation of {name}", evaluate_method, name,
                           test.labels.values, scores, test.hypergraph,
                           EVAL_CONFIG['overlap_f'], EVAL_CONFIG['dismantle_p'], cfg.s_max, with_dismantling)
        outcome.reports.append(report)
        if folder:
            write_scores(folder, name.lower(), scores, cfg, seed)
    outcome.ablation = {r.method: r.tau for r in outcome.reports if r.method in ('AHGA', 'AHG', 'HG')}
    return outcome


def _outcome_frames(outcomes: Sequence[SeedOutcome]) -> Dict[str, pd.DataFrame]:
    tau_rows, overlap_rows, dismantle_rows, table_rows = [], [], [], []
    for outcome in outcomes:
        table_row = {'dataset': outcome.dataset, 'seed': outcome.seed, 'basic_tau': outcome.basic_tau}
        table_row.update({f"s{s}": tau for s, tau in sorted(outcome.s_taus.items())})
        table_rows.append(table_row)
        for report in outcome.reports:
            tau_rows.append({'dataset': outcome.dataset, 'method': report.method,
                             'seed': outcome.seed, 'tau': report.tau})
            overlap_rows.extend({'dataset': outcome.dataset, 'method': report.method, 'seed': outcome.seed,
                                 'f': f, 'overlap': value} for f, value in report.overlap.items())
            dismantle_rows.extend({'dataset': outcome.dataset, 'method': report.method, 'seed': outcome.seed,
                                   'p': p, 'delta_eff': value} for p, value in report.delta_eff.items())
    return {
        's_order_tau': pd.DataFrame(table_rows),
        'tau': pd.DataFrame(tau_rows, columns=['dataset', 'method', 'seed', 'tau']),
        'overlap': pd.DataFrame(overlap_rows, columns=['dataset', 'method', 'seed', 'f', 'overlap']),
        'dismantling': pd.DataFrame(dismantle_rows, columns=['dataset', 'method', 'seed', 'p', 'delta_eff']),
    }


def run_pipeline(cfg: RunConfig, out_dir: str) -> List[SeedOutcome]:
    """Every stage for every configured seed, then the summary tables"""
    os.makedirs(out_dir, exist_ok=True)
    settings = cfg.to_dict()
    outcomes = []
    for seed in cfg.seeds:
        outcomes.append(run_seed(cfg, seed, os.path.join(out_dir, f"seed_{seed}")))

    frames = _outcome_frames(outcomes)
    for name in ('s_order_tau', 'overlap', 'dismantling'):
        artifacts.write_csv(os.path.join(out_dir, f"{name}.csv"), frames[name], 'pipeline', settings, cfg.seeds)
    artifacts.write_comparison_table(out_dir, 'tau', frames['tau'], 'pipeline', settings, cfg.seeds,
                                     OUTPUT_CONFIG['output_format'])
    report = {
        'config_hash': cfg.config_hash(),
        'seeds': [
            {'seed': o.seed, 'dataset': o.dataset, 'basic_tau': o.basic_tau,
             's_taus': {str(s): t for s, t in o.s_taus.items()},
             'reports': [r.to_json() for r in o.reports]}
            for o in outcomes
        ],
    }
    artifacts.write_report(os.path.join(out_dir, 'report.json'), report, 'pipeline', settings, cfg.seeds)
    return outcomes


def run_ablation(cfg: RunConfig, out_dir: str) -> pd.DataFrame:
    """AHGA / AHG / HG tau over `ablation_seeds` consecutive seeds"""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for k in range(cfg.ablation_seeds):
        seed = cfg.seeds[0] + k
        outcome = run_seed(cfg, seed, None, with_baselines=False, with_dismantling=False)
        rows.append({'seed': seed, 'basic_tau': outcome.basic_tau, **outcome.ablation})
    frame = pd.DataFrame(rows, columns=['seed', 'basic_tau', 'AHGA', 'AHG', 'HG'])
    artifacts.write_csv(os.path.join(out_dir, 'ablation.csv'), frame, 'ablate', cfg.to_dict(),
                        [r['seed'] for r in rows])
    medians = {method: float(frame[method].median()) for method in ('AHGA', 'AHG', 'HG')}
    artifacts.write_report(os.path.join(out_dir, 'ablation_summary.json'),
                           {'median_tau': medians, 'seeds': int(len(rows))}, 'ablate', cfg.to_dict())
    logger.info(f"[OK] Median tau: AHGA {medians['AHGA']:.4f}, AHG {medians['AHG']:.4f}, HG {medians['HG']:.4f}")
    return frame


def run_sweep(cfg: RunConfig, out_dir: str, d_values: Sequence[int] = tuple(PIPELINE_CONFIG['sweep_d']),
              l_values: Sequence[int] = tuple(PIPELINE_CONFIG['sweep_L'])) -> pd.DataFrame:
    """Pre-trained and fine-tuned tau across embedding widths d and ranker depths L"""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for param, values in (('d', d_values), ('L', l_values)):
        for value in values:
            swept = replace(cfg, **{param: int(value)})
            for seed in cfg.seeds:
                outcome = run_seed(swept, seed, None, with_baselines=False, with_dismantling=False)
                rows.append({'param': param, 'value': int(value), 'seed': seed,
                             'basic_tau': outcome.basic_tau, 'tau': outcome.ablation['AHGA']})
    frame = pd.DataFrame(rows, columns=['param', 'value', 'seed', 'basic_tau', 'tau'])
    artifacts.write_csv(os.path.join(out_dir, 'sweep.csv'), frame, 'sweep', cfg.to_dict(), cfg.seeds)
    return frame


def autoencoder_features(h: Hypergraph, cfg: RunConfig, seed: int) -> AutoencoderResult:
    """Standalone feature extraction matching dataset_sample for the same seed (train-ae command)"""
    sample_seed = derive_seed(seed, 12, 0)
    rng = np.random.default_rng(sample_seed)
    propagator = build_propagator(h, rng)
    return train_autoencoder(h, train_config_for(cfg, sample_seed), rng, propagator)


def pretrain_model(cfg: RunConfig, seed: int, folder: str) -> ModelParams:
    """Pre-train on the synthetic corpus only and save the Basic model (pretrain command)"""
    tc = train_config_for(cfg, seed)
    corpus = run_stage('label', 'Corpus generation and SIR labelling', build_corpus, cfg, seed, False)
    train_s = prepare_samples(corpus.train, tc, seed, 10, True)
    val_s = prepare_samples(corpus.validation, tc, seed, 11, True)
    pre = run_stage('pretrain', 'Ranker pre-training', pretrain_ranker, train_s, tc, val_s)
    model = ModelParams(ranker=pre.params, dims={'d': cfg.d, 'L': cfg.L},
                        meta={'seed': seed, 'best_epoch': pre.best_epoch, 'config_hash': cfg.config_hash()})
    os.makedirs(folder, exist_ok=True)
    artifacts.write_csv(os.path.join(folder, 'loss_pretrain.csv'),
                        pd.DataFrame(pre.history, columns=['epoch', 'L2', 'val_tau']),
                        'pretrain', cfg.to_dict(), [seed])
    save_model(os.path.join(folder, 'model_basic.npz'), model)
    return model
