"""
Hypergraph Key-Node Orchestrator
Command entry point: generate, inspect, label, rank, train, select representatives,
fine-tune, evaluate, and run the full pipeline with run-state bookkeeping.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from datetime import datetime
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

import artifacts
import config
import pipeline
from centrality import BASELINES, ScoreVector, rank_scores
from diffusion import SirParams, influence_labels
from evaluation import evaluate_method
from fractal_select import select_for_finetune
from generators import FAMILIES, GenSpec, generate, write_generated
from hypergraph import read_hypergraph, stats
from neural import ModelParams, load_model, rank_forward, save_model
from sline import histogram_frame, s_distance_histogram
from training import finetune

logger = logging.getLogger(__name__)

# Short aliases kept for the documented command lines
FLAG_ALIASES = {
    'n_nodes': ['--n'],
    'n_hyperedges': ['--m'],
    'hdf_r': ['--r'],
    'hdf_s_m': ['--sm'],
}

HISTORY_LIMIT = 100


# ============================================================================
# LOGGING AND RUN STATE
# ============================================================================

def setup_logging(folders: Dict[str, str], level: Optional[str] = None) -> str:
    """Console plus per-run file handler, configured from LOGGING_CONFIG"""
    log_level = getattr(logging, (level or config.LOGGING_CONFIG['log_level']).upper())
    formatter = logging.Formatter(config.LOGGING_CONFIG['log_format'])
    root = logging.getLogger()
    root.setLevel(log_level)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    if config.LOGGING_CONFIG['log_to_console']:
        console = logging.StreamHandler()
        console.setFormatter(formatter)
        root.addHandler(console)

    log_file = os.path.join(folders['logs'], f"orchestrator_{folders['timestamp']}.log")
    if config.LOGGING_CONFIG['log_to_file']:
        os.makedirs(folders['logs'], exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)
    return log_file


def load_state(path: Optional[str] = None) -> dict:
    path = path or config.STATE_FILE
    if os.path.exists(path):
        with open(path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    return {
        'last_run': None,
        'last_success': None,
        'total_runs': 0,
        'successful_runs': 0,
        'failed_runs': 0,
        'run_history': [],
    }


def record_run(timestamp: str, command: str, success: bool, error: Optional[str] = None,
               path: Optional[str] = None) -> dict:
    """Append one run to the state file, keeping the last HISTORY_LIMIT entries"""
    path = path or config.STATE_FILE
    state = load_state(path)
    state['last_run'] = timestamp
    state['total_runs'] += 1
    if success:
        state['last_success'] = timestamp
        state['successful_runs'] += 1
    else:
        state['failed_runs'] += 1
    state['run_history'].append({'timestamp': timestamp, 'command': command, 'success': success, 'error': error})
    state['run_history'] = state['run_history'][-HISTORY_LIMIT:]
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(state, handle, indent=2)
    return state


# ============================================================================
# HELPERS
# ============================================================================

def _output_folder(args, cfg: config.RunConfig) -> str:
    folder = cfg.output_dir or args.folders['output']
    os.makedirs(folder, exist_ok=True)
    return folder


def _require_dataset(cfg: config.RunConfig):
    if not cfg.dataset:
        raise ValueError("this command needs --dataset <hyperedge-list file>")
    return read_hypergraph(cfg.dataset)


def _dataset_name(cfg: config.RunConfig) -> str:
    return pipeline.evaluated_graph_name(cfg)


def _read_labels(path: str, n_nodes: int) -> np.ndarray:
    frame = pd.read_csv(path)
    labels = np.zeros(n_nodes, dtype=np.float64)
    labels[frame['node_id'].to_numpy(dtype=np.int64)] = frame['label'].to_numpy(dtype=np.float64)
    return labels


def _read_scores(path: str) -> np.ndarray:
    frame = pd.read_csv(path).sort_values('node_id')
    return frame['score'].to_numpy(dtype=np.float64)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_generate(args, cfg: config.RunConfig) -> List[str]:
    family = args.family
    default_size = config.GENERATOR_CONFIG['hyperedge_size'][family]
    spec = GenSpec(
        family=family,
        n_nodes=cfg.n_nodes,
        n_hyperedges=cfg.n_hyperedges,
        hyperedge_size=args.k if args.k is not None else default_size,
        rewire_p=args.p if args.p is not None else config.GENERATOR_CONFIG['rewire_p'],
        gamma=args.exponent if args.exponent is not None else config.GENERATOR_CONFIG['gamma'],
        rng_seed=args.seed,
    )
    hypergraph = generate(spec)
    out = args.out or os.path.join(_output_folder(args, cfg),
                                   f"{family}_n{spec.n_nodes}_m{spec.n_hyperedges}_seed{spec.rng_seed}.txt")
    write_generated(out, spec, hypergraph)
    logger.info(f"[OK] Saved: {out}")
    return [out]


def cmd_stats(args, cfg: config.RunConfig) -> List[str]:
    hypergraph, _, _ = _require_dataset(cfg)
    folder = _output_folder(args, cfg)
    row = {'dataset': _dataset_name(cfg), **stats(hypergraph).as_row()}
    beta0 = config.DATASET_BETA0.get(cfg.dataset_name)
    row['beta0'] = cfg.beta0 if cfg.beta0 is not None else beta0
    frame = pd.DataFrame([row], columns=['dataset'] + config.STATS_HEADERS + ['beta0'])
    written = [artifacts.write_csv(os.path.join(folder, 'stats.csv'), frame, 'stats', cfg.to_dict())]
    for key in config.STATS_HEADERS:
        logger.info(f"  {key}: {row[key]}")

    if args.histogram:
        histogram = s_distance_histogram(hypergraph, cfg.s_max)
        written.append(artifacts.write_csv(os.path.join(folder, 'distance_histogram.csv'),
                                           histogram_frame(histogram), 'stats', cfg.to_dict()))
    return written


def cmd_label(args, cfg: config.RunConfig) -> List[str]:
    hypergraph, _, _ = _require_dataset(cfg)
    params = SirParams(beta=pipeline.beta_for(_dataset_name(cfg), cfg), gamma=cfg.gamma)
    labels = influence_labels(hypergraph, params, cfg.replicas, cfg.master_seed, threads=cfg.threads)
    path = args.out or os.path.join(_output_folder(args, cfg), f"labels_{_dataset_name(cfg)}.csv")
    artifacts.write_csv(path, labels.to_frame(), 'label', cfg.to_dict(), [cfg.master_seed], labels.provenance())
    return [path]


def _model_scores(hypergraph, cfg: config.RunConfig, model_path: str, seed: int) -> ScoreVector:
    model = load_model(model_path)
    sample = pipeline.dataset_sample(_dataset_name(cfg), hypergraph, np.zeros(hypergraph.n_nodes), cfg, seed)
    return rank_forward(sample.propagator.matrix, sample.features, model.ranker, 'ahga')


def cmd_rank(args, cfg: config.RunConfig) -> List[str]:
    hypergraph, _, _ = _require_dataset(cfg)
    method = args.method
    if method == 'ahga':
        if not args.model:
            raise ValueError("rank --method ahga needs --model <model.npz>")
        scores = _model_scores(hypergraph, cfg, args.model, args.seed)
    else:
        method_params = {'hcc': {'s': cfg.hcc_s}, 'hdf': {'r': cfg.hdf_r, 's_m': cfg.hdf_s_m}}
        scores = rank_scores(hypergraph, method, **method_params.get(method, {}))
    folder = _output_folder(args, cfg)
    return [pipeline.write_scores(folder, method, scores, cfg, args.seed)]


def cmd_train_ae(args, cfg: config.RunConfig) -> List[str]:
    hypergraph, _, _ = _require_dataset(cfg)
    folder = _output_folder(args, cfg)
    result = pipeline.autoencoder_features(hypergraph, cfg, args.seed)
    curve = pd.DataFrame({'epoch': np.arange(1, len(result.history) + 1), 'L1': result.history})
    written = [artifacts.write_csv(os.path.join(folder, 'loss_autoencoder.csv'), curve, 'train-ae',
                                   cfg.to_dict(), [args.seed])]
    model = ModelParams(ranker={}, autoencoder=result.params, w_diag=result.propagator.w_diag,
                        dims={'d': cfg.d, 'encoder_depth': cfg.encoder_depth}, meta={'seed': args.seed})
    written.append(save_model(os.path.join(folder, 'autoencoder.npz'), model))
    return written


def cmd_pretrain(args, cfg: config.RunConfig) -> List[str]:
    folder = _output_folder(args, cfg)
    pipeline.pretrain_model(cfg, args.seed, folder)
    return [os.path.join(folder, 'loss_pretrain.csv'), os.path.join(folder, 'model_basic.npz')]


def cmd_select_reps(args, cfg: config.RunConfig) -> List[str]:
    hypergraph, _, _ = _require_dataset(cfg)
    selection = select_for_finetune(hypergraph, cfg.s, cfg.theta_quantile, cfg.n_rep, cfg.theta,
                                    cfg.r_l, cfg.box_inclusive)
    path = args.out or os.path.join(_output_folder(args, cfg), f"representatives_s{cfg.s}.json")
    artifacts.write_report(path, selection.to_json(), 'select-reps', cfg.to_dict())
    return [path]


def cmd_finetune(args, cfg: config.RunConfig) -> List[str]:
    hypergraph, _, _ = _require_dataset(cfg)
    if not (args.model and args.labels and args.reps):
        raise ValueError("finetune needs --model, --labels and --reps")
    labels = _read_labels(args.labels, hypergraph.n_nodes)
    with open(args.reps, 'r', encoding='utf-8') as handle:
        rep_nodes = [int(v) for v in json.load(handle)['node_ids']]

    basic = load_model(args.model)
    sample = pipeline.dataset_sample(_dataset_name(cfg), hypergraph, labels, cfg, args.seed)
    tc = pipeline.train_config_for(cfg, args.seed)
    tuned = finetune(basic.ranker, sample, rep_nodes, labels[rep_nodes], tc)
    model = ModelParams(ranker=tuned, dims=basic.dims, meta={**basic.meta, 's': cfg.s, 'representatives': rep_nodes})
    path = os.path.join(_output_folder(args, cfg), 'model_ahga.npz')
    save_model(path, model)
    logger.info(f"[OK] Saved: {path}")
    return [path]


def cmd_evaluate(args, cfg: config.RunConfig) -> List[str]:
    hypergraph, _, _ = _require_dataset(cfg)
    if not (args.labels and args.scores):
        raise ValueError("evaluate needs --labels and --scores")
    truth = _read_labels(args.labels, hypergraph.n_nodes)
    scores = _read_scores(args.scores)
    if scores.size != hypergraph.n_nodes:
        raise ValueError(f"scores cover {scores.size} nodes, hypergraph has {hypergraph.n_nodes}")
    name = args.method or os.path.splitext(os.path.basename(args.scores))[0]
    report = evaluate_method(name, truth, scores, hypergraph, s_max=cfg.s_max,
                             with_dismantling=not args.no_dismantling)
    path = os.path.join(_output_folder(args, cfg), f"report_{name}.json")
    artifacts.write_report(path, report.to_json(), 'evaluate', cfg.to_dict())
    return [path]


def cmd_pipeline(args, cfg: config.RunConfig) -> List[str]:
    folder = _output_folder(args, cfg)
    pipeline.run_pipeline(cfg, folder)
    return [folder]


def cmd_ablate(args, cfg: config.RunConfig) -> List[str]:
    folder = _output_folder(args, cfg)
    pipeline.run_ablation(cfg, folder)
    return [os.path.join(folder, 'ablation.csv')]


def cmd_sweep(args, cfg: config.RunConfig) -> List[str]:
    folder = _output_folder(args, cfg)
    pipeline.run_sweep(cfg, folder)
    return [os.path.join(folder, 'sweep.csv')]


def cmd_status(args, cfg: config.RunConfig) -> List[str]:
    state = load_state()
    print("=" * 80)
    print("RUN STATUS")
    print("=" * 80)
    print(f"Last run:        {state['last_run']}")
    print(f"Last success:    {state['last_success']}")
    total = state['total_runs']
    rate = (state['successful_runs'] / total * 100) if total else 0.0
    print(f"Total runs:      {total} ({state['successful_runs']} ok, {state['failed_runs']} failed, {rate:.1f}%)")
    for entry in state['run_history'][-10:]:
        marker = 'OK  ' if entry['success'] else 'FAIL'
        suffix = f" - {entry['error']}" if entry.get('error') else ''
        print(f"  [{marker}] {entry['timestamp']} {entry.get('command', '')}{suffix}")
    return []


COMMANDS = {
    'generate': (cmd_generate, 'Generate a synthetic hypergraph'),
    'stats': (cmd_stats, 'Summary statistics and s-distance histogram'),
    'label': (cmd_label, 'SIR influence labels'),
    'rank': (cmd_rank, 'Score nodes with a baseline or a trained model'),
    'train-ae': (cmd_train_ae, 'Train the autoencoder on one hypergraph'),
    'pretrain': (cmd_pretrain, 'Pre-train the ranker on the synthetic corpus'),
    'select-reps': (cmd_select_reps, 'Pick representative nodes for fine-tuning'),
    'finetune': (cmd_finetune, 'Fine-tune a pre-trained ranker on representatives'),
    'evaluate': (cmd_evaluate, 'Kendall tau, overlap and dismantling for a score file'),
    'pipeline': (cmd_pipeline, 'Run every stage for every seed'),
    'ablate': (cmd_ablate, 'AHGA / AHG / HG comparison over seeds'),
    'sweep': (cmd_sweep, 'Embedding width and depth sweep'),
    'status': (cmd_status, 'Show run history'),
}


# ============================================================================
# ARGUMENT PARSING
# ============================================================================

def _config_parent() -> argparse.ArgumentParser:
    """Every RunConfig field as a text flag; load_run_config coerces the values"""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--config', help='Flat key = value run-config file')
    parent.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'])
    group = parent.add_argument_group('run configuration')
    for item in fields(config.RunConfig):
        flags = [f"--{item.name.replace('_', '-')}"] + FLAG_ALIASES.get(item.name, [])
        group.add_argument(*flags, dest=f"cfg_{item.name}", default=None, metavar='VALUE')
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Hypergraph key-node identification toolkit')
    subparsers = parser.add_subparsers(dest='command', required=True)
    parent = _config_parent()

    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[parent], help=help_text)
        sub.add_argument('--seed', type=int, default=0, help='Seed for generation and training')
        sub.add_argument('--out', help='Output file path (defaults to the run folder)')
        if name == 'generate':
            sub.add_argument('--family', choices=FAMILIES, required=True)
            sub.add_argument('--k', type=int, help='Hyperedge size')
            sub.add_argument('--p', type=float, help='WSH rewiring probability')
            sub.add_argument('--exponent', type=float, help='SFH power-law exponent')
        if name == 'stats':
            sub.add_argument('--histogram', action='store_true', help='Also export s-distance counts')
        if name in ('rank', 'evaluate'):
            choices = sorted(BASELINES) + ['ahga'] if name == 'rank' else None
            sub.add_argument('--method', choices=choices, required=name == 'rank')
        if name in ('rank', 'finetune'):
            sub.add_argument('--model', help='Model .npz file')
        if name in ('finetune', 'evaluate'):
            sub.add_argument('--labels', help='Labels CSV (node_id, label)')
        if name == 'finetune':
            sub.add_argument('--reps', help='Representatives JSON from select-reps')
        if name == 'evaluate':
            sub.add_argument('--scores', help='Scores CSV (node_id, score)')
            sub.add_argument('--no-dismantling', action='store_true')
    return parser


def config_from_args(args) -> config.RunConfig:
    overrides = {
        key[len('cfg_'):]: value for key, value in vars(args).items()
        if key.startswith('cfg_') and value is not None
    }
    return config.load_run_config(args.config, overrides)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command, record the outcome"""
    args = build_parser().parse_args(argv)
    if args.command == 'status':
        cmd_status(args, None)
        return 0

    args.folders = config.create_run_folders()
    setup_logging(args.folders, args.log_level)
    timestamp = args.folders['timestamp']

    logger.info("=" * 80)
    logger.info(f"Hypergraph Key-Node Toolkit: {args.command}")
    logger.info(f"Execution Time: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    logger.info("=" * 80)
    start_time = datetime.now()

    try:
        cfg = config_from_args(args)
        handler, _ = COMMANDS[args.command]
        written = handler(args, cfg)
    except pipeline.StageError as exc:
        logger.error("=" * 80)
        logger.error(f"Pipeline failed at stage '{exc.stage}': {exc.cause}")
        logger.error("=" * 80)
        record_run(timestamp, args.command, False, str(exc))
        return 1
    except ValueError as exc:
        logger.error(f"{args.command} failed: {exc}")
        record_run(timestamp, args.command, False, str(exc))
        return 1
    except (RuntimeError, OSError) as exc:
        logger.error(f"Unexpected error in {args.command}: {exc}")
        record_run(timestamp, args.command, False, str(exc))
        return 1

    if config.OUTPUT_CONFIG['update_latest'] and not cfg.output_dir and os.path.isdir(args.folders['output']):
        artifacts.update_latest(args.folders['output'], args.folders['latest_output'])

    duration = (datetime.now() - start_time).total_seconds()
    record_run(timestamp, args.command, True)
    logger.info("\n" + "=" * 80)
    logger.info(f"[OK] {args.command.upper()} COMPLETED SUCCESSFULLY")
    logger.info("=" * 80)
    logger.info(f"Total execution time: {duration:.2f} seconds ({duration/60:.2f} minutes)")
    for path in written:
        logger.info(f"Output: {path}")
    logger.info("=" * 80)
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.warning("\nRun interrupted by user")
        sys.exit(1)
