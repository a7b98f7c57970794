"""Tests for the command entry point and run-state bookkeeping."""

import json
import os

import pandas as pd
import pytest

import config
import orchestrator
from generators import GenSpec
from hypergraph import read_hypergraph

TINY_FLAGS = [
    '--n', '30', '--m', '30', '--replicas', '5', '--d', '8', '--ae-epochs', '5',
    '--pretrain-epochs', '3', '--patience', '2', '--fine-tune-epochs', '2', '--s', '1',
    '--s-grid', '1', '--n-rep', '3', '--theta-quantile', '0.5', '--threads', '1',
]


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Redirect logs, outputs and the state file into tmp_path"""
    monkeypatch.setattr(config, 'LOGS_DIR', str(tmp_path / "logs"))
    monkeypatch.setattr(config, 'OUTPUT_DIR', str(tmp_path / "output"))
    monkeypatch.setattr(config, 'STATE_FILE', str(tmp_path / "state.json"))
    monkeypatch.setattr(orchestrator, 'setup_logging', lambda folders, level=None: '')
    return tmp_path


def run(*argv):
    return orchestrator.main(list(argv))


def generated_graph(workspace):
    out = str(workspace / "graph.txt")
    assert run('generate', '--family', 'erh', '--n', '20', '--m', '12', '--seed', '3', '--out', out) == 0
    return out


class TestParser:
    """Flags and aliases."""

    def test_aliases_and_config_flags(self):
        args = orchestrator.build_parser().parse_args(
            ['generate', '--family', 'wsh', '--n', '50', '--m', '40', '--p', '0.2', '--seeds', '1,2'])
        cfg = orchestrator.config_from_args(args)
        assert (cfg.n_nodes, cfg.n_hyperedges, cfg.seeds) == (50, 40, [1, 2])
        assert args.p == 0.2

    def test_rank_needs_a_method(self):
        with pytest.raises(SystemExit):
            orchestrator.build_parser().parse_args(['rank'])

    def test_every_command_is_registered(self):
        parser = orchestrator.build_parser()
        for name in orchestrator.COMMANDS:
            extra = ['--family', 'erh'] if name == 'generate' else ['--method', 'dc'] if name == 'rank' else []
            assert parser.parse_args([name] + extra).command == name


class TestRunState:
    """orchestrator_state.json accounting."""

    def test_fresh_state(self, workspace):
        state = orchestrator.load_state()
        assert state['total_runs'] == 0
        assert state['run_history'] == []

    def test_success_and_failure_counts(self, workspace):
        orchestrator.record_run('t1', 'stats', True)
        state = orchestrator.record_run('t2', 'label', False, 'boom')
        assert (state['total_runs'], state['successful_runs'], state['failed_runs']) == (2, 1, 1)
        assert state['last_success'] == 't1'
        assert state['last_run'] == 't2'
        assert state['run_history'][-1]['error'] == 'boom'

    def test_history_is_capped(self, workspace):
        for k in range(orchestrator.HISTORY_LIMIT + 5):
            state = orchestrator.record_run(f"t{k}", 'stats', True)
        assert len(state['run_history']) == orchestrator.HISTORY_LIMIT
        assert state['run_history'][0]['timestamp'] == 't5'

    def test_status_prints_history(self, workspace, capsys):
        orchestrator.record_run('t1', 'stats', False, 'no dataset')
        assert run('status') == 0
        printed = capsys.readouterr().out
        assert "RUN STATUS" in printed
        assert "no dataset" in printed


class TestCommands:
    """Commands end to end on small graphs."""

    def test_generate_writes_header(self, workspace):
        out = generated_graph(workspace)
        h, _, header = read_hypergraph(out)
        assert GenSpec.from_header(header) == GenSpec('erh', 20, 12, 3, rewire_p=0.5, gamma=2.0, rng_seed=3)
        assert h.n_hyperedges == 12
        with open(config.STATE_FILE, encoding='utf-8') as handle:
            assert json.load(handle)['successful_runs'] == 1

    def test_missing_dataset_is_a_recorded_failure(self, workspace):
        assert run('stats') == 1
        state = orchestrator.load_state()
        assert state['failed_runs'] == 1
        assert '--dataset' in state['run_history'][-1]['error']

    def test_invalid_config_is_a_recorded_failure(self, workspace):
        assert run('stats', '--d', '10') == 1
        assert orchestrator.load_state()['failed_runs'] == 1

    def test_stats_with_histogram(self, workspace):
        graph = generated_graph(workspace)
        out = str(workspace / "stats")
        assert run('stats', '--dataset', graph, '--output-dir', out, '--histogram') == 0
        frame = pd.read_csv(os.path.join(out, 'stats.csv'))
        assert list(frame.columns) == ['dataset'] + config.STATS_HEADERS + ['beta0']
        assert frame.loc[0, 'N'] == 20
        assert os.path.exists(os.path.join(out, 'distance_histogram.csv'))

    def test_label_rank_evaluate(self, workspace):
        graph = generated_graph(workspace)
        out = str(workspace / "eval")
        common = ['--dataset', graph, '--output-dir', out, '--beta0', '0.2', '--replicas', '20']
        assert run('label', *common) == 0
        assert run('rank', '--method', 'dc', *common) == 0
        labels = os.path.join(out, 'labels_graph.csv')
        scores = os.path.join(out, 'scores_dc.csv')
        assert run('evaluate', '--labels', labels, '--scores', scores, '--method', 'dc', *common) == 0
        with open(os.path.join(out, 'report_dc.json'), encoding='utf-8') as handle:
            report = json.load(handle)
        assert report['method'] == 'dc'
        assert -1.0 <= report['tau'] <= 1.0
        assert report['delta_eff']['0.00'] == 0.0

    def test_unknown_beta_fails(self, workspace):
        graph = generated_graph(workspace)
        assert run('label', '--dataset', graph, '--output-dir', str(workspace / "x")) == 1

    def test_train_pretrain_select_finetune_rank(self, workspace):
        graph = generated_graph(workspace)
        out = str(workspace / "model")
        common = TINY_FLAGS + ['--output-dir', out]
        dataset = ['--dataset', graph, '--beta0', '0.2']
        assert run('train-ae', *common, *dataset) == 0
        assert os.path.exists(os.path.join(out, 'loss_autoencoder.csv'))
        assert run('pretrain', *common) == 0
        assert run('label', *common, *dataset) == 0
        assert run('select-reps', *common, *dataset) == 0
        assert run('finetune', *common, *dataset,
                   '--model', os.path.join(out, 'model_basic.npz'),
                   '--labels', os.path.join(out, 'labels_graph.csv'),
                   '--reps', os.path.join(out, 'representatives_s1.json')) == 0
        assert run('rank', '--method', 'ahga', '--model', os.path.join(out, 'model_ahga.npz'),
                   *common, *dataset) == 0
        scores = pd.read_csv(os.path.join(out, 'scores_ahga.csv'))
        assert len(scores) == 20

    def test_finetune_requires_inputs(self, workspace):
        graph = generated_graph(workspace)
        assert run('finetune', '--dataset', graph) == 1

    def test_pipeline_command(self, workspace):
        out = str(workspace / "pipeline")
        assert run('pipeline', *TINY_FLAGS, '--output-dir', out) == 0
        assert os.path.exists(os.path.join(out, 's_order_tau.csv'))
        assert os.path.exists(os.path.join(out, 'seed_0', 'model_ahga.npz'))

    def test_latest_folder_mirrors_run_output(self, workspace):
        graph = generated_graph(workspace)
        assert run('stats', '--dataset', graph) == 0
        latest = os.path.join(config.OUTPUT_DIR, config.LATEST_FOLDER_NAME)
        assert os.path.exists(os.path.join(latest, 'stats.csv'))
