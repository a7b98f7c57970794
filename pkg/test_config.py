"""Tests for the run configuration: defaults, file loading, coercion and hashing."""

import pytest

import config
from config import RunConfig, load_run_config, parse_config_lines


class TestDefaults:
    """Module-level settings."""

    def test_module_settings_validate(self):
        assert config.validate_config() is True

    def test_default_run_config_is_valid(self):
        assert RunConfig().validate() is True

    def test_synthetic_families_have_beta0(self):
        assert {'ERH', 'WSH', 'SFH'} <= set(config.DATASET_BETA0)
        assert all(0.0 < beta <= 1.0 for beta in config.DATASET_BETA0.values())

    def test_best_orders_cover_known_datasets(self):
        assert set(config.DATASET_BEST_S) <= set(config.DATASET_BETA0)

    def test_run_folders(self):
        folders = config.get_run_folders('20250101_000000')
        assert folders['timestamp'] == '20250101_000000'
        assert folders['output'].endswith('20250101_000000')
        assert folders['latest_output'].endswith(config.LATEST_FOLDER_NAME)

    @pytest.mark.parametrize("raw,expected", [('4', 4), ('0', 1), ('many', 1)])
    def test_thread_count_from_environment(self, monkeypatch, raw, expected):
        monkeypatch.setenv('HYPERKEY_THREADS', raw)
        assert config.default_threads() == expected


class TestParsing:
    """Flat key = value files."""

    def test_comments_blank_lines_and_dashes(self):
        values = parse_config_lines(["# run", "", "n-rep = 3   # fewer", "d=64"])
        assert values == {'n_rep': '3', 'd': '64'}

    def test_line_without_equals(self):
        with pytest.raises(ValueError, match="expected 'key = value'"):
            parse_config_lines(["d 64"])


class TestLoadRunConfig:
    """Defaults, file values and overrides merged and coerced."""

    def test_file_values_are_coerced(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "d = 64\n"
            "seeds = 0, 1, 2\n"
            "beta0 = 0.05\n"
            "decoder_relu = yes\n"
            "theta = none\n"
            "train_families = erh wsh\n",
            encoding='utf-8',
        )
        cfg = load_run_config(str(path))
        assert cfg.d == 64
        assert cfg.seeds == [0, 1, 2]
        assert cfg.beta0 == 0.05
        assert cfg.decoder_relu is True
        assert cfg.theta is None
        assert cfg.train_families == ['erh', 'wsh']

    def test_overrides_win_over_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("d = 64\nn_rep = 4\n", encoding='utf-8')
        cfg = load_run_config(str(path), {'d': '32', 'n_rep': None})
        assert cfg.d == 32
        assert cfg.n_rep == 4

    def test_typed_overrides_pass_through(self):
        cfg = load_run_config(overrides={'s_grid': [2, 4], 'hdf_r': 1.5})
        assert cfg.s_grid == [2, 4]
        assert cfg.hdf_r == 1.5

    @pytest.mark.parametrize("name,expected", [('Algebra', 3), ('Senate-Com', 9), ('Email-Enron', 2)])
    def test_named_dataset_takes_best_order(self, name, expected):
        assert load_run_config(overrides={'dataset_name': name}).s == expected

    def test_explicit_order_beats_dataset_default(self, tmp_path):
        assert load_run_config(overrides={'dataset_name': 'House-Com', 's': '4'}).s == 4
        path = tmp_path / "run.cfg"
        path.write_text("dataset_name = Senate-Com\ns = 5\n", encoding='utf-8')
        assert load_run_config(str(path)).s == 5

    def test_unlisted_dataset_keeps_default_order(self):
        cfg = load_run_config(overrides={'dataset_name': 'ERH'})
        assert cfg.s == config.FRACTAL_CONFIG['s']

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="Unknown configuration keys: colour"):
            load_run_config(overrides={'colour': 'red'})

    def test_bad_boolean(self):
        with pytest.raises(ValueError, match="expected a boolean"):
            load_run_config(overrides={'box_inclusive': 'maybe'})

    def test_every_problem_is_reported(self):
        with pytest.raises(ValueError) as excinfo:
            load_run_config(overrides={'d': '10', 'gamma': '0', 'test_family': 'xyz'})
        message = str(excinfo.value)
        assert "d must be a positive multiple of 4" in message
        assert "gamma must be in (0, 1]" in message
        assert "unknown generator families" in message


class TestConfigHash:
    """Hash over settings that change primary outputs."""

    def test_equal_configs_hash_equal(self):
        assert RunConfig().config_hash() == RunConfig().config_hash()

    def test_output_location_and_threads_are_ignored(self):
        base = RunConfig()
        moved = RunConfig(output_dir='/tmp/elsewhere', threads=8)
        assert base.config_hash() == moved.config_hash()

    def test_model_width_changes_hash(self):
        assert RunConfig(d=64).config_hash() != RunConfig(d=128).config_hash()
