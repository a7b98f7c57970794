"""
Configuration file for the Hypergraph Key-Node Toolkit
Contains every tunable of the pipeline, grouped by stage, plus run-config loading
"""

import os
import json
import hashlib
from dataclasses import dataclass, field, fields, asdict
from datetime import datetime
from typing import Dict, List, Optional

from dotenv import load_dotenv

# Load environment variables (only HYPERKEY_THREADS is consulted)
load_dotenv()

# ============================================================================
# DATASET CONSTANTS
# ============================================================================

# Infection probability beta0 per hypergraph (slightly above the epidemic threshold)
DATASET_BETA0 = {
    'WSH': 0.020,
    'ERH': 0.030,
    'SFH': 0.008,
    'Senate-Com': 0.036,
    'Algebra': 0.198,
    'Rest-Rev': 0.026,
    'Geometry': 0.040,
    'Music-Rev': 0.012,
    'House-Com': 0.012,
    'Email-Enron': 0.014,
    'Email-W3C': 0.300,
}

# Best active-learning order s per empirical hypergraph
DATASET_BEST_S = {
    'Senate-Com': 9,
    'Algebra': 3,
    'Rest-Rev': 3,
    'Geometry': 2,
    'Music-Rev': 3,
    'House-Com': 7,
    'Email-Enron': 2,
    'Email-W3C': 2,
}

# Stats CSV columns - EXACT ORDER (N, M, <K^V>, <K^H>, <K^E>, CV(K^V))
STATS_HEADERS = ['N', 'M', 'avg_degree', 'avg_hyperdegree', 'avg_hyperedge_size', 'cv_degree']

# ============================================================================
# SIMULATION CONFIGURATION
# ============================================================================

SIR_CONFIG = {
    'beta': 0.020,           # Infection probability (overridden per dataset)
    'gamma': 1.0,            # Recovery probability, one-step infectiousness
    'max_steps': 0,          # 0 = run until no infected remain
    'replicas': 1000,        # Monte Carlo runs per seed node
    'master_seed': 2024,
    'exact_max_nodes': 10,   # Exact oracle refuses larger instances
    'exact_budget': 2_000_000,  # Enumerated transitions before giving up
}

# ============================================================================
# GENERATOR CONFIGURATION
# ============================================================================

GENERATOR_CONFIG = {
    'n_nodes': 1000,
    'n_hyperedges': 1000,
    'hyperedge_size': {'erh': 3, 'wsh': 3, 'sfh': 5},
    'rewire_p': 0.5,         # WSH only
    'gamma': 2.0,            # SFH power-law exponent
    'max_rejections': 1_000_000,
}

# ============================================================================
# DISTANCE / CENTRALITY CONFIGURATION
# ============================================================================

SLINE_CONFIG = {
    'dense_cap': 5000,       # Above this N node distances are computed row by row
    'row_block': 256,
}

CENTRALITY_CONFIG = {
    'hcc_s': 1,
    'hdf_r': 2.0,
    'hdf_s_m': 3,
    'hdf_squared_membership': True,  # f(l) = n(l) * x(l)^2
    'vc_tol': 1e-10,
    'vc_max_iter': 100_000,
}

# ============================================================================
# ACTIVE LEARNING CONFIGURATION
# ============================================================================

FRACTAL_CONFIG = {
    's': 2,
    'theta_quantile': 0.90,
    'theta': None,           # Absolute threshold override
    'n_rep': 10,
    'r_l': None,             # None = floor(diameter / 2)
    'box_inclusive': True,   # Box holds nodes at distance <= r_B
    'flat_tol': 1e-9,        # |1 - d_f| below this uses the -x ln x limit
}

# ============================================================================
# MODEL / TRAINING CONFIGURATION
# ============================================================================

MODEL_CONFIG = {
    'd': 256,
    'encoder_depth': 2,
    'decoder_hidden': 0,     # 0 = d / 4
    'decoder_relu': False,
    'ranker_layers': 2,
    'ranker_hidden': 0,      # 0 = d / 4
}

TRAIN_CONFIG = {
    'learning_rate': 0.01,
    'ae_epochs': 200,
    'pretrain_epochs': 300,
    'patience': 30,
    'adam_beta1': 0.9,
    'adam_beta2': 0.999,
    'adam_eps': 1e-8,
    'fine_tune_lr': 0.001,
    'fine_tune_epochs': 50,
}

# ============================================================================
# EVALUATION CONFIGURATION
# ============================================================================

EVAL_CONFIG = {
    'overlap_f': [5, 10, 15, 20, 25],
    'dismantle_p': [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50],
    's_max': 6,
    'tau_variant': 'a',
}

# ============================================================================
# PIPELINE CONFIGURATION
# ============================================================================

PIPELINE_CONFIG = {
    'train_families': ['erh', 'wsh', 'sfh'],
    'train_per_family': 1,
    'val_graphs': 1,
    'test_family': 'sfh',
    'n_nodes': 200,
    'n_hyperedges': 200,
    's_grid': [1, 2, 3],
    'seeds': [0],
    'ablation_seeds': 10,
    'sweep_d': [64, 128, 256, 512],
    'sweep_L': [1, 2, 3, 4],
}

# ============================================================================
# FOLDER STRUCTURE CONFIGURATION
# ============================================================================

# Base project directory (auto-detected)
PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))

LOGS_FOLDER = "logs"
OUTPUT_FOLDER = "output"
LATEST_FOLDER_NAME = "latest"
STATE_FILE = os.path.join(PROJECT_ROOT, "orchestrator_state.json")

LOGS_DIR = os.path.join(PROJECT_ROOT, LOGS_FOLDER)
OUTPUT_DIR = os.path.join(PROJECT_ROOT, OUTPUT_FOLDER)

# ============================================================================
# LOGGING / OUTPUT CONFIGURATION
# ============================================================================

LOGGING_CONFIG = {
    'log_level': 'INFO',  # Options: DEBUG, INFO, WARNING, ERROR, CRITICAL
    'log_format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    'log_to_console': True,
    'log_to_file': True,
}

OUTPUT_CONFIG = {
    'output_format': 'csv',   # Options: 'csv', 'xlsx', 'both' (comparison tables)
    'float_format': '%.12g',
    'update_latest': True,
}

# ============================================================================
# HELPER FUNCTIONS
# ============================================================================

def default_threads():
    """Worker count from HYPERKEY_THREADS, defaulting to 1"""
    value = os.getenv('HYPERKEY_THREADS', '1')
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def get_timestamp():
    """Generate timestamp for folder naming"""
    return datetime.now().strftime("%Y%m%d_%H%M%S")


def get_run_folders(timestamp=None):
    """Get folder paths for a specific run"""
    if timestamp is None:
        timestamp = get_timestamp()

    return {
        'timestamp': timestamp,
        'logs': os.path.join(LOGS_DIR, timestamp),
        'output': os.path.join(OUTPUT_DIR, timestamp),
        'latest_output': os.path.join(OUTPUT_DIR, LATEST_FOLDER_NAME)
    }


def create_run_folders(timestamp=None):
    """Create all necessary folders for a run"""
    folders = get_run_folders(timestamp)

    for folder_path in [folders['logs'], folders['output'], folders['latest_output']]:
        os.makedirs(folder_path, exist_ok=True)

    return folders

# ============================================================================
# RUN CONFIGURATION
# ============================================================================

@dataclass
class RunConfig:
    """Flat run configuration; every field is a config-file key and a CLI flag"""
    dataset: str = ''                 # Hyperedge-list file; empty = synthetic test graph
    dataset_name: str = ''            # Key into DATASET_BETA0 / DATASET_BEST_S
    test_family: str = PIPELINE_CONFIG['test_family']
    train_families: List[str] = field(default_factory=lambda: list(PIPELINE_CONFIG['train_families']))
    train_per_family: int = PIPELINE_CONFIG['train_per_family']
    val_graphs: int = PIPELINE_CONFIG['val_graphs']
    n_nodes: int = PIPELINE_CONFIG['n_nodes']
    n_hyperedges: int = PIPELINE_CONFIG['n_hyperedges']
    beta0: Optional[float] = None     # None = per-dataset value
    gamma: float = SIR_CONFIG['gamma']
    replicas: int = SIR_CONFIG['replicas']
    s: int = FRACTAL_CONFIG['s']
    s_grid: List[int] = field(default_factory=lambda: list(PIPELINE_CONFIG['s_grid']))
    d: int = MODEL_CONFIG['d']
    L: int = MODEL_CONFIG['ranker_layers']
    encoder_depth: int = MODEL_CONFIG['encoder_depth']
    decoder_relu: bool = MODEL_CONFIG['decoder_relu']
    theta_quantile: float = FRACTAL_CONFIG['theta_quantile']
    theta: Optional[float] = FRACTAL_CONFIG['theta']
    n_rep: int = FRACTAL_CONFIG['n_rep']
    r_l: Optional[int] = FRACTAL_CONFIG['r_l']
    box_inclusive: bool = FRACTAL_CONFIG['box_inclusive']
    learning_rate: float = TRAIN_CONFIG['learning_rate']
    ae_epochs: int = TRAIN_CONFIG['ae_epochs']
    pretrain_epochs: int = TRAIN_CONFIG['pretrain_epochs']
    patience: int = TRAIN_CONFIG['patience']
    fine_tune_lr: float = TRAIN_CONFIG['fine_tune_lr']
    fine_tune_epochs: int = TRAIN_CONFIG['fine_tune_epochs']
    hcc_s: int = CENTRALITY_CONFIG['hcc_s']
    hdf_r: float = CENTRALITY_CONFIG['hdf_r']
    hdf_s_m: int = CENTRALITY_CONFIG['hdf_s_m']
    s_max: int = EVAL_CONFIG['s_max']
    seeds: List[int] = field(default_factory=lambda: list(PIPELINE_CONFIG['seeds']))
    ablation_seeds: int = PIPELINE_CONFIG['ablation_seeds']
    master_seed: int = SIR_CONFIG['master_seed']
    threads: int = field(default_factory=default_threads)
    output_dir: str = ''              # Empty = timestamped run folder

    def validate(self):
        """Validate run settings, raising ValueError with every problem found"""
        errors = []
        if self.beta0 is not None and not 0.0 < self.beta0 <= 1.0:
            errors.append(f"beta0 must be in (0, 1], got {self.beta0}")
        if not 0.0 < self.gamma <= 1.0:
            errors.append(f"gamma must be in (0, 1], got {self.gamma}")
        if self.d <= 0 or self.d % 4 != 0:
            errors.append(f"d must be a positive multiple of 4, got {self.d}")
        if self.n_rep < 1:
            errors.append(f"n_rep must be >= 1, got {self.n_rep}")
        if not 0.0 < self.theta_quantile < 1.0:
            errors.append(f"theta_quantile must be in (0, 1), got {self.theta_quantile}")
        if self.replicas < 1:
            errors.append(f"replicas must be >= 1, got {self.replicas}")
        if self.s < 1 or any(s < 1 for s in self.s_grid):
            errors.append("active-learning orders must be >= 1")
        if self.L < 1 or self.encoder_depth < 1:
            errors.append("L and encoder_depth must be >= 1")
        if self.learning_rate <= 0 or self.fine_tune_lr <= 0:
            errors.append("learning rates must be > 0")
        if self.ae_epochs < 1:
            errors.append(f"ae_epochs must be >= 1, got {self.ae_epochs}")
        unknown = [f for f in self.train_families + [self.test_family] if f not in ('erh', 'wsh', 'sfh')]
        if unknown:
            errors.append(f"unknown generator families: {unknown}")
        if not self.seeds:
            errors.append("at least one seed is required")

        if errors:
            raise ValueError("Run configuration validation failed:\n" + "\n".join(errors))
        return True

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        """sha256 over every setting that can change primary outputs"""
        payload = self.to_dict()
        payload.pop('output_dir', None)
        payload.pop('threads', None)
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


# Fields whose default is None need an explicit value type
_OPTIONAL_TYPES = {'beta0': float, 'theta': float, 'r_l': int}


def _coerce(key, raw, default):
    """Convert a text value to the type of the field default"""
    raw = raw.strip()
    if default is None:
        if raw.lower() in ('', 'none', 'null'):
            return None
        return _OPTIONAL_TYPES[key](raw)
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered in ('1', 'true', 'yes', 'on'):
            return True
        if lowered in ('0', 'false', 'no', 'off'):
            return False
        raise ValueError(f"{key}: expected a boolean, got '{raw}'")
    if isinstance(default, list):
        items = [item for item in raw.replace(' ', ',').split(',') if item]
        item_type = type(default[0]) if default else str
        return [item_type(item) for item in items]
    return type(default)(raw)


def parse_config_lines(lines):
    """Parse flat `key = value` lines; '#' starts a comment"""
    values = {}
    for number, line in enumerate(lines, 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ValueError(f"config line {number}: expected 'key = value', got '{line}'")
        key, value = line.split('=', 1)
        values[key.strip().replace('-', '_')] = value.strip()
    return values


def load_run_config(path=None, overrides: Optional[Dict[str, object]] = None):
    """
    Build a RunConfig from defaults, an optional flat config file and overrides

    A dataset_name listed in DATASET_BEST_S sets s unless s is given.

    Args:
        path: Optional path to a `key = value` text file
        overrides: Mapping of field name to value (text or already typed)

    Returns:
        RunConfig: validated configuration
    """
    config = RunConfig()
    defaults = {f.name: getattr(config, f.name) for f in fields(RunConfig)}

    raw_values = {}
    if path:
        with open(path, 'r', encoding='utf-8') as handle:
            raw_values.update(parse_config_lines(handle.readlines()))
    for key, value in (overrides or {}).items():
        if value is not None:
            raw_values[key.replace('-', '_')] = value

    unknown = sorted(set(raw_values) - set(defaults))
    if unknown:
        raise ValueError(f"Unknown configuration keys: {', '.join(unknown)}")

    for key, value in raw_values.items():
        if isinstance(value, str):
            value = _coerce(key, value, defaults[key])
        setattr(config, key, value)

    if 's' not in raw_values and config.dataset_name in DATASET_BEST_S:
        config.s = DATASET_BEST_S[config.dataset_name]

    config.validate()
    return config

# ============================================================================
# VALIDATION
# ============================================================================

def validate_config():
    """Validate configuration settings"""
    errors = []

    if MODEL_CONFIG['d'] % 4 != 0:
        errors.append(f"MODEL_CONFIG d must be divisible by 4, got {MODEL_CONFIG['d']}")

    if not 0.0 < SIR_CONFIG['gamma'] <= 1.0:
        errors.append(f"SIR_CONFIG gamma must be in (0, 1], got {SIR_CONFIG['gamma']}")

    if not 0.0 <= SIR_CONFIG['beta'] <= 1.0:
        errors.append(f"SIR_CONFIG beta must be in [0, 1], got {SIR_CONFIG['beta']}")

    if not 0.0 < FRACTAL_CONFIG['theta_quantile'] < 1.0:
        errors.append("FRACTAL_CONFIG theta_quantile must be in (0, 1)")

    if FRACTAL_CONFIG['n_rep'] < 1:
        errors.append("FRACTAL_CONFIG n_rep must be >= 1")

    if GENERATOR_CONFIG['gamma'] <= 1.0:
        errors.append("GENERATOR_CONFIG gamma must be > 1")

    if OUTPUT_CONFIG['output_format'] not in ('csv', 'xlsx', 'both'):
        errors.append(f"Unknown output_format '{OUTPUT_CONFIG['output_format']}'")

    if errors:
        raise ValueError("Configuration validation failed:\n" + "\n".join(errors))

    return True

# Validate on import
validate_config()
