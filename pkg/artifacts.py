"""
Output writers with provenance sidecars

Every primary file gets a `<file>.meta.json` next to it holding the config
hash, seeds, package versions and the producing stage. Sidecars carry no
timestamps, so equal configurations give byte-identical files.
"""

import hashlib
import json
import logging
import os
import shutil
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy

import config

logger = logging.getLogger(__name__)

# Human-readable second header row for the comparison spreadsheet
COMPARISON_SUBHEADERS = {
    'dataset': 'Hypergraph',
    'method': 'Ranking method',
    'seed': 'Seed',
    'tau': 'Kendall tau',
    'basic_tau': 'Pre-trained tau',
    'metric': 'Metric',
    'x': 'f% / p',
    'value': 'Value',
}


def config_hash(settings: Dict[str, object]) -> str:
    """sha256 of the canonical JSON form of a settings mapping"""
    canonical = json.dumps(settings, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def package_versions() -> Dict[str, str]:
    return {'numpy': np.__version__, 'scipy': scipy.__version__, 'pandas': pd.__version__}


def provenance(stage: str, settings: Dict[str, object], seeds: Sequence[int] = (),
               extra: Optional[Dict[str, object]] = None) -> Dict[str, object]:
    record = {
        'stage': stage,
        'config_hash': config_hash(settings),
        'seeds': [int(s) for s in seeds],
        'versions': package_versions(),
    }
    if extra:
        record['params'] = extra
    return record


def write_json(path: str, payload: Dict[str, object]) -> str:
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write('\n')
    return path


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_sidecar(path: str, stage: str, settings: Dict[str, object], seeds: Sequence[int] = (),
                  extra: Optional[Dict[str, object]] = None) -> str:
    return write_json(f"{path}.meta.json", provenance(stage, settings, seeds, extra))


def write_csv(path: str, frame: pd.DataFrame, stage: str, settings: Dict[str, object],
              seeds: Sequence[int] = (), extra: Optional[Dict[str, object]] = None) -> str:
    """CSV with stable float formatting plus its provenance sidecar"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format=config.OUTPUT_CONFIG['float_format'], lineterminator='\n')
    write_sidecar(path, stage, settings, seeds, extra)
    logger.info(f"[OK] Saved: {path}")
    return path


def write_report(path: str, payload: Dict[str, object], stage: str, settings: Dict[str, object],
                 seeds: Sequence[int] = ()) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    write_json(path, payload)
    write_sidecar(path, stage, settings, seeds)
    logger.info(f"[OK] Saved: {path}")
    return path


def write_comparison_table(folder: str, name: str, frame: pd.DataFrame, stage: str,
                           settings: Dict[str, object], seeds: Sequence[int] = (),
                           output_format: Optional[str] = None) -> List[str]:
    """
    Comparison table as CSV, and as a two-header-row XLSX when requested

    Returns:
        Paths written
    """
    output_format = output_format or config.OUTPUT_CONFIG['output_format']
    written = []
    if output_format in ('csv', 'both'):
        written.append(write_csv(os.path.join(folder, f"{name}.csv"), frame, stage, settings, seeds))
    if output_format in ('xlsx', 'both'):
        written.append(_write_xlsx(os.path.join(folder, f"{name}.xlsx"), frame))
    return written


def _write_xlsx(path: str, frame: pd.DataFrame) -> str:
    import openpyxl

    wb = openpyxl.Workbook()
    ws = wb.active
    ws.title = 'comparison'

    # Row 1: column keys, row 2: readable sub-headers, row 3+: data
    for col_idx, column in enumerate(frame.columns, start=1):
        ws.cell(row=1, column=col_idx, value=str(column))
        ws.cell(row=2, column=col_idx, value=COMPARISON_SUBHEADERS.get(str(column), str(column)))

    for row_idx, row in enumerate(frame.itertuples(index=False), start=3):
        for col_idx, value in enumerate(row, start=1):
            if isinstance(value, (np.integer, np.floating)):
                value = value.item()
            ws.cell(row=row_idx, column=col_idx, value=value)

    wb.save(path)
    logger.info(f"[OK] Saved: {path}")
    return path


def update_latest(folder: str, latest_folder: str, names: Optional[Iterable[str]] = None) -> int:
    """Mirror a run folder's files into the `latest` folder"""
    os.makedirs(latest_folder, exist_ok=True)
    copied = 0
    for entry in sorted(names if names is not None else os.listdir(folder)):
        source = os.path.join(folder, entry)
        if os.path.isfile(source):
            shutil.copy2(source, os.path.join(latest_folder, entry))
            copied += 1
    logger.info(f"[OK] Updated {latest_folder} with {copied} files")
    return copied
