"""
Artifact layout of a run's output directory.
Every stage reads its inputs from here and writes its outputs here.
"""

import json
import os

from utils.errors import DataError

CRASHES_CSV = 'crashes.csv'
FULL_SCHEMA = 'schema_full.json'
RANKING = 'ranking.json'
SELECTED_SCHEMA = 'schema.json'
RESAMPLED_CSV = 'resampled.csv'
RESAMPLE_STATS = 'resample_stats.json'
DRIFT = 'drift.json'
DRIFT_SVG = 'drift.svg'
SPLIT_NAMES = ('train', 'val', 'test')


def path(config, *parts):
    return os.path.join(config.output_dir, *parts)


def split_path(config, name):
    return path(config, 'splits', f'{name}.csv')


def checkpoint_path(config, kind):
    return path(config, 'checkpoints', f'{kind}.ckpt.json')


def history_path(config, kind):
    return path(config, kind, 'history.json')


def leaderboard_path(config, kind):
    return path(config, f'leaderboard_{kind}.json')


def report_dir(config, kind=None):
    return path(config, 'reports', kind) if kind else path(config, 'reports')


def ensure_parent(file_path):
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    return file_path


def require(file_path, stage):
    """Fail with a pointer to the stage that produces a missing artifact"""
    if not os.path.exists(file_path):
        raise DataError(f"Missing {file_path}; run `sev-forge {stage}` first")
    return file_path


def read_json(file_path, stage):
    with open(require(file_path, stage), 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"Invalid JSON in {file_path}: {e}")
