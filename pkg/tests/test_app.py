#!/usr/bin/env python3
"""
End-to-end tests for the sev-forge command line
"""

import pytest
import json
import os
import sys

import numpy as np
import yaml
from click.testing import CliRunner

# Add parent directory to path to import app
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app import cli
from utils.data_processing import Dataset, FieldSpec, Schema, encode_onehot, write_dataset_csv, write_encoded_csv, \
    write_schema

LEVELS = ('a', 'b', 'c')


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def source(tmp_path):
    """150 crashes over three fields; 'Key' determines the severity"""
    rng = np.random.default_rng(0)
    schema = Schema(fields=tuple(FieldSpec(name=name, levels=LEVELS) for name in ('Key', 'NoiseA', 'NoiseB')))
    labels = np.repeat([0, 1, 2], [40, 70, 40])
    values = np.column_stack([labels, rng.integers(0, 3, size=150), rng.integers(0, 3, size=150)])
    data_dir = tmp_path / 'data'
    data_dir.mkdir()
    write_dataset_csv(Dataset(schema, values=values, labels=labels), str(data_dir / 'crashes.csv'))
    write_schema(schema, str(data_dir / 'schema.json'))
    return data_dir


def tiny_config(tmp_path, source, **changes):
    raw = {
        'config_version': 1,
        'seed': 3,
        'data': {'csv': str(source / 'crashes.csv'), 'schema': str(source / 'schema.json')},
        'output_dir': str(tmp_path / 'run'),
        'selection': {
            'top_k': 3,
            'forest': {'n_trees': 5, 'max_depth': 3, 'min_samples_leaf': 1, 'feature_subsample': 1.0},
            'gbdt': {'n_trees': 5, 'max_depth': 2},
        },
        'training': {'models': ['armnet', 'mambanet'], 'patience': 2},
        'hyperparams': {
            'armnet': {'embed_dim': 4, 'num_heads': 1, 'num_cross': 2, 'hidden_dim': 8, 'num_layers': 1,
                       'epochs': 2, 'lr': 1.0e-2},
            'mambanet': {'embed_dim': 4, 'num_conv': 1, 'lstm_hidden': 4, 'hidden_dims': [8],
                         'epochs': 2, 'lr': 1.0e-2},
        },
        'report': {'formats': ['json', 'csv', 'markdown', 'svg']},
    }
    raw.update(changes)
    path = tmp_path / 'config.yaml'
    path.write_text(yaml.safe_dump(raw), encoding='utf-8')
    return str(path)


def error_line(output):
    """The JSON error record among the captured output lines"""
    for line in output.splitlines():
        if line.startswith('{"error"'):
            return json.loads(line)
    return None


def test_pipeline_writes_every_artifact(runner, tmp_path, source):
    config = tiny_config(tmp_path, source)
    result = runner.invoke(cli, ['pipeline', '--config', config])
    assert result.exit_code == 0, result.output
    run = tmp_path / 'run'
    for name in ('ranking.json', 'schema.json', 'resampled.csv', 'resample_stats.json', 'drift.json', 'drift.svg',
                 'splits/train.csv', 'splits/val.csv', 'splits/test.csv',
                 'checkpoints/armnet.ckpt.json', 'checkpoints/armnet.meta.json', 'checkpoints/mambanet.ckpt.json',
                 'armnet/history.json', 'mambanet/history.csv',
                 'reports/summary.md', 'reports/summary.json',
                 'reports/armnet/report.json', 'reports/mambanet/report.md', 'reports/mambanet/confusion.svg'):
        assert (run / name).exists(), name

    ranking = json.loads((run / 'ranking.json').read_text(encoding='utf-8'))
    assert ranking['selected'][0] == 'Key'
    summary = (run / 'reports' / 'summary.md').read_text(encoding='utf-8')
    assert '| ARM-Net |' in summary and '| MambaNet |' in summary
    assert 'pipeline: ARM-Net accuracy' in result.output


def test_stages_run_separately_and_rerun_identically(runner, tmp_path, source):
    config = tiny_config(tmp_path, source)
    for stage in ('select-features', 'resample', 'train', 'evaluate'):
        result = runner.invoke(cli, [stage, '--config', config])
        assert result.exit_code == 0, result.output
    rerun = runner.invoke(cli, ['pipeline', '--config', config, '--out', str(tmp_path / 'again')])
    assert rerun.exit_code == 0, rerun.output
    for name in ('reports/armnet/report.json', 'reports/mambanet/report.json', 'reports/summary.md',
                 'checkpoints/armnet.ckpt.json', 'checkpoints/armnet.meta.json',
                 'checkpoints/mambanet.ckpt.json', 'checkpoints/mambanet.meta.json',
                 'armnet/history.csv', 'mambanet/history.csv', 'resampled.csv', 'ranking.json'):
        assert (tmp_path / 'run' / name).read_bytes() == (tmp_path / 'again' / name).read_bytes(), name


def test_stage_without_inputs_points_at_missing_stage(runner, tmp_path, source):
    result = runner.invoke(cli, ['train', '--config', tiny_config(tmp_path, source)])
    assert result.exit_code == 3
    record = error_line(result.output)
    assert record['error'] == 'data'
    assert 'sev-forge resample' in record['message']


def test_schema_mismatch_exits_with_data_code(runner, tmp_path, source):
    config = tiny_config(tmp_path, source, training={'models': ['mambanet'], 'patience': 2})
    assert runner.invoke(cli, ['pipeline', '--config', config]).exit_code == 0

    other = Schema(fields=(FieldSpec(name='Key', levels=LEVELS), FieldSpec(name='Weather', levels=('dry', 'wet'))))
    values = np.column_stack([np.repeat([0, 1, 2], 2), np.tile([0, 1], 3)])
    foreign = tmp_path / 'foreign.csv'
    write_encoded_csv(encode_onehot(Dataset(other, values=values, labels=np.repeat([0, 1, 2], 2))), str(foreign))

    result = runner.invoke(cli, ['evaluate', '--config', config, '--test', str(foreign)])
    assert result.exit_code == 3
    record = error_line(result.output)
    assert record['error'] == 'data' and record['exit_code'] == 3
    assert 'schema mismatch' in record['message']


def test_bad_config_exits_with_config_code(runner, tmp_path, source):
    config = tiny_config(tmp_path, source, config_version=2)
    result = runner.invoke(cli, ['pipeline', '--config', config])
    assert result.exit_code == 2
    assert error_line(result.output)['error'] == 'config'

    missing = runner.invoke(cli, ['resample', '--config', str(tmp_path / 'nope.yaml')])
    assert missing.exit_code == 2

    unparsable = tiny_config(tmp_path, source, selection={'top_k': 'twelve'})
    result = runner.invoke(cli, ['select-features', '--config', unparsable])
    assert result.exit_code == 2
    record = error_line(result.output)
    assert record['error'] == 'config'
    assert 'selection.top_k' in record['message']


def test_tune_records_every_draw(runner, tmp_path, source):
    config = tiny_config(
        tmp_path, source,
        training={'models': ['mambanet'], 'patience': 1},
        hyperparams={'mambanet': {'embed_dim': 2, 'num_conv': 1, 'lstm_hidden': 2, 'hidden_dims': [4], 'epochs': 1}},
        search={'enabled': True, 'draws': 5, 'space': {
            'lr': [1.0e-2, 1.0e-3], 'batch_size': [64], 'hidden_dims': [[4], [8]], 'dropout_rate': [0.0, 0.1]}},
    )
    for stage in ('select-features', 'resample'):
        assert runner.invoke(cli, [stage, '--config', config]).exit_code == 0
    result = runner.invoke(cli, ['tune', '--config', config, '--draws', '100'])
    assert result.exit_code == 0, result.output

    run = tmp_path / 'run'
    leaderboard = json.loads((run / 'leaderboard_mambanet.json').read_text(encoding='utf-8'))
    assert leaderboard['draws'] == 100
    assert len(leaderboard['entries']) == 100
    assert sorted(e['draw'] for e in leaderboard['entries']) == list(range(100))
    meta = json.loads((run / 'checkpoints' / 'mambanet.meta.json').read_text(encoding='utf-8'))
    assert meta['search_draw'] == leaderboard['entries'][0]['draw']


def test_synth_needs_a_profile(runner, tmp_path, source):
    result = runner.invoke(cli, ['synth', '--config', tiny_config(tmp_path, source)])
    assert result.exit_code == 2
    assert 'data.profile' in error_line(result.output)['message']


def test_help_lists_every_stage(runner):
    result = runner.invoke(cli, ['--help'])
    assert result.exit_code == 0
    for stage in ('synth', 'select-features', 'resample', 'train', 'tune', 'evaluate', 'pipeline'):
        assert stage in result.output


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
