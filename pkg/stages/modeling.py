"""
Modeling stages: train or tune each configured model, then evaluate on the test split.
"""

import logging
import os

from models.checkpoints import load_checkpoint, load_sidecar, save_checkpoint
from models.registry import predict
from models.search import random_search
from models.training import history_from_dict, train_model
from stages import artifacts
from utils.data_processing import read_encoded_csv
from utils.errors import SchemaMismatchError
from utils.metrics import classification_metrics, confusion_matrix
from utils.reporting import EvalReport, emit_report, emit_summary, write_history_csv, write_json
from utils.resampling import ResampleStats

logger = logging.getLogger(__name__)


def load_splits(config, names=('train', 'val')):
    return [read_encoded_csv(artifacts.require(artifacts.split_path(config, name), 'resample')) for name in names]


def _save_run(config, kind, model, history, train, extra=None):
    meta = {'epochs': len(history), 'best_epoch': history.best_epoch}
    if extra:
        meta.update(extra)
    save_checkpoint(model, artifacts.ensure_parent(artifacts.checkpoint_path(config, kind)), train.schema, extra=meta)
    history_json = artifacts.ensure_parent(artifacts.history_path(config, kind))
    write_json(history.to_dict(), history_json)
    write_history_csv(history, os.path.join(os.path.dirname(history_json), 'history.csv'))


def train(config):
    """Train every configured model kind; returns {kind: (model, history)}"""
    train_split, val_split = load_splits(config)
    results = {}
    for kind in config.models:
        spec = config.run_spec(kind, train_split.n_columns)
        model, history = train_model(spec, train_split, val_split)
        _save_run(config, kind, model, history, train_split)
        results[kind] = (model, history)
    logger.info("train done: %s", ', '.join(f"{k} ({len(h)} epochs)" for k, (_, h) in results.items()))
    return results


def tune(config):
    """
    Random search per model kind, then retrain the winning draw.
    Writes leaderboard_<kind>.json next to the usual checkpoint and history.
    """
    train_split, val_split = load_splits(config)
    results = {}
    for kind in config.models:
        base = config.run_spec(kind, train_split.n_columns)
        best_spec, leaderboard = random_search(config.search_space, config.search_draws, base, train_split, val_split)
        write_json({
            'model_kind': kind,
            'draws': config.search_draws,
            'entries': leaderboard,
        }, artifacts.ensure_parent(artifacts.leaderboard_path(config, kind)))

        model, history = train_model(best_spec, train_split, val_split)
        _save_run(config, kind, model, history, train_split, extra={'search_draw': leaderboard[0]['draw']})
        results[kind] = (model, history)
    logger.info("tune done: %d draws per model for %s", config.search_draws, list(config.models))
    return results


def _optional_json(file_path):
    if not os.path.exists(file_path):
        return None
    return artifacts.read_json(file_path, 'resample')


def evaluate_checkpoint(config, checkpoint, test):
    """Score one checkpoint on an encoded test matrix; returns its EvalReport"""
    meta = load_sidecar(checkpoint)
    test_hash = test.schema.schema_hash()
    if meta['schema_hash'] != test_hash:
        raise SchemaMismatchError(f"schema mismatch: checkpoint {checkpoint} was trained on "
                                  f"{meta['schema_hash'][:12]}, test data has {test_hash[:12]}")
    model, meta = load_checkpoint(checkpoint)
    y_pred, _ = predict(model, test.data)
    cm = confusion_matrix(test.labels, y_pred)

    history = None
    history_file = artifacts.history_path(config, model.kind)
    if os.path.exists(history_file):
        history = history_from_dict(artifacts.read_json(history_file, 'train'))
    stats_doc = _optional_json(artifacts.path(config, artifacts.RESAMPLE_STATS))
    return EvalReport(
        model_kind=model.kind,
        metrics=classification_metrics(cm),
        confusion=cm,
        epochs=int(meta.get('epochs', len(history) if history is not None else 0)),
        history=history,
        resample_stats=ResampleStats.from_rows(stats_doc['classes']) if stats_doc else None,
        n_test=test.n_rows,
        drift=_optional_json(artifacts.path(config, artifacts.DRIFT)),
    )


def evaluate(config, checkpoint=None, test=None):
    """
    Evaluate one checkpoint, or every configured model's checkpoint, on the test split.
    Writes reports/<kind>/ per model plus reports/summary.*; returns the reports.
    """
    test_path = test or artifacts.require(artifacts.split_path(config, 'test'), 'resample')
    test_matrix = read_encoded_csv(test_path)
    if checkpoint:
        checkpoints = [checkpoint]
    else:
        checkpoints = [artifacts.require(artifacts.checkpoint_path(config, kind), 'train') for kind in config.models]

    reports = []
    for path in checkpoints:
        report = evaluate_checkpoint(config, path, test_matrix)
        emit_report(report, artifacts.report_dir(config, report.model_kind), config.report_formats)
        logger.info("%s test accuracy %.1f%% on %d rows", report.display_name,
                    report.metrics['overall_accuracy'], report.n_test)
        reports.append(report)
    emit_summary(reports, artifacts.report_dir(config))
    logger.info("evaluate done: %d models", len(reports))
    return reports
