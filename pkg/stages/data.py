"""
Data stages: synthesize the crash table, rank and select fields, rebalance and split.
"""

import logging

from stages import artifacts
from utils.data_processing import (
    encode_onehot, load_dataset, load_profile, load_schema, stratified_split,
    synth_generate, with_distractors, write_dataset_csv, write_encoded_csv, write_schema,
)
from utils.errors import ConfigError, DataError
from utils.importance import fit_forest_importance, fit_gbdt_importance, ranking_rows, select_common_topk
from utils.metrics import drift_diagnostics
from utils.reporting import write_json
from utils.resampling import smoteenn
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)


def synth(config):
    """Draw the crash table from the generator profile into the output directory"""
    if not config.profile_path:
        raise ConfigError("synth needs data.profile in the config")
    profile = with_distractors(load_profile(config.profile_path), config.distractor_fields)
    ds = synth_generate(profile, derive_seed(config.seed, 'synth'))
    csv_path = artifacts.ensure_parent(artifacts.path(config, artifacts.CRASHES_CSV))
    write_dataset_csv(ds, csv_path)
    write_schema(profile.schema, artifacts.path(config, artifacts.FULL_SCHEMA))
    logger.info("synth done: %d rows, %d fields -> %s", ds.n_rows, len(profile.schema.fields), csv_path)
    return ds


def load_source(config):
    """The full categorical dataset: the configured CSV, or the synth output"""
    if config.csv_path:
        return load_dataset(config.csv_path, load_schema(config.schema_path))
    csv_path = artifacts.require(artifacts.path(config, artifacts.CRASHES_CSV), 'synth')
    schema_path = artifacts.require(artifacts.path(config, artifacts.FULL_SCHEMA), 'synth')
    return load_dataset(csv_path, load_schema(schema_path))


def select_features(config):
    """
    Rank fields with both tree ensembles and keep those in both top-k lists.
    Writes ranking.json and the selected schema.json; returns the selected schema.
    """
    ds = load_source(config)
    matrix = encode_onehot(ds)
    n_fields = len(ds.schema.fields)
    k = config.top_k
    if k > n_fields:
        logger.warning("top_k %d exceeds the %d available fields; using k=%d", k, n_fields, n_fields)
        k = n_fields

    logger.info("Ranking %d fields over %d rows...", n_fields, ds.n_rows)
    forest = fit_forest_importance(matrix, config.forest)
    gbdt = fit_gbdt_importance(matrix, config.gbdt)
    selected = select_common_topk(forest, gbdt, k)
    if not selected:
        raise DataError(f"No field is in the top {k} of both rankings")

    chosen = set(selected)
    schema = ds.schema.restrict([name for name in ds.schema.field_names if name in chosen])
    out_path = artifacts.ensure_parent(artifacts.path(config, artifacts.RANKING))
    write_json({
        'top_k': k,
        'selected': selected,
        'fields': ranking_rows(forest, gbdt, selected),
    }, out_path)
    write_schema(schema, artifacts.path(config, artifacts.SELECTED_SCHEMA))
    logger.info("select-features done: %d of %d fields kept: %s", len(selected), n_fields, selected)
    return schema


def resample(config):
    """
    SMOTEENN plus the train/val/test split, in the configured order.
    Returns (train, val, test, ResampleStats).
    """
    schema = load_schema(artifacts.require(artifacts.path(config, artifacts.SELECTED_SCHEMA), 'select-features'))
    ds = load_source(config).select_fields(schema.field_names)
    matrix = encode_onehot(ds)
    params = config.resample

    if params.scope == 'all':
        logger.info("Resampling all %d rows, then splitting...", matrix.n_rows)
        before = matrix
        resampled, stats = smoteenn(matrix, params)
        train, val, test = stratified_split(resampled, config.split)
    else:
        logger.info("Splitting %d rows, then resampling the training partition...", matrix.n_rows)
        before, val, test = stratified_split(matrix, config.split)
        resampled, stats = smoteenn(before, params)
        train = resampled

    write_encoded_csv(resampled, artifacts.ensure_parent(artifacts.path(config, artifacts.RESAMPLED_CSV)))
    for name, part in zip(artifacts.SPLIT_NAMES, (train, val, test)):
        write_encoded_csv(part, artifacts.ensure_parent(artifacts.split_path(config, name)))
    write_json({'scope': params.scope, 'classes': stats.to_rows()}, artifacts.path(config, artifacts.RESAMPLE_STATS))

    drift = drift_diagnostics(before, resampled)
    write_json(drift, artifacts.path(config, artifacts.DRIFT))
    if 'svg' in config.report_formats:
        from utils.plotting import plot_drift
        plot_drift(drift, artifacts.path(config, artifacts.DRIFT_SVG))
    logger.info("resample done: %d/%d/%d rows, max per-class drift %.3f",
                train.n_rows, val.n_rows, test.n_rows, drift['max_per_class'])
    return train, val, test, stats
