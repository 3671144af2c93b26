"""
sev-forge - crash severity classification pipeline
Command-line entry point: one subcommand per pipeline stage plus `pipeline`
to run them all in order.
"""

import functools
import json
import logging
import os
import sys

import click

from stages.data import resample, select_features, synth
from stages.modeling import evaluate, train, tune
from stages.pipeline import run_pipeline
from utils.config import load_config
from utils.errors import SevForgeError

logger = logging.getLogger('sev_forge')

LOG_LEVEL_ENV = 'SEV_FORGE_LOG_LEVEL'
DEFAULT_CONFIG = os.path.join('configs', 'default.yaml')


def configure_logging(verbose):
    if verbose:
        level = logging.DEBUG
    else:
        level = getattr(logging, os.getenv(LOG_LEVEL_ENV, 'INFO').upper(), logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr, force=True,
                        format='%(levelname)s %(name)s: %(message)s')


def report_errors(f):
    """Turn pipeline errors into a single JSON line on stderr and the matching exit code"""
    @functools.wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except SevForgeError as e:
            logger.debug("%s failed", f.__name__, exc_info=True)
            click.echo(json.dumps({'error': e.kind, 'exit_code': e.exit_code, 'message': str(e)}), err=True)
            sys.exit(e.exit_code)
    return decorated_function


def stage_options(f):
    """--config/--seed/--out/--verbose shared by every subcommand"""
    f = click.option('-v', '--verbose', is_flag=True, help='Debug logging.')(f)
    f = click.option('--out', type=click.Path(file_okay=False), default=None,
                     help='Output directory (overrides output_dir).')(f)
    f = click.option('--seed', type=click.IntRange(min=0), default=None, help='Top-level seed (overrides seed).')(f)
    f = click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=DEFAULT_CONFIG,
                     show_default=True, help='Pipeline config (YAML or JSON).')(f)
    return f


def _load(config_path, seed, out, verbose, draws=None):
    configure_logging(verbose)
    return load_config(config_path, seed=seed, out=out, draws=draws)


@click.group()
@click.version_option('1.0.0', prog_name='sev-forge')
def cli():
    """Crash severity classification: feature selection, SMOTEENN, ARM-Net and MambaNet."""


@cli.command('synth')
@stage_options
@report_errors
def synth_command(config_path, seed, out, verbose):
    """Draw the crash table from the generator profile."""
    config = _load(config_path, seed, out, verbose)
    ds = synth(config)
    click.echo(f"synth: {ds.n_rows} rows -> {config.output_dir}")


@cli.command('select-features')
@stage_options
@report_errors
def select_features_command(config_path, seed, out, verbose):
    """Rank fields with a random forest and boosted trees; keep the common top k."""
    config = _load(config_path, seed, out, verbose)
    schema = select_features(config)
    click.echo(f"select-features: {', '.join(schema.field_names)}")


@cli.command('resample')
@stage_options
@report_errors
def resample_command(config_path, seed, out, verbose):
    """SMOTEENN rebalancing and the train/val/test split."""
    config = _load(config_path, seed, out, verbose)
    train_split, val_split, test_split, _ = resample(config)
    click.echo(f"resample: {train_split.n_rows}/{val_split.n_rows}/{test_split.n_rows} rows")


@cli.command('train')
@stage_options
@report_errors
def train_command(config_path, seed, out, verbose):
    """Train each configured model with its configured hyperparameters."""
    config = _load(config_path, seed, out, verbose)
    results = train(config)
    for kind, (_, history) in results.items():
        click.echo(f"train: {kind} {len(history)} epochs, best epoch {history.best_epoch}")


@cli.command('tune')
@stage_options
@click.option('--draws', type=click.IntRange(min=1), default=None, help='Search draws per model (overrides search.draws).')
@report_errors
def tune_command(config_path, seed, out, verbose, draws):
    """Random hyperparameter search, then retrain the winner."""
    config = _load(config_path, seed, out, verbose, draws=draws)
    results = tune(config)
    for kind, (_, history) in results.items():
        click.echo(f"tune: {kind} winner trained for {len(history)} epochs")


@cli.command('evaluate')
@stage_options
@click.option('--checkpoint', type=click.Path(dir_okay=False), default=None,
              help='Evaluate this checkpoint instead of the configured models.')
@click.option('--test', 'test_path', type=click.Path(dir_okay=False), default=None,
              help='Encoded test CSV (defaults to the resample stage output).')
@report_errors
def evaluate_command(config_path, seed, out, verbose, checkpoint, test_path):
    """Score checkpoints on the test split and write the reports."""
    config = _load(config_path, seed, out, verbose)
    for report in evaluate(config, checkpoint=checkpoint, test=test_path):
        click.echo(f"evaluate: {report.display_name} accuracy {report.metrics['overall_accuracy']:.1f}%")


@cli.command('pipeline')
@stage_options
@report_errors
def pipeline_command(config_path, seed, out, verbose):
    """Every stage in order."""
    config = _load(config_path, seed, out, verbose)
    for report in run_pipeline(config):
        click.echo(f"pipeline: {report.display_name} accuracy {report.metrics['overall_accuracy']:.1f}%")


def main():
    cli(prog_name='sev-forge')


if __name__ == '__main__':
    main()
