"""
Report emission.
Writes the evaluation report as JSON, CSV curves, markdown tables and
optional SVG figures. Every file is byte-stable for identical inputs.
"""

import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from utils.data_processing import LABEL_LEVELS, write_json
from utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
REPORT_FORMATS = ('json', 'csv', 'markdown', 'svg')
HISTORY_COLUMNS = ('epoch', 'train_loss', 'train_acc', 'val_loss', 'val_acc', 'lr')
TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'templates')
DISPLAY_NAMES = {'armnet': 'ARM-Net', 'mambanet': 'MambaNet'}


@dataclass
class EvalReport:
    """Everything one evaluated model contributes to the reports"""
    model_kind: str
    metrics: dict
    confusion: np.ndarray
    epochs: int
    history: object = None
    resample_stats: object = None
    n_test: int = 0
    drift: dict = None

    @property
    def display_name(self):
        return DISPLAY_NAMES.get(self.model_kind, self.model_kind)

    @property
    def sample_counts(self):
        """Training-set class counts after resampling, if known"""
        if self.resample_stats is None:
            return None
        return list(self.resample_stats.after_enn)

    def to_dict(self):
        return {
            'report_version': REPORT_VERSION,
            'model_kind': self.model_kind,
            'model': self.display_name,
            'metrics': self.metrics,
            'confusion': {
                'labels': list(LABEL_LEVELS),
                'matrix': np.asarray(self.confusion, dtype=np.int64).tolist(),
            },
            'epochs': self.epochs,
            'n_test': self.n_test,
            'history': self.history.to_dict() if self.history is not None else None,
            'resample_stats': self.resample_stats.to_rows() if self.resample_stats is not None else None,
            'drift': self.drift,
        }


def validate_formats(formats):
    """
    Check requested report formats.
    Returns (is_valid, error_message)
    """
    unknown = sorted(set(formats) - set(REPORT_FORMATS))
    if unknown:
        return False, f"Unknown report formats {unknown}; expected a subset of {list(REPORT_FORMATS)}"
    return True, None


def format_pct(value):
    """87.0 -> '87', 72.727 -> '72.7'"""
    rounded = round(float(value), 1)
    if rounded == int(rounded):
        return str(int(rounded))
    return f"{rounded:.1f}"


def _environment():
    env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), undefined=StrictUndefined,
                      keep_trailing_newline=True, trim_blocks=True, lstrip_blocks=True)
    env.filters['pct'] = format_pct
    return env


def render_template(name, **context):
    return _environment().get_template(name).render(labels=LABEL_LEVELS, **context)


def _ensure_dir(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create output directory {out_dir}: {e}")


def write_text(text, path):
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
    except OSError as e:
        raise DataError(f"Cannot write {path}: {e}")


def write_history_csv(history, path):
    """Per-epoch curves; header only when there is no history"""
    rows = history.to_rows() if history is not None else []
    frame = pd.DataFrame(rows, columns=list(HISTORY_COLUMNS))
    frame.to_csv(path, index=False, lineterminator='\n', float_format='%.17g')


def write_confusion_csv(cm, path):
    frame = pd.DataFrame(np.asarray(cm, dtype=np.int64), index=list(LABEL_LEVELS), columns=list(LABEL_LEVELS))
    frame.to_csv(path, index_label='true', lineterminator='\n')


def emit_report(report, out_dir, formats=('json', 'csv', 'markdown')):
    """Write the report files for one model; returns the written paths"""
    is_valid, error = validate_formats(formats)
    if not is_valid:
        raise ConfigError(error)
    _ensure_dir(out_dir)
    written = []
    if 'json' in formats:
        path = os.path.join(out_dir, 'report.json')
        write_json(report.to_dict(), path)
        written.append(path)
    if 'csv' in formats:
        history_path = os.path.join(out_dir, 'history.csv')
        confusion_path = os.path.join(out_dir, 'confusion.csv')
        write_history_csv(report.history, history_path)
        write_confusion_csv(report.confusion, confusion_path)
        written.extend([history_path, confusion_path])
    if 'markdown' in formats:
        path = os.path.join(out_dir, 'report.md')
        write_text(render_template('report.md.j2', reports=[report]), path)
        written.append(path)
    if 'svg' in formats:
        from utils.plotting import plot_confusion, plot_curves
        confusion_path = os.path.join(out_dir, 'confusion.svg')
        plot_confusion(np.asarray(report.confusion), confusion_path, report.display_name)
        written.append(confusion_path)
        if report.history is not None and len(report.history):
            curves_path = os.path.join(out_dir, 'curves.svg')
            plot_curves(report.history, curves_path, report.display_name)
            written.append(curves_path)
    logger.info("Wrote %d report files for %s to %s", len(written), report.display_name, out_dir)
    return written


def emit_summary(reports, out_dir):
    """Combined tables for every evaluated model: summary.md and summary.json"""
    _ensure_dir(out_dir)
    md_path = os.path.join(out_dir, 'summary.md')
    json_path = os.path.join(out_dir, 'summary.json')
    write_text(render_template('summary.md.j2', reports=reports), md_path)
    write_json({
        'report_version': REPORT_VERSION,
        'models': [
            {
                'model': r.display_name,
                'accuracy': r.metrics['overall_accuracy'],
                'epochs': r.epochs,
                'samples': r.sample_counts,
                'precision': r.metrics['precision'],
                'recall': r.metrics['recall'],
                'f1': r.metrics['f1'],
            }
            for r in reports
        ],
    }, json_path)
    return [md_path, json_path]
