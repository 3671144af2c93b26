"""
Evaluation metrics: confusion matrix, per-class precision / recall / F1,
and before/after resampling drift (total variation per field and class).
"""

import numpy as np

from utils.data_processing import LABEL_LEVELS
from utils.errors import DataError, SchemaMismatchError, ShapeError

N_CLASSES = len(LABEL_LEVELS)


def confusion_matrix(y_true, y_pred):
    """3x3 counts; rows are true classes, columns predicted, order KA, BC, O"""
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"{y_true.size} true labels but {y_pred.size} predictions")
    for name, labels in (('true', y_true), ('predicted', y_pred)):
        if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
            raise DataError(f"{name} label out of range 0..{N_CLASSES - 1}")
    return np.bincount(y_true * N_CLASSES + y_pred, minlength=N_CLASSES * N_CLASSES).reshape(N_CLASSES, N_CLASSES)


def _safe_ratio(numerator, denominator):
    numerator = np.asarray(numerator, dtype=np.float64)
    denominator = np.asarray(denominator, dtype=np.float64)
    out = np.zeros_like(numerator)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


def classification_metrics(cm):
    """
    Percent metrics from a confusion matrix.
    Zero denominators give 0. The per-class 'accuracy' column is recall.
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.shape != (N_CLASSES, N_CLASSES):
        raise ShapeError(f"Confusion matrix must be {N_CLASSES}x{N_CLASSES}, got {cm.shape}")
    total = int(cm.sum())
    if total == 0:
        raise DataError("Cannot compute metrics from an empty confusion matrix")
    diagonal = np.diag(cm).astype(np.float64)
    precision = _safe_ratio(diagonal, cm.sum(axis=0))
    recall = _safe_ratio(diagonal, cm.sum(axis=1))
    f1 = _safe_ratio(2.0 * precision * recall, precision + recall)
    return {
        'classes': list(LABEL_LEVELS),
        'precision': [float(v) for v in 100.0 * precision],
        'recall': [float(v) for v in 100.0 * recall],
        'f1': [float(v) for v in 100.0 * f1],
        'accuracy': [float(v) for v in 100.0 * recall],
        'accuracy_is_recall': True,
        'support': [int(v) for v in cm.sum(axis=1)],
        'overall_accuracy': float(100.0 * diagonal.sum() / total),
    }


def metrics_from_labels(y_true, y_pred):
    return classification_metrics(confusion_matrix(y_true, y_pred))


def _level_distribution(block):
    mass = block.sum(axis=0)
    total = mass.sum()
    return mass / total if total > 0 else None


def total_variation(p, q):
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


def drift_diagnostics(before, after):
    """
    Total variation between level distributions before and after resampling,
    per field and class plus class-marginalized. A class absent on either
    side reports None.
    """
    if before.column_map != after.column_map:
        raise SchemaMismatchError("schema mismatch: drift needs matching encoded columns")
    if before.n_rows == 0 or after.n_rows == 0:
        raise DataError("Drift diagnostics need non-empty matrices")
    fields = []
    worst = 0.0
    for name, (start, stop) in before.column_map.items():
        per_class = {}
        for c, level in enumerate(LABEL_LEVELS):
            p = _level_distribution(before.data[before.labels == c, start:stop])
            q = _level_distribution(after.data[after.labels == c, start:stop])
            if p is None or q is None:
                per_class[level] = None
                continue
            per_class[level] = total_variation(p, q)
            worst = max(worst, per_class[level])
        overall = total_variation(_level_distribution(before.data[:, start:stop]),
                                  _level_distribution(after.data[:, start:stop]))
        fields.append({'field': name, 'per_class': per_class, 'overall': overall})
    return {'fields': fields, 'max_per_class': worst}
