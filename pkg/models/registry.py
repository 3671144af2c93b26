"""
Model registry and inference helpers.
"""

import numpy as np
from scipy.special import softmax

from models.armnet import ArmNetModel
from models.mambanet import MambaNetModel
from utils.errors import ConfigError

MODEL_KINDS = {
    'armnet': ArmNetModel,
    'mambanet': MambaNetModel,
}


def validate_model_kind(kind):
    """
    Check a model kind name.
    Returns (is_valid, error_message)
    """
    if kind not in MODEL_KINDS:
        return False, f"Unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}"
    return True, None


def build_model(kind, hyperparams, column_map, seed=0, dtype='float64'):
    """Instantiate a freshly initialized model of the given kind"""
    is_valid, error = validate_model_kind(kind)
    if not is_valid:
        raise ConfigError(error)
    return MODEL_KINDS[kind](hyperparams, column_map, seed=seed, dtype=dtype)


def predict(model, X):
    """
    Eval-mode prediction.
    Returns (labels, probabilities); argmax ties go to the lowest class index.
    """
    data = X.data if hasattr(X, 'data') else X
    logits = model.logits(data, mode='eval')
    probabilities = softmax(logits.astype(np.float64), axis=1)
    labels = np.argmax(logits, axis=1).astype(np.int64)
    return labels, probabilities
