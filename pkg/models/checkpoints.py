"""
Checkpoint persistence.
Handles the versioned JSON tensor blob and its metadata sidecar (model kind,
hyperparameters, schema hash, seed). Tensor bytes are stored raw, so a
round trip is bit-exact in either dtype.
"""

import base64
import logging

import numpy as np

from models.hyperparams import hyperparams_from_dict
from models.registry import build_model
from utils.data_processing import read_json, schema_from_columns, write_json
from utils.errors import DataError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
CHECKPOINT_SUFFIX = '.ckpt.json'
SIDECAR_SUFFIX = '.meta.json'


def sidecar_path(path):
    """checkpoints/armnet.ckpt.json -> checkpoints/armnet.meta.json"""
    path = str(path)
    if path.endswith(CHECKPOINT_SUFFIX):
        return path[:-len(CHECKPOINT_SUFFIX)] + SIDECAR_SUFFIX
    return path + SIDECAR_SUFFIX


def encode_tensors(state, dtype):
    tensors = []
    for name, value in state.items():
        value = np.ascontiguousarray(value, dtype=dtype)
        tensors.append({
            'name': name,
            'shape': list(value.shape),
            'data': base64.b64encode(value.astype(value.dtype.newbyteorder('<')).tobytes()).decode('ascii'),
        })
    return {'checkpoint_version': CHECKPOINT_VERSION, 'dtype': dtype, 'tensors': tensors}


def decode_tensors(blob):
    """Inverse of encode_tensors; returns (dtype, name -> array)"""
    if blob.get('checkpoint_version') != CHECKPOINT_VERSION:
        raise DataError(f"Unsupported checkpoint version {blob.get('checkpoint_version')!r}")
    dtype = blob.get('dtype')
    if dtype not in ('float64', 'float32'):
        raise DataError(f"Unsupported checkpoint dtype {dtype!r}")
    state = {}
    for item in blob.get('tensors', []):
        raw = base64.b64decode(item['data'])
        value = np.frombuffer(raw, dtype=np.dtype(dtype).newbyteorder('<')).astype(dtype)
        expected = int(np.prod(item['shape'])) if item['shape'] else 1
        if value.size != expected:
            raise DataError(f"Tensor {item['name']}: {value.size} values for shape {item['shape']}")
        state[item['name']] = value.reshape(item['shape'])
    return dtype, state


def save_checkpoint(model, path, schema, extra=None):
    """Write the tensor blob and its sidecar; returns both paths"""
    write_json(encode_tensors(model.state_dict(), model.dtype), path)
    meta = {
        'checkpoint_version': CHECKPOINT_VERSION,
        'model_kind': model.kind,
        'hyperparams': model.hyperparams.to_dict(),
        'schema_hash': schema.schema_hash(),
        'column_names': schema.column_names(),
        'seed': int(model.seed),
        'dtype': model.dtype,
    }
    if extra:
        meta.update(extra)
    meta_path = sidecar_path(path)
    write_json(meta, meta_path)
    logger.info("Saved %s checkpoint (%d parameters) to %s", model.kind, model.parameter_count(), path)
    return str(path), meta_path


def load_sidecar(path):
    meta = read_json(sidecar_path(path))
    for key in ('model_kind', 'hyperparams', 'schema_hash', 'column_names'):
        if key not in meta:
            raise DataError(f"Checkpoint sidecar for {path} is missing {key!r}")
    return meta


def load_checkpoint(path):
    """Rebuild a model from a checkpoint; returns (model, sidecar metadata)"""
    meta = load_sidecar(path)
    dtype, state = decode_tensors(read_json(path))
    schema = schema_from_columns(meta['column_names'])
    hyperparams = hyperparams_from_dict(meta['hyperparams'])
    model = build_model(meta['model_kind'], hyperparams, schema.column_map(), seed=meta.get('seed', 0), dtype=dtype)
    model.load_state_dict(state)
    logger.info("Loaded %s checkpoint from %s", model.kind, path)
    return model, meta
