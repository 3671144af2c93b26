"""
Shared model plumbing: parameter initialization, the model base class and
small graph-building helpers used by both classifiers.
"""

import logging

import numpy as np

from engine import ComputeGraph, Parameter
from utils.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

SUPPORTED_DTYPES = ('float64', 'float32')
EMBEDDING_INIT_BOUND = 0.05


def uniform(rng, shape, bound, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def fan_in_uniform(rng, shape, fan_in, dtype):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))"""
    return uniform(rng, shape, 1.0 / np.sqrt(fan_in), dtype)


class TabularModel:
    """
    Base class for the severity classifiers.
    Parameters live in an ordered name -> Parameter dict; subclasses create
    them in `init_parameters` and build the forward graph in `forward`.
    """
    kind = None

    def __init__(self, hyperparams, column_map, seed=0, dtype='float64'):
        if dtype not in SUPPORTED_DTYPES:
            raise ConfigError(f"dtype must be one of {list(SUPPORTED_DTYPES)}, got {dtype!r}")
        blocks = sorted(tuple(span) for span in column_map.values())
        n_columns = blocks[-1][1] if blocks else 0
        if n_columns != hyperparams.input_dim:
            raise ShapeError(f"Column map covers {n_columns} columns but input_dim is {hyperparams.input_dim}")
        self.hyperparams = hyperparams
        self.column_map = {name: tuple(span) for name, span in column_map.items()}
        self.blocks = tuple(blocks)
        self.seed = seed
        self.dtype = dtype
        self.params = {}
        self.init_parameters(np.random.default_rng(seed))

    @property
    def n_fields(self):
        return len(self.blocks)

    def add_parameter(self, name, data):
        if name in self.params:
            raise ConfigError(f"Duplicate parameter name {name}")
        self.params[name] = Parameter(name, np.asarray(data, dtype=self.dtype))

    def parameter_count(self):
        return int(sum(p.data.size for p in self.params.values()))

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state):
        """Replace parameter values; names and shapes must match exactly"""
        if set(state) != set(self.params):
            missing = sorted(set(self.params) - set(state))
            extra = sorted(set(state) - set(self.params))
            raise ShapeError(f"Parameter names differ: missing {missing}, unexpected {extra}")
        for name, param in self.params.items():
            value = np.asarray(state[name])
            if value.shape != param.data.shape:
                raise ShapeError(f"Parameter {name}: shape {value.shape} does not match {param.data.shape}")
            param.data = value.astype(self.dtype, copy=True)
            param.grad = None

    def init_parameters(self, rng):
        raise NotImplementedError

    def forward(self, graph, x, mode='eval', rng=None):
        raise NotImplementedError

    def check_input(self, data):
        data = np.asarray(data)
        if data.ndim != 2 or data.shape[1] != self.hyperparams.input_dim:
            raise ShapeError(f"{self.kind} expects (batch, {self.hyperparams.input_dim}) input, got {data.shape}")
        return data.astype(self.dtype, copy=False)

    def logits(self, data, mode='eval', rng=None):
        """Forward pass on a plain array; returns (batch, 3) logits"""
        graph = ComputeGraph()
        x = graph.constant(self.check_input(data))
        return self.forward(graph, x, mode=mode, rng=rng).data

    def __repr__(self):
        return f"{type(self).__name__}(fields={self.n_fields}, params={self.parameter_count()}, dtype={self.dtype})"


def dense(graph, x, weight, bias):
    return graph.apply('add', [graph.apply('matmul', [x, weight]), bias])


def dropout(graph, x, rate, mode, rng):
    """Dropout with a fresh mask seed per call; identity outside train mode"""
    if mode != 'train' or rate == 0.0:
        return graph.apply('dropout', [x], rate=rate, mode='eval')
    if rng is None:
        raise ConfigError("train-mode dropout needs a random generator")
    return graph.apply('dropout', [x], rate=rate, mode='train', seed=int(rng.integers(2 ** 32)))


def embed(graph, model, x):
    """(batch, columns) -> (batch, fields, embed_dim) mixture-weighted lookup"""
    table = graph.parameter(model.params['embedding'])
    return graph.apply('embedding-lookup', [x, table], blocks=model.blocks)
