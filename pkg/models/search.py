"""
Random hyperparameter search.
Draws are sampled up front from one seeded generator, trained independently
(optionally on several threads) and merged back by draw index.
"""

import logging
from dataclasses import dataclass, field, fields, replace

import numpy as np

from models.hyperparams import HyperParams
from models.training import train_model
from utils.errors import ConfigError, SevForgeError
from utils.parallel import parallel_map
from utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

STATUS_OK = 'ok'
STATUS_FAILED = 'failed'


def default_candidates():
    return {
        'lr': [1e-2, 1e-3, 1e-4],
        'dropout_rate': [0.1, 0.3, 0.5],
        'batch_size': [32, 64],
        'hidden_dim': [64, 128, 256],
        'hidden_dims': [(64, 32), (128, 64), (256, 128)],
        'num_layers': [2, 4],
        'weight_decay': [1e-4, 1e-3],
    }


@dataclass(frozen=True)
class SearchSpace:
    candidates: dict = field(default_factory=default_candidates)

    def __post_init__(self):
        tunable = {f.name for f in fields(HyperParams)} - {'input_dim', 'output_dim'}
        for name, values in self.candidates.items():
            if name not in tunable:
                raise ConfigError(f"Search space names unknown hyperparameter {name!r}")
            if not values:
                raise ConfigError(f"Search space list for {name} is empty")

    def sample(self, rng):
        """One configuration, drawing names in sorted order"""
        draw = {}
        for name in sorted(self.candidates):
            values = self.candidates[name]
            value = values[int(rng.integers(len(values)))]
            draw[name] = tuple(value) if isinstance(value, list) else value
        return draw


def _json_params(params):
    return {name: list(value) if isinstance(value, tuple) else value for name, value in params.items()}


def _run_draw(base, train, val, weights, index, params):
    seed = derive_seed(base.seed, 'draw', index)
    entry = {'draw': index, 'seed': seed, 'params': _json_params(params)}
    try:
        spec = replace(base, hyperparams=base.hyperparams.with_updates(**params), seed=seed)
        _, history = train_model(spec, train, val, weights=weights)
    except SevForgeError as e:
        logger.warning("Search draw %d failed: %s", index, e)
        entry.update(status=STATUS_FAILED, best_val_loss=None, best_val_acc=None, epochs_run=0, error=str(e))
        return entry, e
    best = history.best_record
    entry.update(status=STATUS_OK, best_val_loss=best.val_loss, best_val_acc=best.val_acc,
                 epochs_run=len(history), error=None)
    return entry, None


def leaderboard_key(entry):
    """Failed draws last; then val loss, higher val accuracy, draw index"""
    if entry['status'] != STATUS_OK:
        return (1, np.inf, 0.0, entry['draw'])
    return (0, entry['best_val_loss'], -entry['best_val_acc'], entry['draw'])


def random_search(space, n, base, train, val, weights=None, n_jobs=None):
    """
    Train n sampled configurations.
    Returns (winning RunSpec, leaderboard sorted best first)
    """
    if n < 1:
        raise ConfigError(f"Search needs at least one draw, got {n}")
    rng = make_rng(base.seed, 'search')
    draws = [space.sample(rng) for _ in range(n)]
    logger.info("Random search: %d draws for %s", n, base.model_kind)

    results = parallel_map(lambda item: _run_draw(base, train, val, weights, item[0], item[1]),
                           list(enumerate(draws)), n_jobs=n_jobs)
    leaderboard = sorted((entry for entry, _ in results), key=leaderboard_key)
    errors = [error for _, error in results if error is not None]
    if len(errors) == n:
        raise type(errors[0])(f"All {n} search draws failed; first failure: {errors[0]}")

    winner = leaderboard[0]
    best_spec = replace(base, hyperparams=base.hyperparams.with_updates(**draws[winner['draw']]),
                        seed=winner['seed'])
    logger.info("Random search done: draw %d wins with val loss %.4f (%d failed)",
                winner['draw'], winner['best_val_loss'], len(errors))
    return best_spec, leaderboard
