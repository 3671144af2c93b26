#!/usr/bin/env python3
"""
Tests for random hyperparameter search: leaderboard order, seeding and failures.
"""

import pytest
import numpy as np
import os
import sys

# Add parent directory to path to import the models
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.hyperparams import HyperParams
from models.search import STATUS_FAILED, STATUS_OK, SearchSpace, leaderboard_key, random_search
from models.training import RunSpec
from utils.data_processing import EncodedMatrix
from utils.errors import ConfigError
from utils.seeding import make_rng


def make_matrix(seed, n_rows):
    rng = np.random.default_rng(seed)
    levels = rng.integers(0, 3, size=(n_rows, 2))
    data = np.zeros((n_rows, 6))
    data[np.arange(n_rows), levels[:, 0]] = 1.0
    data[np.arange(n_rows), 3 + levels[:, 1]] = 1.0
    return EncodedMatrix(data, {'A': (0, 3), 'B': (3, 6)}, levels[:, 0])


@pytest.fixture
def splits():
    return make_matrix(0, 90), make_matrix(1, 30)


@pytest.fixture
def base():
    hp = HyperParams(input_dim=6, embed_dim=4, lstm_hidden=4, hidden_dims=(8,), num_conv=1, epochs=2, batch_size=32)
    return RunSpec(model_kind='mambanet', hyperparams=hp, patience=2, seed=21)


@pytest.fixture
def space():
    return SearchSpace(candidates={'lr': [1e-2, 1e-3], 'batch_size': [16, 32], 'dropout_rate': [0.0, 0.3]})


def test_leaderboard_is_sorted_and_complete(space, base, splits):
    train, val = splits
    best, leaderboard = random_search(space, 5, base, train, val, n_jobs=1)
    assert sorted(e['draw'] for e in leaderboard) == list(range(5))
    assert leaderboard == sorted(leaderboard, key=leaderboard_key)
    assert all(e['status'] == STATUS_OK for e in leaderboard)
    winner = leaderboard[0]
    assert best.seed == winner['seed']
    assert best.hyperparams.lr == winner['params']['lr']
    assert best.hyperparams.batch_size == winner['params']['batch_size']


def test_search_is_reproducible_across_thread_counts(space, base, splits):
    train, val = splits
    first = random_search(space, 4, base, train, val, n_jobs=1)
    second = random_search(space, 4, base, train, val, n_jobs=1)
    threaded = random_search(space, 4, base, train, val, n_jobs=2)
    assert first[1] == second[1]
    assert first[1] == threaded[1]


def test_failed_draws_sort_last():
    entries = [
        {'draw': 0, 'status': STATUS_FAILED, 'best_val_loss': None, 'best_val_acc': None},
        {'draw': 1, 'status': STATUS_OK, 'best_val_loss': 0.9, 'best_val_acc': 0.5},
        {'draw': 2, 'status': STATUS_OK, 'best_val_loss': 0.7, 'best_val_acc': 0.4},
        {'draw': 3, 'status': STATUS_OK, 'best_val_loss': 0.7, 'best_val_acc': 0.6},
    ]
    assert [e['draw'] for e in sorted(entries, key=leaderboard_key)] == [3, 2, 1, 0]


def test_all_failed_draws_raise(base, splits):
    train, val = splits
    space = SearchSpace(candidates={'dropout_rate': [1.0]})
    with pytest.raises(ConfigError, match='All 3 search draws failed'):
        random_search(space, 3, base, train, val)


def test_search_needs_a_draw(space, base, splits):
    with pytest.raises(ConfigError):
        random_search(space, 0, base, *splits)


def test_search_space_validation():
    with pytest.raises(ConfigError):
        SearchSpace(candidates={'learning_rate': [0.1]})
    with pytest.raises(ConfigError):
        SearchSpace(candidates={'lr': []})
    with pytest.raises(ConfigError):
        SearchSpace(candidates={'input_dim': [10]})


def test_sampling_is_seeded():
    space = SearchSpace()
    first = space.sample(make_rng(3, 'search'))
    second = space.sample(make_rng(3, 'search'))
    assert first == second
    assert first['hidden_dims'] in space.candidates['hidden_dims']
    assert first['lr'] in space.candidates['lr']


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
