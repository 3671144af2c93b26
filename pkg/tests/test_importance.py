#!/usr/bin/env python3
"""
Tests for the tree-ensemble importance rankers and the top-k intersection.
"""

import pytest
import numpy as np
import os
import sys

# Add parent directory to path to import utils
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils.data_processing import EncodedMatrix
from utils.errors import ConfigError, DataError, SchemaMismatchError
from utils.importance import (
    ImportanceRanking, TreeParams, fit_forest_importance, fit_gbdt_importance, forest_defaults,
    gbdt_defaults, ranking_rows, select_common_topk,
)


def matrix_from_levels(levels, labels, level_counts, names=None):
    """One-hot encode a (rows, fields) table of level indices"""
    names = names or [f"F{j}" for j in range(levels.shape[1])]
    column_map = {}
    blocks = []
    start = 0
    for j, (name, n) in enumerate(zip(names, level_counts)):
        column_map[name] = (start, start + n)
        block = np.zeros((levels.shape[0], n))
        block[np.arange(levels.shape[0]), levels[:, j]] = 1.0
        blocks.append(block)
        start += n
    return EncodedMatrix(np.concatenate(blocks, axis=1), column_map, labels)


def small_forest(**changes):
    values = dict(n_trees=20, max_depth=4, min_samples_leaf=1, feature_subsample=1.0, seed=0)
    values.update(changes)
    return TreeParams(**values)


def small_gbdt(**changes):
    values = dict(n_trees=10, max_depth=2, feature_subsample=1.0, learning_rate=0.3, seed=0, bootstrap=False)
    values.update(changes)
    return TreeParams(**values)


@pytest.fixture
def keyed():
    """Field 'Key' equals the label; five noise fields"""
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 3, size=300)
    levels = np.column_stack([labels] + [rng.integers(0, 3, size=300) for _ in range(5)])
    names = ['Key', 'N1', 'N2', 'N3', 'N4', 'N5']
    return matrix_from_levels(levels, labels, [3] * 6, names)


def test_single_separating_field_takes_all_importance():
    labels = np.repeat([0, 1], 40)
    levels = np.column_stack([labels, np.zeros(80, dtype=int)])
    matrix = matrix_from_levels(levels, labels, [2, 2], ['Signal', 'Const'])
    for ranking in (fit_forest_importance(matrix, small_forest(n_trees=5)), fit_gbdt_importance(matrix, small_gbdt())):
        assert ranking.score_of('Signal') == pytest.approx(1.0)
        assert ranking.score_of('Const') == 0.0


def test_noise_labels_spread_importance():
    rng = np.random.default_rng(1)
    levels = rng.integers(0, 3, size=(300, 10))
    matrix = matrix_from_levels(levels, rng.integers(0, 3, size=300), [3] * 10)
    ranking = fit_forest_importance(matrix, small_forest(n_trees=100, max_depth=1, feature_subsample=0.3))
    assert max(ranking.scores) < 0.5


def test_scores_are_normalized_and_deterministic(keyed):
    for fit, params in ((fit_forest_importance, small_forest(feature_subsample=0.3)),
                        (fit_gbdt_importance, small_gbdt())):
        first = fit(keyed, params)
        second = fit(keyed, params)
        assert first == second
        assert all(s >= 0 for s in first.scores)
        assert sum(first.scores) == pytest.approx(1.0, abs=1e-9)
        assert sorted(first.order) == sorted(keyed.field_names)


@pytest.mark.parametrize('seed', range(5))
def test_determining_field_ranks_first(keyed, seed):
    assert fit_forest_importance(keyed, small_forest(seed=seed, feature_subsample=0.3)).order[0] == 'Key'
    assert fit_gbdt_importance(keyed, small_gbdt(seed=seed)).order[0] == 'Key'


def test_duplicate_field_conserves_boosting_gain():
    rng = np.random.default_rng(2)
    base = rng.integers(0, 3, size=200)
    labels = np.where(rng.random(200) < 0.7, base, rng.integers(0, 3, size=200))
    noise = rng.integers(0, 3, size=200)
    original = matrix_from_levels(np.column_stack([base, noise]), labels, [3, 3], ['A', 'B'])
    doubled = matrix_from_levels(np.column_stack([base, base, noise]), labels, [3, 3, 3], ['A', 'A2', 'B'])
    single = fit_gbdt_importance(original, small_gbdt()).score_of('A')
    ranking = fit_gbdt_importance(doubled, small_gbdt())
    combined = ranking.score_of('A') + ranking.score_of('A2')
    assert combined == pytest.approx(single, rel=0.1)


def test_forest_without_bootstrap_ignores_row_order(keyed):
    params = small_forest(n_trees=1, bootstrap=False)
    permutation = np.random.default_rng(3).permutation(keyed.n_rows)
    straight = fit_forest_importance(keyed, params)
    shuffled = fit_forest_importance(keyed.take(permutation), params)
    assert straight.order == shuffled.order
    assert np.allclose(straight.scores, shuffled.scores)


def test_single_class_input_is_rejected():
    levels = np.random.default_rng(4).integers(0, 2, size=(20, 2))
    matrix = matrix_from_levels(levels, np.zeros(20, dtype=int), [2, 2])
    with pytest.raises(DataError):
        fit_forest_importance(matrix, small_forest())
    with pytest.raises(DataError):
        fit_gbdt_importance(matrix, small_gbdt())


def test_tree_params_validation():
    with pytest.raises(ConfigError):
        TreeParams(n_trees=0, max_depth=3)
    with pytest.raises(ConfigError):
        TreeParams(n_trees=10, max_depth=3, feature_subsample=0.0)
    with pytest.raises(ConfigError):
        TreeParams(n_trees=10, max_depth=3, learning_rate=0.0)
    assert forest_defaults().n_trees == 200
    assert gbdt_defaults().max_depth == 3


def ranking_from_order(order, fields):
    """Scores that reproduce a given order over schema-ordered fields"""
    scores = [0.0] * len(fields)
    for position, name in enumerate(order):
        scores[fields.index(name)] = float(len(order) - position)
    total = sum(scores)
    return ImportanceRanking(fields=tuple(fields), scores=tuple(s / total for s in scores))


def test_select_common_topk_examples():
    fields = ['f1', 'f2', 'f3', 'f4']
    a = ranking_from_order(['f1', 'f2', 'f3', 'f4'], fields)
    b = ranking_from_order(['f4', 'f3', 'f2', 'f1'], fields)
    assert select_common_topk(a, a, 3) == ['f1', 'f2', 'f3']
    assert select_common_topk(a, b, 2) == []
    # f2 and f3 tie on mean rank; schema order decides
    assert select_common_topk(a, b, 3) == ['f2', 'f3']


def test_select_common_topk_is_subset_of_both_tops():
    rng = np.random.default_rng(5)
    fields = [f"x{i}" for i in range(18)]
    for _ in range(20):
        a = ranking_from_order(list(rng.permutation(fields)), fields)
        b = ranking_from_order(list(rng.permutation(fields)), fields)
        chosen = select_common_topk(a, b, 12)
        assert len(chosen) <= 12
        assert set(chosen) <= set(a.order[:12]) & set(b.order[:12])


def test_select_common_topk_errors():
    a = ranking_from_order(['f1', 'f2'], ['f1', 'f2'])
    other = ranking_from_order(['g1', 'g2'], ['g1', 'g2'])
    with pytest.raises(SchemaMismatchError):
        select_common_topk(a, other, 1)
    with pytest.raises(ConfigError):
        select_common_topk(a, a, 3)


def test_ranking_rows_export():
    fields = ['f1', 'f2', 'f3']
    forest = ranking_from_order(['f2', 'f1', 'f3'], fields)
    gbdt = ranking_from_order(['f2', 'f3', 'f1'], fields)
    rows = ranking_rows(forest, gbdt, ['f2'])
    assert [r['field'] for r in rows] == ['f2', 'f1', 'f3']
    assert rows[0]['rank_forest'] == 1 and rows[0]['rank_gbdt'] == 1
    assert [r['selected'] for r in rows] == [True, False, False]
    assert set(rows[0]) == {'field', 'score', 'score_forest', 'score_gbdt', 'rank_forest', 'rank_gbdt', 'selected'}


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
