"""
Feature importance from tree ensembles.
A random forest (Gini impurity decrease) and multiclass gradient-boosted
trees (log-loss split gain) each rank the original categorical fields; the
one-hot columns of a field are pooled back onto it. The modeling features
are the fields both rankers put in their top k.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from utils.data_processing import LABEL_LEVELS
from utils.errors import ConfigError, DataError, SchemaMismatchError
from utils.parallel import parallel_map
from utils.seeding import make_rng

logger = logging.getLogger(__name__)

GBDT_LAMBDA = 1.0
MIN_HESSIAN = 1e-6
MIN_GAIN = 1e-12


@dataclass(frozen=True)
class TreeParams:
    n_trees: int
    max_depth: int
    min_samples_leaf: int = 1
    feature_subsample: float = 1.0
    learning_rate: float = 0.1
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        is_valid, error = validate_tree_params(self)
        if not is_valid:
            raise ConfigError(error)


def validate_tree_params(params):
    """
    Validate tree ensemble parameters.
    Returns (is_valid, error_message)
    """
    for name in ('n_trees', 'max_depth', 'min_samples_leaf'):
        value = getattr(params, name)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            return False, f"{name} must be a positive integer, got {value!r}"
    if not 0.0 < params.feature_subsample <= 1.0:
        return False, f"feature_subsample must be in (0, 1], got {params.feature_subsample}"
    if params.learning_rate <= 0:
        return False, f"learning_rate must be positive, got {params.learning_rate}"
    return True, None


def forest_defaults(seed=0):
    return TreeParams(n_trees=200, max_depth=8, min_samples_leaf=5, feature_subsample=0.3, seed=seed)


def gbdt_defaults(seed=0):
    return TreeParams(n_trees=100, max_depth=3, min_samples_leaf=1, feature_subsample=1.0,
                      learning_rate=0.1, seed=seed, bootstrap=False)


@dataclass(frozen=True)
class ImportanceRanking:
    """Normalized per-field scores in schema order"""
    fields: tuple
    scores: tuple

    @property
    def order(self):
        """Fields by descending score, ties in schema order"""
        ranked = sorted(range(len(self.fields)), key=lambda i: (-self.scores[i], i))
        return [self.fields[i] for i in ranked]

    def rank_of(self, name):
        return self.order.index(name) + 1

    def score_of(self, name):
        return self.scores[self.fields.index(name)]

    def to_dict(self):
        return {name: score for name, score in zip(self.fields, self.scores)}


def _column_fields(matrix):
    owner = np.empty(matrix.n_columns, dtype=np.int64)
    for f, (start, stop) in enumerate(matrix.column_map.values()):
        owner[start:stop] = f
    return owner


def _ranking(matrix, column_scores, label):
    pooled = np.bincount(_column_fields(matrix), weights=column_scores, minlength=len(matrix.column_map))
    total = pooled.sum()
    if not total > 0:
        raise DataError(f"{label}: no split reduced the loss; cannot rank fields")
    return ImportanceRanking(fields=tuple(matrix.field_names), scores=tuple(float(s) for s in pooled / total))


def _check_input(matrix):
    if matrix.n_rows == 0:
        raise DataError("Importance ranking needs a non-empty matrix")
    present = np.flatnonzero(matrix.class_counts())
    if present.size < 2:
        raise DataError(f"Importance ranking needs at least 2 classes, got {[LABEL_LEVELS[c] for c in present]}")


def _candidate_columns(rng, n_columns, fraction):
    if fraction >= 1.0:
        return np.arange(n_columns)
    size = max(1, int(round(fraction * n_columns)))
    return np.sort(rng.choice(n_columns, size=size, replace=False))


def _best_split(x_node, stats, gain_fn, min_leaf):
    """
    Best threshold split over the candidate columns of one node.
    x_node: (m, f) values, stats: (m, s) per-row statistics summed on each side.
    Returns (column position, threshold, gain) or None; ties go to the lower
    column, then the lower threshold.
    """
    m = x_node.shape[0]
    order = np.argsort(x_node, axis=0, kind='stable')
    xs = np.take_along_axis(x_node, order, axis=0)
    prefix = np.cumsum(stats[order], axis=0)
    left = prefix[:-1]
    total = prefix[-1][0]
    gain = gain_fn(left, total - left, total)

    n_left = np.arange(1, m)[:, None]
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (m - n_left >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    flat = gain.T.ravel()
    best = int(np.argmax(flat))
    if not flat[best] > MIN_GAIN:
        return None
    column, position = divmod(best, m - 1)
    threshold = 0.5 * (xs[position, column] + xs[position + 1, column])
    return column, threshold, float(flat[best])


def _gini_gain(left, right, total):
    n_left = left.sum(axis=-1)
    n_right = right.sum(axis=-1)
    parent = (total ** 2).sum() / total.sum()
    return (left ** 2).sum(axis=-1) / n_left + (right ** 2).sum(axis=-1) / n_right - parent


def _boosting_gain(left, right, total):
    def score(part):
        return part[..., 0] ** 2 / (part[..., 1] + GBDT_LAMBDA)
    return 0.5 * (score(left) + score(right) - total[0] ** 2 / (total[1] + GBDT_LAMBDA))


def _grow(X, stats, params, rng, gain_fn, leaf_fn=None):
    """
    Depth-first tree growth over the rows of X.
    Returns per-column gain totals and, when leaf_fn is given, the leaf value
    of every row.
    """
    column_gain = np.zeros(X.shape[1])
    leaf_values = np.zeros(X.shape[0]) if leaf_fn is not None else None
    stack = [(np.arange(X.shape[0]), 0)]
    while stack:
        rows, depth = stack.pop()
        split = None
        if depth < params.max_depth and rows.size >= 2 * params.min_samples_leaf:
            columns = _candidate_columns(rng, X.shape[1], params.feature_subsample)
            split = _best_split(X[np.ix_(rows, columns)], stats[rows], gain_fn, params.min_samples_leaf)
        if split is None:
            if leaf_fn is not None:
                leaf_values[rows] = leaf_fn(stats[rows].sum(axis=0))
            continue
        position, threshold, gain = split
        column = columns[position]
        column_gain[column] += gain
        goes_left = X[rows, column] <= threshold
        stack.append((rows[~goes_left], depth + 1))
        stack.append((rows[goes_left], depth + 1))
    return column_gain, leaf_values


def _forest_tree(X, onehot, params, index):
    rng = make_rng(params.seed, 'tree', index)
    if params.bootstrap:
        sample = rng.integers(0, X.shape[0], size=X.shape[0])
        X, onehot = X[sample], onehot[sample]
    gains, _ = _grow(X, onehot, params, rng, _gini_gain)
    return gains


def fit_forest_importance(matrix, params):
    """Random-forest Gini importance pooled per field"""
    _check_input(matrix)
    onehot = np.eye(len(LABEL_LEVELS))[matrix.labels]
    per_tree = parallel_map(lambda t: _forest_tree(matrix.data, onehot, params, t), range(params.n_trees))
    column_scores = np.zeros(matrix.n_columns)
    for gains in per_tree:
        column_scores += gains
    logger.info("Random forest: %d trees over %d rows", params.n_trees, matrix.n_rows)
    return _ranking(matrix, column_scores, 'random forest')


def fit_gbdt_importance(matrix, params):
    """Softmax gradient boosting, one regression tree per class per round; importance = total split gain"""
    _check_input(matrix)
    n_classes = len(LABEL_LEVELS)
    targets = np.eye(n_classes)[matrix.labels]
    margins = np.zeros((matrix.n_rows, n_classes))
    column_scores = np.zeros(matrix.n_columns)
    rng = make_rng(params.seed, 'gbdt')

    def leaf_value(total):
        return -total[0] / (total[1] + GBDT_LAMBDA)

    for _ in range(params.n_trees):
        probs = softmax(margins, axis=1)
        updates = np.zeros_like(margins)
        for k in range(n_classes):
            p = probs[:, k]
            stats = np.stack([p - targets[:, k], np.maximum(p * (1.0 - p), MIN_HESSIAN)], axis=1)
            gains, leaves = _grow(matrix.data, stats, params, rng, _boosting_gain, leaf_fn=leaf_value)
            column_scores += gains
            updates[:, k] = leaves
        margins += params.learning_rate * updates
    logger.info("Gradient boosting: %d rounds over %d rows", params.n_trees, matrix.n_rows)
    return _ranking(matrix, column_scores, 'gradient boosting')


def select_common_topk(a, b, k):
    """Fields in the top k of both rankings, by ascending mean rank then schema order"""
    if tuple(a.fields) != tuple(b.fields):
        raise SchemaMismatchError("schema mismatch: rankings cover different fields")
    if k < 1 or k > len(a.fields):
        raise ConfigError(f"top_k must be between 1 and {len(a.fields)}, got {k}")
    top_a = set(a.order[:k])
    top_b = set(b.order[:k])
    common = [name for name in a.fields if name in top_a and name in top_b]
    return sorted(common, key=lambda name: ((a.rank_of(name) + b.rank_of(name)) / 2.0, a.fields.index(name)))


def ranking_rows(forest, gbdt, selected):
    """Export rows for the select-features report, best mean rank first"""
    selected = set(selected)
    rows = []
    for i, name in enumerate(forest.fields):
        rows.append({
            'field': name,
            'score': (forest.score_of(name) + gbdt.score_of(name)) / 2.0,
            'score_forest': forest.score_of(name),
            'score_gbdt': gbdt.score_of(name),
            'rank_forest': forest.rank_of(name),
            'rank_gbdt': gbdt.rank_of(name),
            'selected': name in selected,
            '_index': i,
        })
    rows.sort(key=lambda r: ((r['rank_forest'] + r['rank_gbdt']) / 2.0, r['_index']))
    for row in rows:
        del row['_index']
    return rows
