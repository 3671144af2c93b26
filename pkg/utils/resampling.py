"""
Class rebalancing for encoded crash data.
SMOTE oversampling, Wilson's Edited Nearest Neighbours cleaning and their
SMOTEENN composition, on top of an exact brute-force k-NN core.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from utils.data_processing import LABEL_LEVELS
from utils.errors import ConfigError, DataError
from utils.parallel import parallel_map

logger = logging.getLogger(__name__)

MATCH_MAJORITY = 'match-majority'
RESAMPLE_SCOPES = ('all', 'train')
NEIGHBOR_BLOCK_ROWS = 256


@dataclass(frozen=True)
class ResampleParams:
    smote_k: int = 5
    enn_k: int = 3
    target: object = MATCH_MAJORITY
    seed: int = 0
    snap_categorical: bool = True
    scope: str = 'all'

    def __post_init__(self):
        is_valid, error = validate_resample_params(self)
        if not is_valid:
            raise ConfigError(error)


def validate_resample_params(params):
    """
    Validate resampling parameters.
    Returns (is_valid, error_message)
    """
    if params.smote_k < 1:
        return False, f"smote_k must be at least 1, got {params.smote_k}"
    if params.enn_k < 1 or params.enn_k % 2 == 0:
        return False, f"enn_k must be a positive odd integer, got {params.enn_k}"
    if params.scope not in RESAMPLE_SCOPES:
        return False, f"scope must be one of {list(RESAMPLE_SCOPES)}, got {params.scope!r}"
    target = params.target
    if isinstance(target, str):
        if target != MATCH_MAJORITY:
            return False, f"target must be {MATCH_MAJORITY!r} or per-class counts, got {target!r}"
    elif isinstance(target, dict):
        unknown = sorted(set(target) - set(LABEL_LEVELS))
        if unknown:
            return False, f"target names unknown classes {unknown}"
        if any(int(v) < 0 for v in target.values()):
            return False, "target counts must be nonnegative"
    else:
        try:
            counts = [int(v) for v in target]
        except TypeError:
            return False, f"target must be {MATCH_MAJORITY!r} or per-class counts, got {target!r}"
        if len(counts) != len(LABEL_LEVELS) or any(v < 0 for v in counts):
            return False, f"target needs {len(LABEL_LEVELS)} nonnegative counts, got {counts}"
    return True, None


def target_counts(params, counts):
    """Per-class target sizes for SMOTE given the current counts"""
    counts = np.asarray(counts, dtype=np.int64)
    if isinstance(params.target, str):
        return np.full(len(LABEL_LEVELS), counts.max(), dtype=np.int64)
    if isinstance(params.target, dict):
        return np.array([int(params.target.get(level, counts[c])) for c, level in enumerate(LABEL_LEVELS)],
                        dtype=np.int64)
    return np.array([int(v) for v in params.target], dtype=np.int64)


@dataclass
class ResampleStats:
    before: tuple
    after_smote: tuple
    after_enn: tuple

    @classmethod
    def from_rows(cls, rows):
        by_class = {row['class']: row for row in rows}
        try:
            columns = [[int(by_class[level][key]) for level in LABEL_LEVELS]
                       for key in ('before', 'after_smote', 'after_enn')]
        except KeyError as e:
            raise DataError(f"Resample stats are missing {e}")
        return cls(*(tuple(c) for c in columns))

    def to_rows(self):
        return [
            {
                'class': level,
                'before': int(self.before[c]),
                'after_smote': int(self.after_smote[c]),
                'after_enn': int(self.after_enn[c]),
            }
            for c, level in enumerate(LABEL_LEVELS)
        ]


@dataclass
class SyntheticDraws:
    """Provenance of SMOTE output: row r = seed + lam * (neighbor - seed), before snapping"""
    labels: np.ndarray
    seed_rows: np.ndarray
    neighbor_rows: np.ndarray
    lambdas: np.ndarray
    rows: np.ndarray = field(default=None)


def knn_indices(X, query_row, k, labels=None, same_class_only=None):
    """
    The k nearest rows to X[query_row] by Euclidean distance, excluding the
    query itself; ties go to the lower row index.
    """
    X = np.asarray(X, dtype=np.float64)
    if same_class_only is None:
        candidates = np.arange(X.shape[0])
    else:
        if labels is None:
            raise DataError("same_class_only needs labels")
        candidates = np.flatnonzero(np.asarray(labels) == same_class_only)
    candidates = candidates[candidates != query_row]
    if k < 1 or k > candidates.size:
        raise DataError(f"k={k} is too large: only {candidates.size} eligible neighbors")
    diffs = X[candidates] - X[query_row]
    distances = np.einsum('ij,ij->i', diffs, diffs)
    order = np.lexsort((candidates, distances))
    return candidates[order[:k]]


def _neighbor_block(X, squared_norms, k, start, stop):
    d2 = squared_norms[start:stop, None] + squared_norms[None, :] - 2.0 * (X[start:stop] @ X.T)
    np.maximum(d2, 0.0, out=d2)
    local = np.arange(stop - start)
    d2[local, start + local] = np.inf

    # k-th smallest value per row, then fill ties at that value in index order
    kth = np.partition(d2, k - 1, axis=1)[:, k - 1:k]
    below = d2 < kth
    at = d2 == kth
    needed = k - below.sum(axis=1, keepdims=True)
    chosen = below | (at & (np.cumsum(at, axis=1) <= needed))
    columns = np.nonzero(chosen)[1].reshape(stop - start, k)
    distances = np.take_along_axis(d2, columns, axis=1)
    order = np.argsort(distances, axis=1, kind='stable')
    return np.take_along_axis(columns, order, axis=1)


def neighbor_table(X, k, block_rows=NEIGHBOR_BLOCK_ROWS):
    """
    (n, k) table of each row's k nearest other rows, same ordering rule as
    knn_indices. Distances are evaluated in row blocks.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k < 1 or k > n - 1:
        raise DataError(f"k={k} is too large for {n} rows")
    squared_norms = np.einsum('ij,ij->i', X, X)
    starts = range(0, n, block_rows)
    blocks = parallel_map(lambda s: _neighbor_block(X, squared_norms, k, s, min(s + block_rows, n)), starts)
    return np.concatenate(blocks, axis=0)


def snap_rows(rows, seed_rows, column_map):
    """One-hot each field block at its max; ties go to the seed row's level, else the lowest level"""
    snapped = np.zeros_like(rows)
    index = np.arange(rows.shape[0])
    for start, stop in column_map.values():
        block = rows[:, start:stop]
        is_max = block == block.max(axis=1, keepdims=True)
        seed_level = np.argmax(seed_rows[:, start:stop], axis=1)
        level = np.where(is_max[index, seed_level], seed_level, np.argmax(is_max, axis=1))
        snapped[index, start + level] = 1.0
    return snapped


def smote_draws(matrix, params):
    """Synthetic rows needed to reach the per-class targets, with their provenance"""
    counts = matrix.class_counts()
    targets = target_counts(params, counts)
    rng = np.random.default_rng(params.seed)
    pieces = []
    for c, level in enumerate(LABEL_LEVELS):
        needed = int(targets[c] - counts[c])
        if needed <= 0:
            continue
        if counts[c] <= params.smote_k:
            raise DataError(f"Class {level} has {counts[c]} rows; SMOTE with smote_k={params.smote_k} "
                            f"needs more than {params.smote_k}")
        members = np.flatnonzero(matrix.labels == c)
        neighbors = neighbor_table(matrix.data[members], params.smote_k)
        seeds = rng.integers(0, members.size, size=needed)
        picks = rng.integers(0, params.smote_k, size=needed)
        lambdas = rng.random(needed)
        pieces.append((np.full(needed, c, dtype=np.int64), members[seeds], members[neighbors[seeds, picks]], lambdas))
        logger.debug("SMOTE: %d synthetic %s rows from %d originals", needed, level, counts[c])

    if not pieces:
        empty = np.empty(0, dtype=np.int64)
        return SyntheticDraws(empty, empty, empty, np.empty(0), np.empty((0, matrix.n_columns)))
    labels, seed_rows, neighbor_rows, lambdas = (np.concatenate(parts) for parts in zip(*pieces))
    base = matrix.data[seed_rows]
    rows = base + lambdas[:, None] * (matrix.data[neighbor_rows] - base)
    if params.snap_categorical:
        rows = snap_rows(rows, base, matrix.column_map)
    return SyntheticDraws(labels, seed_rows, neighbor_rows, lambdas, rows)


def smote(matrix, params):
    """Originals followed by synthetic rows (class by class); never removes rows"""
    draws = smote_draws(matrix, params)
    data = np.concatenate([matrix.data, draws.rows], axis=0)
    labels = np.concatenate([matrix.labels, draws.labels])
    return matrix.with_rows(data, labels)


def enn(matrix, params):
    """Wilson's rule keep-mask: keep a row iff its enn_k neighbors' majority label matches"""
    if matrix.n_rows <= params.enn_k:
        raise DataError(f"ENN with enn_k={params.enn_k} needs more than {params.enn_k} rows, got {matrix.n_rows}")
    neighbor_labels = matrix.labels[neighbor_table(matrix.data, params.enn_k)]
    votes = np.stack([(neighbor_labels == c).sum(axis=1) for c in range(len(LABEL_LEVELS))], axis=1)
    majority = np.argmax(votes, axis=1)
    return majority == matrix.labels


def smoteenn(matrix, params):
    """SMOTE then ENN; returns (resampled matrix, ResampleStats)"""
    before = matrix.class_counts()
    oversampled = smote(matrix, params)
    after_smote = oversampled.class_counts()
    keep = enn(oversampled, params)
    cleaned = oversampled.take(np.flatnonzero(keep))
    stats = ResampleStats(
        before=tuple(int(v) for v in before),
        after_smote=tuple(int(v) for v in after_smote),
        after_enn=tuple(int(v) for v in cleaned.class_counts()),
    )
    logger.info("SMOTEENN: %s -> %s -> %s", list(stats.before), list(stats.after_smote), list(stats.after_enn))
    return cleaned, stats
