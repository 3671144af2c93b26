"""
Thread fan-out for tree fitting, neighbor search and search draws.
Results always come back in submission order.
"""

import logging
import os

from joblib import Parallel, delayed

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

THREADS_ENV = 'SEV_FORGE_THREADS'


def get_thread_count():
    """Worker cap from SEV_FORGE_THREADS (default 1)"""
    raw = os.getenv(THREADS_ENV, '1').strip()
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if count < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {count}")
    return count


def parallel_map(func, items, n_jobs=None):
    """[func(item) for item in items], fanned out over threads"""
    items = list(items)
    n_jobs = get_thread_count() if n_jobs is None else n_jobs
    if n_jobs == 1 or len(items) <= 1:
        return [func(item) for item in items]
    return Parallel(n_jobs=min(n_jobs, len(items)), prefer='threads')(delayed(func)(item) for item in items)
