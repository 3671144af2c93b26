"""
The full run: every stage in order, each reading what the previous one wrote.
"""

import logging

from stages.data import resample, select_features, synth
from stages.modeling import evaluate, train, tune

logger = logging.getLogger(__name__)


def run_pipeline(config):
    """synth (profile input only), select-features, resample, train or tune, evaluate"""
    if config.profile_path:
        synth(config)
    select_features(config)
    resample(config)
    if config.search_enabled:
        tune(config)
    else:
        train(config)
    reports = evaluate(config)
    logger.info("pipeline done: outputs in %s", config.output_dir)
    return reports
