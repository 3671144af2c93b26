"""
Pipeline configuration.
Loads the versioned YAML (or JSON) config, applies flag overrides and builds
the typed parameter objects each stage needs. Relative paths resolve against
the config file's directory.
"""

import logging
import os
from dataclasses import dataclass, field, replace

import yaml

from models.hyperparams import FLOAT_FIELDS, hyperparams_from_dict
from models.registry import MODEL_KINDS
from models.search import SearchSpace, default_candidates
from models.training import RunSpec
from utils.data_processing import SplitSpec
from utils.errors import ConfigError
from utils.importance import TreeParams, forest_defaults, gbdt_defaults
from utils.reporting import validate_formats
from utils.resampling import MATCH_MAJORITY, ResampleParams
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
SECTIONS = ('config_version', 'seed', 'data', 'output_dir', 'split', 'selection', 'resample',
            'training', 'hyperparams', 'search', 'report')
DTYPES = ('float64', 'float32')


@dataclass
class PipelineConfig:
    seed: int = 0
    profile_path: str = None
    csv_path: str = None
    schema_path: str = None
    distractor_fields: int = 0
    output_dir: str = 'runs/default'
    split: SplitSpec = field(default_factory=SplitSpec)
    top_k: int = 12
    forest: TreeParams = field(default_factory=forest_defaults)
    gbdt: TreeParams = field(default_factory=gbdt_defaults)
    resample: ResampleParams = field(default_factory=ResampleParams)
    models: tuple = ('armnet', 'mambanet')
    use_class_weights: bool = True
    patience: int = 10
    dtype: str = 'float64'
    hyperparams: dict = field(default_factory=dict)
    search_enabled: bool = False
    search_draws: int = 100
    search_space: SearchSpace = field(default_factory=SearchSpace)
    report_formats: tuple = ('json', 'csv', 'markdown')

    @property
    def input_path(self):
        return self.csv_path or self.profile_path

    def run_spec(self, kind, input_dim):
        """RunSpec for one model kind once the encoded width is known"""
        if kind not in MODEL_KINDS:
            raise ConfigError(f"Unknown model kind {kind!r}")
        hyperparams = hyperparams_from_dict(self.hyperparams.get(kind, {}), input_dim=input_dim)
        return RunSpec(
            model_kind=kind,
            hyperparams=hyperparams,
            split=self.split,
            resample=self.resample,
            patience=self.patience,
            seed=derive_seed(self.seed, f'train:{kind}'),
            use_class_weights=self.use_class_weights,
            dtype=self.dtype,
        )


def validate_config(raw):
    """
    Structural checks on the parsed config document.
    Returns (is_valid, error_message)
    """
    if not isinstance(raw, dict):
        return False, "Config must be a mapping"
    version = raw.get('config_version')
    if version != CONFIG_VERSION:
        return False, f"config_version must be {CONFIG_VERSION}, got {version!r}"
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        return False, f"Unknown config sections: {unknown}"
    data = raw.get('data') or {}
    if not isinstance(data, dict):
        return False, "data must be a mapping"
    if bool(data.get('profile')) == bool(data.get('csv')):
        return False, "data needs exactly one of 'profile' or 'csv'"
    if data.get('csv') and not data.get('schema'):
        return False, "data.csv needs data.schema"
    for name in ('seed',):
        value = raw.get(name, 0)
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            return False, f"{name} must be a nonnegative integer, got {value!r}"
    models = (raw.get('training') or {}).get('models', list(MODEL_KINDS))
    bad = [m for m in models if m not in MODEL_KINDS]
    if bad or not models:
        return False, f"training.models must name kinds from {sorted(MODEL_KINDS)}, got {models}"
    return True, None


def _resolve(base_dir, path):
    if path is None or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def _section(raw, name):
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a mapping")
    return value


def _int(section, name, default, prefix):
    value = section.get(name, default)
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{prefix}.{name} must be an integer, got {value!r}")


def _tree_params(section, defaults, seed):
    values = dict(section)
    values.setdefault('seed', seed)
    try:
        for name in ('n_trees', 'max_depth', 'min_samples_leaf'):
            if name in values:
                values[name] = int(values[name])
        for name in ('feature_subsample', 'learning_rate'):
            if name in values:
                values[name] = float(values[name])
        return replace(defaults, **values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Bad tree parameters: {e}")


def _search_space(section):
    if 'space' not in section:
        return SearchSpace()
    candidates = default_candidates()
    for name, values in dict(section['space']).items():
        if not isinstance(values, list):
            raise ConfigError(f"search.space.{name} must be a list")
        try:
            if name in FLOAT_FIELDS:
                values = [float(v) for v in values]
            elif name == 'hidden_dims':
                values = [tuple(v) for v in values]
        except (TypeError, ValueError):
            raise ConfigError(f"search.space.{name} has a value that does not parse: {values!r}")
        candidates[name] = values
    return SearchSpace(candidates=candidates)


def build_config(raw, base_dir='.', seed=None, out=None, draws=None):
    """Typed config from a parsed document plus flag overrides"""
    is_valid, error = validate_config(raw)
    if not is_valid:
        raise ConfigError(error)
    top_seed = int(raw.get('seed', 0) if seed is None else seed)
    data = _section(raw, 'data')
    split = _section(raw, 'split')
    selection = _section(raw, 'selection')
    resample = _section(raw, 'resample')
    training = _section(raw, 'training')
    search = _section(raw, 'search')
    report = _section(raw, 'report')
    hyperparams = _section(raw, 'hyperparams')

    try:
        split_spec = SplitSpec(
            train_frac=float(split.get('train_frac', 0.6)),
            val_frac=float(split.get('val_frac', 0.2)),
            test_frac=float(split.get('test_frac', 0.2)),
            seed=derive_seed(top_seed, 'split'),
            stratified=bool(split.get('stratified', True)),
        )
        resample_params = ResampleParams(
            smote_k=int(resample.get('smote_k', 5)),
            enn_k=int(resample.get('enn_k', 3)),
            target=resample.get('target', MATCH_MAJORITY),
            seed=derive_seed(top_seed, 'resample'),
            snap_categorical=bool(resample.get('snap_categorical', True)),
            scope=resample.get('scope', 'all'),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e))

    dtype = training.get('dtype', 'float64')
    if dtype not in DTYPES:
        raise ConfigError(f"training.dtype must be one of {list(DTYPES)}, got {dtype!r}")
    unknown_kinds = sorted(set(hyperparams) - set(MODEL_KINDS))
    if unknown_kinds:
        raise ConfigError(f"hyperparams names unknown model kinds {unknown_kinds}")
    formats = tuple(report.get('formats', ('json', 'csv', 'markdown')))
    is_valid, error = validate_formats(formats)
    if not is_valid:
        raise ConfigError(error)

    config = PipelineConfig(
        seed=top_seed,
        profile_path=_resolve(base_dir, data.get('profile')),
        csv_path=_resolve(base_dir, data.get('csv')),
        schema_path=_resolve(base_dir, data.get('schema')),
        distractor_fields=_int(data, 'distractor_fields', 0, 'data'),
        output_dir=out if out is not None else _resolve(base_dir, raw.get('output_dir', 'runs/default')),
        split=split_spec,
        top_k=_int(selection, 'top_k', 12, 'selection'),
        forest=_tree_params(_section(selection, 'forest'), forest_defaults(), derive_seed(top_seed, 'forest')),
        gbdt=_tree_params(_section(selection, 'gbdt'), gbdt_defaults(), derive_seed(top_seed, 'gbdt')),
        resample=resample_params,
        models=tuple(training.get('models', tuple(MODEL_KINDS))),
        use_class_weights=bool(training.get('use_class_weights', True)),
        patience=_int(training, 'patience', 10, 'training'),
        dtype=dtype,
        hyperparams={kind: dict(values or {}) for kind, values in hyperparams.items()},
        search_enabled=bool(search.get('enabled', False)),
        search_draws=_int(search, 'draws', 100, 'search') if draws is None else int(draws),
        search_space=_search_space(search),
        report_formats=formats,
    )
    if config.distractor_fields < 0:
        raise ConfigError("data.distractor_fields must be nonnegative")
    if config.top_k < 1:
        raise ConfigError(f"selection.top_k must be positive, got {config.top_k}")
    if config.search_draws < 1:
        raise ConfigError(f"search draws must be positive, got {config.search_draws}")
    output = os.path.abspath(config.output_dir)
    source = os.path.abspath(config.input_path)
    if output in (source, os.path.dirname(source)):
        raise ConfigError(f"output_dir {config.output_dir} must differ from the input location")
    return config


def load_config(path, seed=None, out=None, draws=None):
    """Read and validate a config file; flags override config scalars"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse config {path}: {e}")
    config = build_config(raw, base_dir=os.path.dirname(os.path.abspath(path)), seed=seed, out=out, draws=draws)
    logger.info("Loaded config %s (seed %d, output %s)", path, config.seed, config.output_dir)
    return config
