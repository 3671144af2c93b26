"""
Model hyperparameters.
Defaults: hidden 128, 4 layers, dropout 0.3,
AdamW lr 1e-3 / weight decay 1e-4, 50 epochs, batch 32; embedding width,
head count and interaction neurons are our own choices.
"""

from dataclasses import asdict, dataclass, fields, replace

from utils.errors import ConfigError

OUTPUT_DIM = 3
MAMBANET_VARIANTS = ('cnn-lstm', 'dense')
FLOAT_FIELDS = ('dropout_rate', 'lr', 'weight_decay', 'plateau_factor', 'min_lr')


@dataclass(frozen=True)
class HyperParams:
    input_dim: int
    output_dim: int = OUTPUT_DIM
    hidden_dim: int = 128
    hidden_dims: tuple = (128, 64)
    num_layers: int = 4
    dropout_rate: float = 0.3
    lr: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 50
    batch_size: int = 32
    embed_dim: int = 16
    num_heads: int = 4
    num_cross: int = 8
    conv_width: int = 3
    num_conv: int = 2
    lstm_hidden: int = 64
    variant: str = 'cnn-lstm'
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    min_lr: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, 'hidden_dims', tuple(int(d) for d in self.hidden_dims))
        is_valid, error = validate_hyperparams(self)
        if not is_valid:
            raise ConfigError(error)

    def to_dict(self):
        data = asdict(self)
        data['hidden_dims'] = list(self.hidden_dims)
        return data

    def with_updates(self, **changes):
        return replace(self, **changes)


def validate_hyperparams(hp):
    """
    Validate a HyperParams instance.
    Returns (is_valid, error_message)
    """
    positive_ints = ('input_dim', 'hidden_dim', 'num_layers', 'epochs', 'batch_size', 'embed_dim',
                     'num_heads', 'num_cross', 'conv_width', 'lstm_hidden', 'plateau_patience')
    for name in positive_ints:
        value = getattr(hp, name)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            return False, f"{name} must be a positive integer, got {value!r}"
    if hp.num_conv < 0:
        return False, f"num_conv must be nonnegative, got {hp.num_conv}"
    if hp.output_dim != OUTPUT_DIM:
        return False, f"output_dim must be {OUTPUT_DIM}, got {hp.output_dim}"
    if not hp.hidden_dims or any(d < 1 for d in hp.hidden_dims):
        return False, f"hidden_dims must be a non-empty list of positive sizes, got {list(hp.hidden_dims)}"
    if not 0.0 <= hp.dropout_rate < 1.0:
        return False, f"dropout_rate must be in [0, 1), got {hp.dropout_rate}"
    if hp.lr <= 0:
        return False, f"lr must be positive, got {hp.lr}"
    if hp.weight_decay < 0:
        return False, f"weight_decay must be nonnegative, got {hp.weight_decay}"
    if hp.conv_width % 2 == 0:
        return False, f"conv_width must be odd, got {hp.conv_width}"
    if hp.variant not in MAMBANET_VARIANTS:
        return False, f"variant must be one of {list(MAMBANET_VARIANTS)}, got {hp.variant!r}"
    if not 0.0 < hp.plateau_factor < 1.0:
        return False, f"plateau_factor must be in (0, 1), got {hp.plateau_factor}"
    if hp.min_lr < 0:
        return False, f"min_lr must be nonnegative, got {hp.min_lr}"
    return True, None


def hyperparams_from_dict(data, input_dim=None):
    """Build HyperParams from a config or sidecar mapping; unknown keys are an error"""
    data = dict(data or {})
    known = {f.name for f in fields(HyperParams)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown hyperparameters: {unknown}")
    if input_dim is not None:
        data['input_dim'] = input_dim
    if 'input_dim' not in data:
        raise ConfigError("input_dim is required")
    if 'hidden_dims' in data:
        data['hidden_dims'] = tuple(data['hidden_dims'])
    try:
        # YAML reads bare 1e-3 as a string
        for name in FLOAT_FIELDS:
            if name in data:
                data[name] = float(data[name])
        return HyperParams(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Bad hyperparameters: {e}")
