"""
Error types shared by every stage.
Each error carries the exit code the CLI reports for it.
"""


class SevForgeError(Exception):
    """Base error for the pipeline"""
    kind = 'error'
    exit_code = 1


class ConfigError(SevForgeError, ValueError):
    """Config file, flag or parameter validation failure"""
    kind = 'config'
    exit_code = 2


class DataError(SevForgeError, ValueError):
    """Input data does not satisfy a stage's preconditions"""
    kind = 'data'
    exit_code = 3


class SchemaMismatchError(DataError):
    """Two artifacts were produced against different schemas"""


class ShapeError(DataError):
    """Tensor or matrix dimensions do not line up"""


class NumericalError(SevForgeError):
    """Non-finite values, domain violations or diverging training"""
    kind = 'numerical'
    exit_code = 4
