"""Exception types shared across the package.

Each class carries the CLI exit code it maps to.
"""


class CrackJointError(Exception):
    exit_code = 1


class ParameterError(CrackJointError, ValueError):
    """Invalid argument value or shape."""

    exit_code = 2


class ConfigError(ParameterError):
    exit_code = 2


class EmptyRegionError(ParameterError):
    """An operation needs at least one foreground pixel and got none."""


class DataError(CrackJointError):
    exit_code = 3


class StateError(CrackJointError):
    """Missing or incompatible checkpoint / training state."""

    exit_code = 4


class NaNLossError(CrackJointError, FloatingPointError):
    exit_code = 4
