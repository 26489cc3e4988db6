"""Joint blind super-resolution and crack segmentation at desk scale."""

from .config import RunConfig
from .errors import (ConfigError, CrackJointError, DataError, EmptyRegionError, NaNLossError,
                     ParameterError, StateError)
from .metrics import MetricReport, evaluate

__version__ = "0.1.0"
