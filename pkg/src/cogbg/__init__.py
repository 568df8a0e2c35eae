"""cogbg: background subtraction with an adaptive cascade of Gaussians.

A per-pixel Gaussian mixture background model is decomposed into an ordered
rejection cascade (change probe, group mode, single-mode tests, full
mixture). A kernel-density scene prior learned from training frames drives
per-pixel learning rates, confidence-gated temporal sampling, and level
ordering. A faithful classic mixture-of-Gaussians engine is included as the
final cascade level and as an equivalence baseline.
"""

from .config import EngineConfig, build_config
from .errors import (
    CogbgError,
    ConfigError,
    DataError,
    FormatError,
    InternalError,
    SequenceError,
    UsageError,
)

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "build_config",
    "CogbgError",
    "ConfigError",
    "DataError",
    "FormatError",
    "InternalError",
    "SequenceError",
    "UsageError",
    "__version__",
]
