r"""
**A**\ coustic **W**\ ord **E**\ mbeddings from self-supervised frame features.
"""

from .errors import (
    AweForgeError,
    ConfigurationError,
    DataError,
    FormatError,
    StageError,
    TrainingError,
)
from .config import load_config
from .pipeline import (
    CrosslingualConfig,
    ExperimentConfig,
    RunManifest,
    run_crosslingual,
    run_experiment,
)

__all__ = [
    "AweForgeError",
    "ConfigurationError",
    "DataError",
    "FormatError",
    "StageError",
    "TrainingError",
    "load_config",
    "ExperimentConfig",
    "CrosslingualConfig",
    "RunManifest",
    "run_experiment",
    "run_crosslingual",
]
