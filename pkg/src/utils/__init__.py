"""Utility modules for the CACRL scheduler."""

from .config import Config, ExperimentConfig
from .errors import (
    CACRLError,
    CheckpointError,
    ConfigurationError,
    ConvergenceError,
    ExperimentAborted,
    MissingNoiseRecordError,
    NumericalError,
    ShapeError,
)
from .logger import setup_logger
from .performance import DropoutRateWindow, PerformanceProfiler

__all__ = [
    "Config",
    "ExperimentConfig",
    "CACRLError",
    "CheckpointError",
    "ConfigurationError",
    "ConvergenceError",
    "ExperimentAborted",
    "MissingNoiseRecordError",
    "NumericalError",
    "ShapeError",
    "setup_logger",
    "DropoutRateWindow",
    "PerformanceProfiler",
]
