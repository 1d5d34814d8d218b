"""Grouped dual-path RNN TasNet for small-footprint two-speaker separation."""
from .config import RunConfig, load_run_config, parse_run_config, serialize_run_config
from .profiler import ComplexityReport, count_model_macs, count_model_params, sweep
from .separator import ModelConfig, SeparatorModel, separate
from .training import TrainConfig, run_experiment, train

__version__ = "0.1.0"

__all__ = [
    "ComplexityReport", "ModelConfig", "RunConfig", "SeparatorModel", "TrainConfig",
    "count_model_macs", "count_model_params", "load_run_config", "parse_run_config",
    "run_experiment", "separate", "serialize_run_config", "sweep", "train",
]
