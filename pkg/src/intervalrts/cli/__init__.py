"""Local batch runner for experiment configs."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .runner import RunReport, run

__all__ = ["ConfigError", "ExperimentConfig", "RunReport", "load_config", "parse_config", "run"]
