"""Age-of-Processing task offloading for autonomous vehicles over multi-RAT edge clouds."""
from ._kernels import BACKEND
from .config import ScenarioConfig, emit_config, parse_config, parse_config_text
from .errors import (AdmissionError, AopOffloadError, ConfigError, ConstraintError, DomainError,
                     InfeasibleError, ParseError)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ScenarioConfig", "emit_config", "parse_config", "parse_config_text",
    "AdmissionError", "AopOffloadError", "ConfigError", "ConstraintError", "DomainError",
    "InfeasibleError", "ParseError",
]
