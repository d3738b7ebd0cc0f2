"""Discrete-time V2V simulator for combined power and rate congestion control."""

from .core import ALGORITHMS, ConfigError, ScenarioConfig, SimConfig
from .engine import RunResult, build_scenario, run, simulate
from .metrics import StepMetrics

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "RunResult",
    "ScenarioConfig",
    "SimConfig",
    "StepMetrics",
    "build_scenario",
    "run",
    "simulate",
    "__version__",
]
