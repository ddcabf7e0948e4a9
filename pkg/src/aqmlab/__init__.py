"""Discrete-event AQM simulator with an ns-2 style trace and metrics toolchain."""

from aqmlab.config import ScenarioConfig, load_config, dump_config
from aqmlab.engine import Simulator, RandomSource
from aqmlab.metrics import MetricsReport, rank_algorithms
from aqmlab.scenario import run_scenario

__all__ = [
    "ScenarioConfig",
    "load_config",
    "dump_config",
    "Simulator",
    "RandomSource",
    "MetricsReport",
    "rank_algorithms",
    "run_scenario",
]

__version__ = "0.1.0"
