"""
Core package for the Bernoulli anomaly detection system
"""
from core.config import Config, RunConfig, StateBackend
from core.errors import BernoulliADError, ConfigError
from core.rng import RngStream
from core.state_manager import RunState, StageExecution, StateManager, make_state_manager

__all__ = [
    "Config",
    "RunConfig",
    "StateBackend",
    "BernoulliADError",
    "ConfigError",
    "RngStream",
    "StateManager",
    "make_state_manager",
    "RunState",
    "StageExecution",
]
