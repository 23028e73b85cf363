from .config import ExperimentConfig, load_config, save_config
from .runner import (grid_search_interval, run_sampling, sweep_gamma_steps,
                     sweep_initial_time)

__all__ = [
    "ExperimentConfig",
    "load_config",
    "save_config",
    "run_sampling",
    "sweep_gamma_steps",
    "sweep_initial_time",
    "grid_search_interval",
]
