"""Configuration, end-to-end runs, sweeps, presets and the command line."""
from .config import ConfigError, LinkConfig, load_config, parse_config
from .pipeline import StageError, LinkState, papr_comparison, prepare, run_link
from .presets import PRESETS, preset, preset_names
from .sweep import SweepResult, required_snr, sweep

__all__ = [
    "ConfigError",
    "LinkConfig",
    "load_config",
    "parse_config",
    "StageError",
    "LinkState",
    "prepare",
    "run_link",
    "papr_comparison",
    "PRESETS",
    "preset",
    "preset_names",
    "SweepResult",
    "sweep",
    "required_snr",
]
