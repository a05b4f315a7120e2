"""Indoor VLC downlink simulator: movable AP, mirror-array RIS and fixed AP baselines."""
__version__ = "0.1.0"

from .config import CONFIG, SystemConfig, build_system, load_system, validate_config  # noqa: E402
from .montecarlo import SystemModel, SweepResult, run_experiment, run_instance  # noqa: E402

__all__ = [
    "CONFIG",
    "SystemConfig",
    "SystemModel",
    "SweepResult",
    "build_system",
    "load_system",
    "run_experiment",
    "run_instance",
    "validate_config",
]
