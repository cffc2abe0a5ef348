from .config import ExperimentConfig, emit_config, parse_config, parse_config_file
from .runner import RunReport, run
from .verify import verify

__all__ = [
    "ExperimentConfig",
    "emit_config",
    "parse_config",
    "parse_config_file",
    "RunReport",
    "run",
    "verify",
]
