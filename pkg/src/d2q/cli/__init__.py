"""Experiment harness: run configuration, checkpoints, commands, reports."""

from .config import RunConfig, config_hash, default_config, load_config, schema_hash
from .checkpoint import load_checkpoint, save_checkpoint, serialize_predictor
from .commands import (CliError, cmd_eval, cmd_generate, cmd_sweep, cmd_train,
                       evaluate_watchtime)

__all__ = [
    "RunConfig", "config_hash", "default_config", "load_config", "schema_hash",
    "load_checkpoint", "save_checkpoint", "serialize_predictor",
    "CliError", "cmd_eval", "cmd_generate", "cmd_sweep", "cmd_train",
    "evaluate_watchtime",
]
