"""Batch runner: configuration, runs, sweeps, plots and the bundled self-test."""

from .commands import cmd_plot, cmd_run, cmd_sweep
from .config import RunConfig, build_setup, default_config, load_config, parse_config, serialize
from .main import main

__all__ = ["RunConfig", "build_setup", "cmd_plot", "cmd_run", "cmd_sweep", "default_config",
           "load_config", "main", "parse_config", "serialize"]
