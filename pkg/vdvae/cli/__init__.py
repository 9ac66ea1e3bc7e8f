"""Command-line surface and the run-config file format."""
from .runconfig import (
    RunConfig,
    apply_overrides,
    build_run_config,
    checkpoint_values,
    load_run_config,
    parse_lines,
)
from .commands import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, build_parser, main

__all__ = [
    "RunConfig",
    "apply_overrides",
    "build_run_config",
    "checkpoint_values",
    "load_run_config",
    "parse_lines",
    "EXIT_FAILURE",
    "EXIT_OK",
    "EXIT_USAGE",
    "build_parser",
    "main",
]
