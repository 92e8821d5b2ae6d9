"""Scenario files, builders for the shipped templates and the end-to-end pipeline."""
from .builders import Problem, build_problem
from .config import ConfigError, ScenarioConfig, dump, dumps, load, loads, shipped
from .plot import PALETTE, render_svg
from .run import RunArtifacts, StageError, emit_plot, run_scenario, validate_partition

__all__ = [
    "PALETTE",
    "ConfigError",
    "Problem",
    "RunArtifacts",
    "ScenarioConfig",
    "StageError",
    "build_problem",
    "dump",
    "dumps",
    "emit_plot",
    "load",
    "loads",
    "render_svg",
    "run_scenario",
    "shipped",
    "validate_partition",
]
