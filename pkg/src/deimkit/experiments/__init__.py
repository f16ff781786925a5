"""Reproductions of the five numerical experiments."""

from .common import ErrorReport, ExperimentConfig, ordered_map, read_config_file, resolve_config
from .examples import (
    run_example,
    run_example1,
    run_example2,
    run_example3,
    run_example4,
    run_example5,
)
from .fem import AdvectionDiffusion, build_fem_weights
from .rc_ladder import RcLadder, ReducedLadder, solve_rc_ladder_full

__all__ = [
    "AdvectionDiffusion",
    "ErrorReport",
    "ExperimentConfig",
    "RcLadder",
    "ReducedLadder",
    "build_fem_weights",
    "ordered_map",
    "read_config_file",
    "resolve_config",
    "run_example",
    "run_example1",
    "run_example2",
    "run_example3",
    "run_example4",
    "run_example5",
    "solve_rc_ladder_full",
]
