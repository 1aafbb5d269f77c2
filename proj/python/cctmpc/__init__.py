"""Configuration-constrained tube MPC for reference tracking."""

from ._core import (
    Controller,
    CctmpcError,
    RunResult,
    Scenario,
    load_scenario,
    optimal_rci,
    parse_scenario,
    run,
    validate,
)

__all__ = [
    "Controller",
    "CctmpcError",
    "RunResult",
    "Scenario",
    "load_scenario",
    "optimal_rci",
    "parse_scenario",
    "run",
    "validate",
]
