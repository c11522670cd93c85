"""Discrete-event simulation of dual-radio meshes."""

from .engine import InvariantViolation, Simulation, run_scenario
from .metrics import MetricsReport
from .scenario import ScenarioConfig, ScenarioError, load_scenario, parse_scenario

__all__ = ["InvariantViolation", "MetricsReport", "ScenarioConfig", "ScenarioError",
           "Simulation", "load_scenario", "parse_scenario", "run_scenario"]
