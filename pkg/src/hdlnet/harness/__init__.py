"""Scenario harness: composes every component under a simulated clock."""

from hdlnet.harness.report import exit_code, propagation_summary, render
from hdlnet.harness.scenario import (
    RunConfig,
    Scenario,
    ScenarioEvent,
    ScenarioParseError,
    bundled,
    parse_scenario,
    parse_scenario_text,
)
from hdlnet.harness.simulator import ComponentBootFailure, EventOutcome, Move, RunReport, Simulation, run

__all__ = [
    "ComponentBootFailure",
    "EventOutcome",
    "Move",
    "RunConfig",
    "RunReport",
    "Scenario",
    "ScenarioEvent",
    "ScenarioParseError",
    "Simulation",
    "bundled",
    "exit_code",
    "parse_scenario",
    "parse_scenario_text",
    "propagation_summary",
    "render",
    "run",
]
