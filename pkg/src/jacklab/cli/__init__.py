"""Command line entry point and the scenario runner behind it."""

from jacklab.cli.builtins import BUILTINS, builtin
from jacklab.cli.errors import AssertionFailed, TopologyError
from jacklab.cli.pretestbed import capture_invite_template
from jacklab.cli.runner import CheckResult, ScenarioReport, Testbed, effective_seed, run_scenario
from jacklab.cli.scenario import Check, Scenario, load_scenario, parse_scenario

__all__ = [
    "AssertionFailed",
    "BUILTINS",
    "Check",
    "CheckResult",
    "Scenario",
    "ScenarioReport",
    "Testbed",
    "TopologyError",
    "builtin",
    "capture_invite_template",
    "effective_seed",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
]
