"""Scenario runner, adversary, oracle, property checker and cost accountant."""

from .checker import PropertyReport, check_properties
from .costs import CostReport, MixedOperations, account_costs
from .scenario import MalformedScenario, Scenario, from_dict, load_scenario
from .scheduler import Trace, run_scenario

__all__ = [
    "CostReport", "MalformedScenario", "MixedOperations", "PropertyReport", "Scenario", "Trace",
    "account_costs", "check_properties", "from_dict", "load_scenario", "run_scenario",
]
