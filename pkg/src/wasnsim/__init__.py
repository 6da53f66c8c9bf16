"""Simulator for distributed node-specific signal estimation in WASNs."""

from .estimation import Algorithm, FilterSet
from .harness import ExperimentSpec, ResultTable, run_experiment
from .scenario import Environment, ScenarioConfig, SCMSet, SelectionSet

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "Environment",
    "ExperimentSpec",
    "FilterSet",
    "ResultTable",
    "run_experiment",
    "ScenarioConfig",
    "SCMSet",
    "SelectionSet",
    "__version__",
]
