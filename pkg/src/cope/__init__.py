"""Scheduling computation and execution for planners that act while they plan."""
from .core import (
    Allocation,
    BaseAction,
    CopeInstance,
    DiscreteDistribution,
    GreedyParams,
    Process,
    Sae2Instance,
    overall_success,
)
from .mdp import Compute, Execute, Model, State, optimal_value

__all__ = [
    "Allocation", "BaseAction", "CopeInstance", "DiscreteDistribution", "GreedyParams", "Process",
    "Sae2Instance", "overall_success", "Compute", "Execute", "Model", "State", "optimal_value",
]
