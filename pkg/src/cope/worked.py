"""The airport instances used throughout the docs and tests."""
from __future__ import annotations

from .core import BaseAction, CopeInstance, DiscreteDistribution as Dist, Process


def example_1() -> CopeInstance:
    """Train vs. taxi with no head actions: pure computation allocation."""
    return CopeInstance(
        {},
        (
            Process((), Dist.from_pairs([(8, 1.0)]), Dist.from_pairs([(-1, 0.2), (6, 0.8)])),
            Process((), Dist.from_pairs([(4, 0.5), (8, 0.5)]), Dist.from_pairs([(-1, 0.5), (7, 0.5)])),
        ),
        name="example-1",
    )


def example_2(arrival: int = 30, train_leaves: int = 6) -> CopeInstance:
    """Train vs. taxi where either plan's first actions may run while planning.

    Induced deadlines are ``arrival`` minus the unknown remainder:
    0 or 10 minutes for the train plan, 1 or 10 for the taxi plan.
    """
    actions = {
        "ride_train": BaseAction("ride_train", 22, latest_start=train_leaves, earliest_start=train_leaves),
        "phone": BaseAction("phone", 2),
        "take_taxi": BaseAction("take_taxi", 20),
    }
    train = Process(
        ("ride_train",),
        Dist.from_pairs([(8, 1.0)]),
        Dist.from_pairs([(arrival - 0, 0.8), (arrival - 10, 0.2)]),
    )
    taxi = Process(
        ("phone", "take_taxi"),
        Dist.from_pairs([(4, 0.5), (8, 0.5)]),
        Dist.from_pairs([(arrival - 1, 0.5), (arrival - 10, 0.5)]),
    )
    return CopeInstance(actions, (train, taxi), name=f"example-2-{arrival}")
