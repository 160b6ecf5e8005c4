"""The two airport examples, solved exactly and then simulated.

Run: python3 demos/01_worked_examples.py
"""
from cope.cope_algs import TreePolicy
from cope.mdp import Model, optimal_value
from cope.sim import evaluate, exact_value
from cope.worked import example_1, example_2


def show(title, inst):
    model = Model(inst)
    tree = optimal_value(model)
    print(f"== {title}: optimal success {tree.value:.4f}")
    print(tree.dump())
    print(f"   replayed over every outcome: {exact_value(model, TreePolicy(tree, model)):.4f}")
    print()


# Example 1: two processes, no base-level actions. Pure deliberation scheduling.
show("example 1", example_1())

# Example 2: committing to the taxi before planning is done beats waiting.
show("example 2, arrival deadline 30", example_2())

# With a 25 minute arrival deadline the train plan is hopeless, yet the taxi still works half the time.
show("example 2, arrival deadline 25", example_2(25))

# The same policy sampled instead of enumerated.
rep = evaluate([("ex2", example_2())], ["vi", "bgs", "de-bgs", "maxlet-bgs"], trials=5000, seed=1)
for alg, agg in rep.by_algorithm().items():
    print(f"{alg:12s} Monte-Carlo success {agg['success_rate']:.3f}")
