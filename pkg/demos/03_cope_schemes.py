"""Every scheme on a handful of small random instances, against the optimum.

Run: python3 demos/03_cope_schemes.py
"""
import numpy as np

from cope.core import BaseAction, CopeInstance, DiscreteDistribution as Dist, Process
from cope.cope_algs import ALGORITHMS, make_decider
from cope.mdp import optimal_value
from cope.sae2 import NotApplicable
from cope.sim import evaluate

rng = np.random.default_rng(3)


def small_instance():
    acts, procs = {}, []
    for i in range(3):
        head = []
        for m in range(int(rng.integers(1, 3))):
            b = f"a{i}{m}"
            acts[b] = BaseAction(b, int(rng.integers(1, 4)))
            head.append(b)
        prof = Dist.from_pairs([(int(rng.integers(1, 5)), 0.5), (int(rng.integers(5, 9)), 0.5)])
        dl = Dist.from_pairs([(int(rng.integers(4, 9)), 0.6), (int(rng.integers(9, 13)), 0.4)])
        procs.append(Process(tuple(head), prof, dl))
    return CopeInstance(acts, tuple(procs))


items = [(f"inst{k}", small_instance()) for k in range(4)]
algs = [a for a in ALGORITHMS if a not in ("dp", "maxlet-dp")]
rep = evaluate(items, algs, trials=500, seed=2)
for iid, inst in items:
    print(f"{iid}: optimal {optimal_value(inst).value:.3f}")
    for r in rep.rows:
        if r.instance_id == iid:
            print(f"   {r.algorithm:20s} {r.success_rate:.3f}   {r.mean_decision_ms:7.2f} ms/decision")

# The offline schemes also report what they expect to achieve.
inst = items[0][1]
for name in ("maxlet-bgs", "kbound2-bgs", "refined-maxlet-bgs"):
    dec = make_decider(name, inst)
    print(f"{name:20s} predicted {dec.predicted:.3f}")
try:
    make_decider("dp", inst)
except NotApplicable as e:
    print("dp:", e)
