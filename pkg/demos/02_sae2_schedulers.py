"""Computation-only scheduling: greedy choosers against the exact DP.

With no base-level actions a problem is just a set of processes racing
their deadlines. DP is exact for known deadlines; the greedy choosers
also handle uncertain ones.

Run: python3 demos/02_sae2_schedulers.py
"""
import numpy as np

from cope.core import DiscreteDistribution as Dist, Sae2Instance
from cope.sae2 import brute_force_sae2, dp_schedule, greedy_schedule, make_chooser

rng = np.random.default_rng(0)


def random_profile(hi=9):
    times = sorted(set(int(x) for x in rng.integers(1, hi, 3)))
    w = rng.random(len(times))
    return Dist.from_pairs(zip(times, w / w.sum()))


inst = Sae2Instance(
    tuple(random_profile() for _ in range(3)),
    (Dist.point(4), Dist.point(7), Dist.point(9)),
)
sched, p = dp_schedule(inst)
print(f"dp schedule {sched.blocks} success {p:.4f}")
print(f"brute force success {brute_force_sae2(inst)[1]:.4f}")
for name in ("bgs", "dda", "rr", "mpp"):
    s, q = greedy_schedule(inst, make_chooser(name))
    print(f"{name:4s} success {q:.4f}  first blocks {s.blocks[:4]}")

# Uncertain deadlines: dp no longer applies, the greedy schemes still do.
fuzzy = Sae2Instance(inst.profiles, tuple(Dist.from_pairs([(d.min - 2, 0.5), (d.min + 2, 0.5)]) for d in inst.deadlines))
for name in ("bgs", "dda", "rr", "mpp"):
    print(f"uncertain deadlines, {name:4s} success {greedy_schedule(fuzzy, make_chooser(name))[1]:.4f}")
