"""From sliding-tile searches to CoPE instances to a small benchmark.

A partial A* search leaves an open list; each open node becomes a
process whose head is the path to it. Completion statistics collected
from solved boards give the performance profiles and deadlines.

Run: python3 demos/04_puzzle_pipeline.py   (about a minute)
"""
import numpy as np

from cope.puzzle import build_cope_instance, collect_histograms
from cope.sim import evaluate

bank = collect_histograms(500, seed=1, k=3, scramble=14)
for h in sorted(bank.samples):
    e, r = bank.expansions[h], bank.length[h]
    print(f"h={h:2d} boards={bank.samples[h]:3d}  mean expansions {e.mean():6.1f}  mean length {r.mean():5.1f}")

items = []
for dur in (1, 3):
    for idx in range(3):
        inst = build_cope_instance(bank, 8, dur, 5, seed=100 + idx, k=3, scramble=14)
        items.append((f"d{dur}-{idx}", inst, dur))
print("heads of the first instance:", [p.head for p in items[0][1].processes])

algs = ["bgs", "mpp", "de-bgs", "de-mpp", "maxlet-bgs", "refined-maxlet-bgs"]
rep = evaluate(items, algs, trials=200, seed=1)
for alg in algs:
    by_dur = {d: np.mean([r.success_rate for r in rep.rows if r.algorithm == alg and r.dur_b == d]) for d in (1, 3)}
    print(f"{alg:20s} dur 1: {by_dur[1]:.3f}   dur 3: {by_dur[3]:.3f}")
