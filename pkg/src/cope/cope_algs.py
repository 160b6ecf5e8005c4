"""Algorithms that interleave base-level execution with computation.

Most schemes share one recipe: commit to start times for some head actions,
fold those commitments into per-process effective deadlines, solve the
resulting computation-only problem, and replay the combined timed policy.
Online schemes (Demand-Execution, MCTS) instead pick one action per state.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BaseAction, CopeInstance, GreedyParams, Sae2Instance, slack
from .mdp import SUCCESS, Compute, Execute, Model, State, is_terminal
from .sae2 import (
    LinearSchedule,
    NoLiveProcess,
    NotApplicable,
    dp_schedule,
    greedy_schedule,
    make_chooser,
    sae2_view,
    slope,
)

#: a head that finishes at f makes termination timely only if f + EXEC_MARGIN <= d.
#: One tick because the solution is found at the end of a tick, one because
#: timeliness requires the completion to be strictly before the deadline.
EXEC_MARGIN = 2


class HeadInfeasible(ValueError):
    pass


# -- initiation functions -----------------------------------------------------------


def latest_execution_times(head: Sequence[BaseAction], d: int) -> tuple[int, ...]:
    """Start times that run ``head`` back to back and finish exactly at ``d``.

    A ``latest_start`` cap pulls its action (and everything before it)
    earlier.
    """
    starts = []
    end = d
    for act in reversed(head):
        s = end - act.duration
        if act.latest_start is not None:
            s = min(s, act.latest_start)
        if act.earliest_start is not None and s < act.earliest_start:
            raise HeadInfeasible(f"head cannot meet deadline {d}")
        starts.append(s)
        end = s
    starts.reverse()
    if starts and starts[0] < 0:
        raise HeadInfeasible(f"head cannot meet deadline {d}")
    return tuple(starts)


def lazy_starts(instance: CopeInstance, i: int, d: int, first: int = 0, not_before: int = 0):
    """Latest start times of ``H_i[first:]`` that still allow a timely solution for deadline ``d``."""
    head = [instance.actions[b] for b in instance.processes[i].head[first:]]
    starts = latest_execution_times(head, d - EXEC_MARGIN)
    if starts and starts[0] < not_before:
        raise HeadInfeasible(f"head cannot meet deadline {d}")
    return starts


def fix_deadline(dist, strategy: str = "min") -> int | None:
    """Collapse a deadline law to one value: the smallest positive support value, or the mean."""
    pos = [t for t in dist.times if t > 0]
    if not pos:
        return None
    if strategy == "min":
        return pos[0]
    if strategy == "mean":
        return int(math.floor(dist.mean()))
    raise ValueError(f"unknown deadline-fixing strategy {strategy!r}")


def fixed_lazy_starts(instance: CopeInstance, i: int, strategy: str = "min", first: int = 0,
                      not_before: int = 0):
    """``(d, starts)`` for the fixed deadline of process i, or None when its head cannot make it.

    With the ``min`` strategy, support values the head cannot meet are passed
    over in favour of the smallest one it can.
    """
    dist = instance.processes[i].deadline
    if strategy == "min":
        values = [t for t in dist.times if t > 0]
    else:
        d = fix_deadline(dist, strategy)
        values = [] if d is None else [d]
    for d in values:
        try:
            return d, lazy_starts(instance, i, d, first, not_before)
        except HeadInfeasible:
            continue
    return None


# -- effective deadlines --------------------------------------------------------------


class PlanTimeline:
    """Fixed sequence of base-level executions ``[(action id, start), ...]``.

    Answers, per process and realized deadline, the last tick at which a
    termination would still be timely.
    """

    def __init__(self, instance: CopeInstance, plan: Sequence[tuple[str, int]], cache: dict | None = None):
        self.instance = instance
        self.plan = tuple((b, int(s)) for b, s in plan)
        self.cache = cache
        acts = instance.actions
        self.starts = [s for _, s in self.plan]
        self.ends = [s + acts[b].duration for b, s in self.plan]
        self._diverge = []
        self._prefix = []
        for p in instance.processes:
            k = 0
            while k < len(self.plan) and k < len(p.head) and p.head[k] == self.plan[k][0]:
                k += 1
            # executing any action beyond j's head, or a different one, invalidates j
            self._diverge.append(self.starts[k] if k < len(self.plan) else math.inf)
            # j's effective deadline depends on the plan only up to the divergence
            self._prefix.append(self.plan[: k + 1])

    def _useful(self, j: int, t: int, d: int) -> bool:
        acts = self.instance.actions
        L = 0
        while L < len(self.plan) and self.starts[L] <= t:
            L += 1
        end = self.ends[L - 1] if L else 0
        cur = max(t, end)
        nxt = max(t + 1, end)
        for b in self.instance.processes[j].head[L:]:
            a = acts[b]
            if a.earliest_start is not None:
                cur = max(cur, a.earliest_start)
                nxt = max(nxt, a.earliest_start)
            if a.latest_start is not None and nxt > a.latest_start:
                return False
            cur += a.duration
            nxt += a.duration
        return cur + 1 < d

    def effective_deadline(self, j: int, d: int) -> int:
        top = min(self._diverge[j], d) - 1
        if top < 0 or not self._useful(j, 0, d):
            return min(d, 0)
        lo, hi = 0, int(top)
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._useful(j, mid, d):
                lo = mid
            else:
                hi = mid - 1
        return lo + EXEC_MARGIN

    def reduce(self) -> Sae2Instance:
        profiles, deadlines = [], []
        for j, p in enumerate(self.instance.processes):
            profiles.append(p.profile)
            key = (j, self._prefix[j])
            dl = self.cache.get(key) if self.cache is not None else None
            if dl is None:
                dl = p.deadline.map(lambda x, j=j: self.effective_deadline(j, x))
                if self.cache is not None:
                    self.cache[key] = dl
            deadlines.append(dl)
        return Sae2Instance(tuple(profiles), tuple(deadlines))


def _plan_for(instance: CopeInstance, i: int, starts: Sequence[int]):
    head = instance.processes[i].head
    if len(starts) != len(head):
        raise ValueError("initiation function must give one start per head action")
    return list(zip(head, starts))


def effective_deadline(instance: CopeInstance, j: int, i: int, starts: Sequence[int], d_j: int) -> int:
    """Deadline of process j in the computation-only problem once ``H_i`` runs at ``starts``."""
    return PlanTimeline(instance, _plan_for(instance, i, starts)).effective_deadline(j, d_j)


def reduce_to_sae2(instance: CopeInstance, i: int, starts: Sequence[int]) -> Sae2Instance:
    return PlanTimeline(instance, _plan_for(instance, i, starts)).reduce()


def reduce_plan(instance: CopeInstance, plan) -> Sae2Instance:
    return PlanTimeline(instance, plan).reduce()


# -- policies ---------------------------------------------------------------------------


class Decider:
    """Maps MDP states to actions. ``stateless`` deciders may be memoised per state."""

    stateless = True
    predicted: float | None = None

    def reset(self):
        pass

    def decide(self, state: State):
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


def _fallback(model: Model, state: State):
    legal = model.legal_actions(state)
    if not legal:
        raise NoLiveProcess(f"no legal action in {state}")
    for a in legal:
        if isinstance(a, Compute):
            return a
    return legal[0]


@dataclass
class TimedPolicy(Decider):
    """Offline policy: executes at fixed times, computation by a tick table."""

    model: Model
    plan: tuple = ()
    schedule: LinearSchedule = LinearSchedule(())
    predicted: float | None = None
    _ticks: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.plan = tuple(self.plan)
        self._ticks = self.schedule.ticks()
        self._order = sorted(self._ticks)

    def decide(self, state: State):
        m = self.model
        if state.W == 0 and state.L < len(self.plan):
            b, s = self.plan[state.L]
            if s <= state.T and Execute(b) in m.legal_actions(state):
                return Execute(b)
        live = m.live(state)
        i = self._ticks.get(state.T)
        if i is not None and i in live:
            return Compute(i)
        # schedule slot idle or its process gone: pull the next scheduled live process forward
        for t in self._order:
            if t > state.T and self._ticks[t] in live:
                return Compute(self._ticks[t])
        if live:
            return Compute(live[0])
        return _fallback(m, state)

    def sequence(self) -> list[tuple[int, object]]:
        """The timed action list replayed under no termination."""
        out = []
        for b, s in self.plan:
            out.append((s, Execute(b)))
        for t, i in sorted(self._ticks.items()):
            out.append((t, Compute(i)))
        out.sort(key=lambda x: (x[0], 0 if isinstance(x[1], Execute) else 1))
        return out

    def describe(self) -> str:
        lines = [f"predicted {self.predicted:.12g}" if self.predicted is not None else "predicted n/a"]
        for t, a in self.sequence():
            lines.append(f"t={t} {a}")
        return "\n".join(lines)


class TreePolicy(Decider):
    """Wraps an exact policy tree; unseen states fall back to the first legal compute."""

    def __init__(self, tree, model: Model):
        self.tree, self.model = tree, model
        self.predicted = tree.value

    def decide(self, state):
        a = self.tree.actions.get(state)
        return a if a is not None else _fallback(self.model, state)

    def describe(self):
        return self.tree.dump()


# -- computation-only solvers ----------------------------------------------------------------


SAE2_ALGS = ("dp", "bgs", "dda", "rr", "mpp")


def solve_sae2(name: str, inst: Sae2Instance, params: GreedyParams = GreedyParams(), strict: bool = False):
    """Run a computation-only scheduler offline; returns (schedule, probability)."""
    if name == "dp":
        return dp_schedule(inst, strict=strict)
    if name in ("bgs", "dda", "rr", "mpp"):
        return greedy_schedule(inst, make_chooser(name, params))
    raise ValueError(f"unknown computation-only algorithm {name!r}")


def _evaluate_plan(model: Model, plan, alg: str, params: GreedyParams, cache: dict | None = None):
    cache = cache if cache is not None else model.__dict__.setdefault("_plan_cache", {})
    reduced = PlanTimeline(model.instance, plan, cache.setdefault("deadlines", {})).reduce()
    key = (alg, params, reduced.deadlines)
    hit = cache.get(key)
    if hit is None:
        sched, p = solve_sae2(alg, reduced, params)
        hit = cache[key] = (p, sched)
    return hit


def _best(candidates, model: Model, alg: str, params: GreedyParams):
    best = None
    for plan in candidates:
        p, sched = _evaluate_plan(model, plan, alg, params)
        if best is None or p > best[0] + 1e-12:
            best = (p, plan, sched)
    if best is None:
        return TimedPolicy(model, (), LinearSchedule(()), 0.0)
    p, plan, sched = best
    return TimedPolicy(model, tuple(plan), sched, p)


def equal_slack_exact(instance: CopeInstance):
    """Exact solver when all deadlines are known and every head has the same slack."""
    if not instance.known_deadlines:
        raise NotApplicable("equal-slack solver needs known (point-mass) deadlines")
    slacks = {slack(instance, i) for i in range(instance.n)}
    if len(slacks) != 1:
        raise NotApplicable(f"processes have unequal slack {sorted(slacks)}")
    model = Model(instance)
    candidates = [[]]
    for i in range(instance.n):
        try:
            starts = lazy_starts(instance, i, instance.processes[i].deadline.min)
        except HeadInfeasible:
            continue
        if starts:
            candidates.append(_plan_for(instance, i, starts))
    policy = _best(candidates, model, "dp", GreedyParams())
    return policy, policy.predicted


def max_let(instance: CopeInstance, alg: str = "dp", params: GreedyParams = GreedyParams(), strategy: str = "min"):
    """Per process: run its head lazily for a fixed deadline, solve the rest, keep the best."""
    model = Model(instance)
    candidates = []
    for i in range(instance.n):
        fixed = fixed_lazy_starts(instance, i, strategy)
        if fixed is not None:
            candidates.append(_plan_for(instance, i, fixed[1]))
    return _best(candidates, model, alg, params)


def _start_tuples(instance: CopeInstance, i: int, lazy: Sequence[int], K: int):
    """All start tuples for the first K head actions that keep the lazy tail feasible."""
    acts = [instance.actions[b] for b in instance.processes[i].head]
    K = min(K, len(acts))

    def rec(m, prev_end):
        if m == K:
            yield ()
            return
        a = acts[m]
        lo = prev_end if a.earliest_start is None else max(prev_end, a.earliest_start)
        hi = lazy[m] if a.latest_start is None else min(lazy[m], a.latest_start)
        for s in range(lo, hi + 1):
            for rest in rec(m + 1, s + a.duration):
                yield (s,) + rest

    for head in rec(0, 0):
        yield head + tuple(lazy[K:])


def k_bounded(instance: CopeInstance, alg: str = "bgs", K: int = 2, params: GreedyParams = GreedyParams(),
              strategy: str = "min"):
    """Like Max-LET but tries every placement of the first K actions of each head."""
    if K < 1:
        raise ValueError("K must be >= 1")
    model = Model(instance)
    candidates = []
    for i in range(instance.n):
        fixed = fixed_lazy_starts(instance, i, strategy)
        if fixed is None:
            continue
        lazy = fixed[1]
        if not lazy:
            candidates.append([])
            continue
        for starts in _start_tuples(instance, i, lazy, K):
            candidates.append(_plan_for(instance, i, starts))
    return _best(candidates, model, alg, params)


def _compatible(instance: CopeInstance, j: int, plan) -> bool:
    head = instance.processes[j].head
    return len(head) >= len(plan) and all(head[m] == b for m, (b, _) in enumerate(plan))


def refined_max_let(instance: CopeInstance, alg: str = "bgs", params: GreedyParams = GreedyParams(),
                    strategy: str = "min"):
    """Grow a shared execution prefix one action at a time, keeping the best extension."""
    model = Model(instance)
    acts = instance.actions
    alive = [i for i in range(instance.n) if fixed_lazy_starts(instance, i, strategy) is not None]
    plan: list[tuple[str, int]] = []
    while len(alive) > 1:
        L = len(plan)
        prev_end = plan[-1][1] + acts[plan[-1][0]].duration if plan else 0
        options = {}
        for i in alive:
            head = instance.processes[i].head
            if len(head) <= L:
                continue
            fixed = fixed_lazy_starts(instance, i, strategy, first=L, not_before=prev_end)
            if fixed is None:
                continue
            lazy = fixed[1]
            a = acts[head[L]]
            early = prev_end if a.earliest_start is None else max(prev_end, a.earliest_start)
            for t in sorted({early, lazy[0]}):
                if t <= lazy[0]:
                    options.setdefault((head[L], t), i)
        if not options:
            break
        best = None
        for (b, t), i in options.items():
            p, _ = _evaluate_plan(model, plan + [(b, t)], alg, params)
            if best is None or p > best[0] + 1e-12:
                best = (p, b, t)
        _, b, t = best
        plan.append((b, t))
        alive = [j for j in alive if _compatible(instance, j, plan)]
    # finish: complete the survivors' heads lazily and keep the best
    candidates = [list(plan)]
    L = len(plan)
    prev_end = plan[-1][1] + acts[plan[-1][0]].duration if plan else 0
    for i in alive:
        fixed = fixed_lazy_starts(instance, i, strategy, first=L, not_before=prev_end)
        if fixed is None:
            continue
        tail = fixed[1]
        if tail:
            candidates.append(plan + list(zip(instance.processes[i].head[L:], tail)))
    return _best(candidates, model, alg, params)


# -- online schemes ---------------------------------------------------------------------------


class DemandExecution(Decider):
    """Compute whatever the inner chooser picks; execute its head only when it must start now."""

    def __init__(self, model: Model, alg: str = "bgs", params: GreedyParams = GreedyParams(),
                 strategy: str = "min"):
        self.model, self.alg, self.strategy = model, alg, strategy
        self.chooser = make_chooser(alg, params)
        self.stateless = self.chooser.stateless

    def reset(self):
        self.chooser.reset()

    def _next_start(self, state: State, i: int):
        """LET of the next head action of i for the smallest deadline it can still meet."""
        inst = self.model.instance
        if state.L >= len(inst.processes[i].head):
            return None
        fixed = fixed_lazy_starts(inst, i, self.strategy, first=state.L, not_before=state.T + state.W)
        return None if fixed is None else fixed[1][0]

    def decide(self, state: State):
        m = self.model
        view = sae2_view(m, state)
        if not view.live():
            return _fallback(m, state)
        i = self.chooser.choose(view)
        if state.W == 0:
            t = self._next_start(state, i)
            if t is not None and t <= state.T:
                b = m.instance.processes[i].head[state.L]
                if Execute(b) in m.legal_actions(state):
                    return Execute(b)
        return Compute(i)


class MCTS(Decider):
    """UCT over the MDP with UCB1 selection and a slope-weighted random rollout."""

    def __init__(self, model: Model, budget: int = 100, c: float = math.sqrt(2), seed: int = 0):
        self.model, self.budget, self.c, self.seed = model, budget, c, seed

    def _rng(self, state):
        key = zlib.crc32(repr(state).encode())
        return np.random.default_rng([self.seed, key])

    def _rollout_scores(self, state):
        view = sae2_view(self.model, state)
        return {i: -slope(view, i, 0) for i in view.live()}

    def _rollout(self, state, rng) -> float:
        m = self.model
        scores = self._rollout_scores(state) if not is_terminal(state) else {}
        while not is_terminal(state):
            legal = m.legal_actions(state)
            execs = [a for a in legal if isinstance(a, Execute)]
            comps = [a for a in legal if isinstance(a, Compute)]
            k = rng.integers(len(legal))
            if k < len(execs):
                a = execs[k]
            else:
                # softmax over the legal targets; unscored processes get the lowest score
                floor = min(scores.values(), default=0.0)
                x = np.array([scores.get(a.i, floor) for a in comps])
                w = np.exp(x - x.max())
                a = comps[int(rng.choice(len(comps), p=w / w.sum()))]
            state = m.apply(state, a, rng)
        return 1.0 if state is SUCCESS or state == SUCCESS else 0.0

    def decide(self, root: State):
        m = self.model
        legal_root = m.legal_actions(root)
        if len(legal_root) == 1:
            return legal_root[0]
        rng = self._rng(root)
        visits: dict = {}
        stats: dict = {}
        for _ in range(self.budget):
            s, path = root, []
            while not is_terminal(s) and s in visits:
                acts = m.legal_actions(s)
                n_s = visits[s]
                best, arg = -math.inf, None
                for a in acts:
                    n, w = stats.get((s, a), (0, 0.0))
                    u = math.inf if n == 0 else w / n + self.c * math.sqrt(math.log(n_s) / n)
                    if u > best:
                        best, arg = u, a
                path.append((s, arg))
                s = m.apply(s, arg, rng)
            if not is_terminal(s):
                visits[s] = 0
                r = self._rollout(s, rng)
                path.append((s, None))
            else:
                r = 1.0 if s == SUCCESS else 0.0
            for ps, a in path:
                visits[ps] = visits.get(ps, 0) + 1
                if a is not None:
                    n, w = stats.get((ps, a), (0, 0.0))
                    stats[(ps, a)] = (n + 1, w + r)
        best, arg = None, None
        for a in legal_root:
            n, w = stats.get((root, a), (0, 0.0))
            key = (n, w / n if n else 0.0)
            if best is None or key > best:
                best, arg = key, a
        return arg


class ChooserDecider(Decider):
    """Plain computation-only scheduler run online; never executes unless forced."""

    def __init__(self, model: Model, alg: str, params: GreedyParams = GreedyParams()):
        self.model = model
        self.chooser = make_chooser(alg, params)
        self.stateless = self.chooser.stateless

    def reset(self):
        self.chooser.reset()

    def decide(self, state):
        view = sae2_view(self.model, state)
        if not view.live():
            return _fallback(self.model, state)
        return Compute(self.chooser.choose(view))


# -- registry ------------------------------------------------------------------------------------


ALGORITHMS = (
    "bgs", "dda", "dp", "rr", "mpp",
    "de-bgs", "de-dda", "de-rr", "de-mpp",
    "maxlet-dp", "maxlet-bgs", "maxlet-dda",
    "kbound2-bgs", "refined-maxlet-bgs",
    "mcts10", "mcts100", "mcts500",
    "vi",
)


@dataclass(frozen=True)
class AlgConfig:
    params: GreedyParams = GreedyParams()
    strategy: str = "min"
    mcts_c: float = math.sqrt(2)
    seed: int = 0
    vi_budget: int = 2_000_000


def check_algorithm(name: str):
    if name not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")


def make_decider(name: str, instance: CopeInstance, config: AlgConfig = AlgConfig(), model: Model | None = None):
    """Build the decider for a named algorithm; offline schemes are solved here."""
    from .mdp import BudgetExceeded, optimal_value

    check_algorithm(name)
    model = model or Model(instance)
    p = config.params
    if name in ("bgs", "dda", "rr", "mpp"):
        return ChooserDecider(model, name, p)
    if name == "dp":
        if not instance.known_deadlines:
            raise NotApplicable("dp requires known (point-mass) deadlines")
        sched, prob = dp_schedule(PlanTimeline(instance, ()).reduce(), strict=True)
        return TimedPolicy(model, (), sched, prob)
    if name.startswith("de-"):
        return DemandExecution(model, name[3:], p, config.strategy)
    if name.startswith("maxlet-"):
        return max_let(instance, name[7:], p, config.strategy)
    if name.startswith("kbound"):
        k, alg = name[len("kbound"):].split("-")
        return k_bounded(instance, alg, int(k), p, config.strategy)
    if name.startswith("refined-maxlet-"):
        return refined_max_let(instance, name[len("refined-maxlet-"):], p, config.strategy)
    if name.startswith("mcts"):
        return MCTS(model, int(name[4:]), config.mcts_c, config.seed)
    try:
        tree = optimal_value(model, budget=config.vi_budget)
    except BudgetExceeded as e:
        raise NotApplicable(f"vi: {e}") from None
    return TreePolicy(tree, model)
