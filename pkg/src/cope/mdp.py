"""The concurrent planning/execution MDP and an exact expectimax solver.

A decision state is ``State(T, used, W, L)``: wall clock, compute time used
per process (``FAILED`` marks a failed or invalidated process), time left on
the running base-level action, and the number of base-level actions started.
``SUCCESS`` and ``FAIL`` are the terminal states.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import CopeInstance, TOL

FAILED = -1
SUCCESS = "SUCCESS"
FAIL = "FAIL"


class State(NamedTuple):
    T: int
    used: tuple[int, ...]
    W: int
    L: int


class Compute(NamedTuple):
    i: int

    def __str__(self):
        return f"compute({self.i})"


class Execute(NamedTuple):
    b: str

    def __str__(self):
        return f"execute({self.b})"


def is_terminal(state) -> bool:
    return state is SUCCESS or state is FAIL or state == SUCCESS or state == FAIL


class IllegalAction(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    def __init__(self, explored: int):
        super().__init__(f"state budget exceeded after exploring {explored} states")
        self.explored = explored


class Model:
    """Precomputed per-process tables for fast transitions."""

    def __init__(self, instance: CopeInstance):
        self.instance = instance
        self.n = instance.n
        self.heads = [p.head for p in instance.processes]
        acts = instance.actions
        # rest[i][L]: total duration of H_i[L:]
        self.rest = []
        # windows[i][L]: (duration, earliest, latest) for H_i[L:] when any start window applies
        self.windows = []
        for h in self.heads:
            timing = [(acts[b].duration, acts[b].earliest_start, acts[b].latest_start) for b in h]
            self.rest.append([sum(d for d, _, _ in timing[k:]) for k in range(len(h) + 1)])
            self.windows.append(
                [timing[k:] if any(e is not None or l is not None for _, e, l in timing[k:]) else None
                 for k in range(len(h) + 1)]
            )
        self.profiles = [p.profile for p in instance.processes]
        self.deadlines = [p.deadline for p in instance.processes]
        self._dl_max = [d.max for d in self.deadlines]

    def initial(self):
        s = State(0, (0,) * self.n, 0, 0)
        if all(self.is_dead(s, j) for j in range(self.n)):
            return FAIL
        return s

    def executed(self, state: State) -> tuple[str, ...]:
        for i, u in enumerate(state.used):
            if u != FAILED:
                return self.heads[i][: state.L]
        return ()

    def earliest_completion(self, state: State, i: int) -> int:
        """Earliest time a solution from process i could finish, counting the unit computed now."""
        if state.used[i] == FAILED:
            raise ValueError(f"process {i} has failed")
        win = self.windows[i][state.L]
        if win is None:
            return state.T + state.W + self.rest[i][state.L] + 1
        cur = state.T + state.W
        for dur, es, _ in win:
            cur = (cur if es is None else max(cur, es)) + dur
        return cur + 1

    def _windows_feasible(self, state: State, i: int, computing: bool = True) -> bool:
        win = self.windows[i][state.L]
        if win is None:
            return True
        # computing now pushes the next start past this tick
        cur = state.T + (max(state.W, 1) if computing else state.W)
        for dur, es, ls in win:
            if es is not None:
                cur = max(cur, es)
            if ls is not None and cur > ls:
                return False
            cur += dur
        return True

    def is_tardy(self, state: State, i: int) -> bool:
        t = self.earliest_completion(state, i)
        if t >= self._dl_max[i] or self.deadlines[i].cdf(t) >= 1.0 - TOL:
            return True
        return not self._windows_feasible(state, i)

    def is_dead(self, state: State, i: int) -> bool:
        """No timely completion is possible even if a base-level action starts right now."""
        if state.used[i] == FAILED:
            return True
        t = self.earliest_completion(state, i)
        if t >= self._dl_max[i] or self.deadlines[i].cdf(t) >= 1.0 - TOL:
            return True
        return not self._windows_feasible(state, i, computing=False)

    def live(self, state: State) -> list[int]:
        return [i for i, u in enumerate(state.used) if u != FAILED and not self.is_tardy(state, i)]

    def legal_actions(self, state: State) -> list:
        if is_terminal(state):
            return []
        acts: list = [Compute(i) for i in self.live(state)]
        if state.W == 0:
            seen = []
            for i, u in enumerate(state.used):
                if u == FAILED or len(self.heads[i]) <= state.L:
                    continue
                b = self.heads[i][state.L]
                act = self.instance.actions[b]
                if b in seen:
                    continue
                if act.latest_start is not None and state.T > act.latest_start:
                    continue
                if act.earliest_start is None or state.T >= act.earliest_start:
                    seen.append(b)
            acts.extend(Execute(b) for b in seen)
        return acts

    def apply_execute(self, state: State, b: str):
        if state.W != 0 or Execute(b) not in self.legal_actions(state):
            raise IllegalAction(f"{Execute(b)} is not legal in {state}")
        L = state.L
        used = tuple(
            u if u != FAILED and len(self.heads[i]) > L and self.heads[i][L] == b else FAILED
            for i, u in enumerate(state.used)
        )
        nxt = State(state.T, used, self.instance.actions[b].duration, L + 1)
        if all(self.is_dead(nxt, j) for j in range(self.n)):
            return FAIL
        return nxt

    def termination_prob(self, i: int, u: int) -> float:
        m = self.profiles[i]
        left = 1.0 - m.cdf(u)
        if left <= TOL:
            return 1.0
        return min(1.0, m.pmf(u + 1) / left)

    def _advance(self, state: State, i: int, tardy: list[bool], terminated: bool):
        used = list(state.used)
        for j, t in enumerate(tardy):
            if t:
                used[j] = FAILED
        if terminated:
            used[i] = FAILED
        else:
            used[i] = state.used[i] + 1
        nxt = State(state.T + 1, tuple(used), max(0, state.W - 1), state.L)
        if all(self.is_dead(nxt, j) for j in range(self.n)):
            return FAIL
        return nxt

    def _tardy_flags(self, state: State) -> list[bool]:
        return [u != FAILED and self.is_tardy(state, j) for j, u in enumerate(state.used)]

    def apply_compute(self, state: State, i: int, rng: np.random.Generator | None = None):
        """All (probability, next state) branches, or one sampled state when ``rng`` is given."""
        if state.used[i] == FAILED or self.is_tardy(state, i):
            raise IllegalAction(f"{Compute(i)} is not legal in {state}")
        tardy = self._tardy_flags(state)
        p_term = self.termination_prob(i, state.used[i])
        p_timely = 1.0 - self.deadlines[i].cdf(self.earliest_completion(state, i))
        branches = []
        if p_term < 1.0:
            branches.append((1.0 - p_term, self._advance(state, i, tardy, False)))
        if p_term > 0.0:
            if p_timely > 0.0:
                branches.append((p_term * p_timely, SUCCESS))
            if p_timely < 1.0:
                branches.append((p_term * (1.0 - p_timely), self._advance(state, i, tardy, True)))
        if rng is None:
            assert abs(sum(p for p, _ in branches) - 1.0) <= TOL
            return branches
        x = rng.random()
        acc = 0.0
        for p, s in branches:
            acc += p
            if x < acc:
                return s
        return branches[-1][1]

    def apply(self, state: State, action, rng: np.random.Generator | None = None):
        if isinstance(action, Execute):
            s = self.apply_execute(state, action.b)
            return s if rng is not None else [(1.0, s)]
        return self.apply_compute(state, action.i, rng)

    def step_with_outcome(self, state: State, action, term_at: tuple[int, ...], deadline: tuple[int, ...]):
        """Deterministic transition with termination times and deadlines fixed in advance."""
        if isinstance(action, Execute):
            return self.apply_execute(state, action.b)
        i = action.i
        if state.used[i] == FAILED or self.is_tardy(state, i):
            raise IllegalAction(f"{action} is not legal in {state}")
        tardy = self._tardy_flags(state)
        if state.used[i] + 1 == term_at[i]:
            if deadline[i] > self.earliest_completion(state, i):
                return SUCCESS
            return self._advance(state, i, tardy, True)
        return self._advance(state, i, tardy, False)


# module-level wrappers over a model built on demand


def _model(instance) -> Model:
    return instance if isinstance(instance, Model) else Model(instance)


def earliest_completion(instance, state: State, i: int) -> int:
    return _model(instance).earliest_completion(state, i)


def is_tardy(instance, state: State, i: int) -> bool:
    return _model(instance).is_tardy(state, i)


def legal_actions(instance, state: State) -> list:
    return _model(instance).legal_actions(state)


def apply_execute(instance, state: State, b: str):
    return _model(instance).apply_execute(state, b)


def apply_compute(instance, state: State, i: int, rng=None):
    return _model(instance).apply_compute(state, i, rng)


@dataclass
class PolicyTree:
    value: float
    root: State
    actions: dict
    values: dict
    model: Model

    def __call__(self, state):
        return self.actions[state]

    def reachable(self):
        """Decision states reachable from the root under the policy, in BFS order."""
        if is_terminal(self.root):
            return []
        seen, order, queue = {self.root}, [], [self.root]
        while queue:
            s = queue.pop(0)
            order.append(s)
            for p, nxt in self.model.apply(s, self.actions[s]):
                if p > 0 and not is_terminal(nxt) and nxt not in seen and nxt in self.actions:
                    seen.add(nxt)
                    queue.append(nxt)
        return order

    def chance_children(self, state):
        return [(p, s) for p, s in self.model.apply(state, self.actions[state]) if p > 0]

    def dump(self) -> str:
        lines = [f"value {self.value:.12g}"]
        for s in self.reachable():
            used = ",".join("F" if u == FAILED else str(u) for u in s.used)
            lines.append(f"T={s.T} used=[{used}] W={s.W} L={s.L} -> {self.actions[s]}  (v={self.values[s]:.6g})")
        return "\n".join(lines)


def optimal_value(instance: CopeInstance, budget: int = 50_000_000) -> PolicyTree:
    """Exact maximal success probability by memoised expectimax over the acyclic state space."""
    model = _model(instance)
    values: dict = {}
    best: dict = {}

    def solve(s) -> float:
        if s is SUCCESS:
            return 1.0
        if s is FAIL:
            return 0.0
        v = values.get(s)
        if v is not None:
            return v
        if len(values) >= budget:
            raise BudgetExceeded(len(values))
        top, arg = -1.0, None
        for a in model.legal_actions(s):
            q = math.fsum(p * solve(nxt) for p, nxt in model.apply(s, a))
            if q > top + 1e-12:
                top, arg = q, a
        if arg is None:
            top = 0.0
        values[s] = top
        best[s] = arg
        return top

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 100_000))
    try:
        root = model.initial()
        v = solve(root)
    finally:
        sys.setrecursionlimit(limit)
    actions = {s: a for s, a in best.items() if a is not None}
    return PolicyTree(v, root, actions, values, model)
