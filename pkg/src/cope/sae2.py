"""Schedulers for the computation-only allocation problem.

Every chooser works on a :class:`~cope.core.Sae2Instance` anchored at "now":
profiles are conditioned on the time already spent, deadlines are relative,
and dead processes carry a deadline at -1. The same chooser objects drive
the online deciders (one call per tick) and the offline greedy schedules.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    DEAD,
    _residual_pair,
    DiscreteDistribution,
    GreedyParams,
    LPF_FLOOR,
    Sae2Instance,
    _log_fail,
    lpf,
    most_effective_time,
    success_prob_single,
)
from .mdp import FAILED, Model, State


class NoLiveProcess(RuntimeError):
    pass


class NotApplicable(ValueError):
    """Algorithm cannot be applied to this kind of instance."""


@dataclass(frozen=True)
class LinearSchedule:
    """Computation blocks ``(process, start, duration)`` ordered by start."""

    blocks: tuple[tuple[int, int, int], ...]

    @classmethod
    def from_ticks(cls, ticks) -> "LinearSchedule":
        """Group a per-tick process list (None = idle) into maximal blocks."""
        blocks = []
        for t, i in enumerate(ticks):
            if i is None:
                continue
            if blocks and blocks[-1][0] == i and blocks[-1][1] + blocks[-1][2] == t:
                blocks[-1][2] += 1
            else:
                blocks.append([i, t, 1])
        return cls(tuple(tuple(b) for b in blocks))

    def ticks(self) -> dict[int, int]:
        out = {}
        for i, start, dur in self.blocks:
            for t in range(start, start + dur):
                out[t] = i
        return out

    @property
    def contiguous(self) -> bool:
        seen = [i for i, _, _ in self.blocks]
        return len(seen) == len(set(seen))

    def allocation(self, n: int) -> list[tuple[int, int]]:
        if not self.contiguous:
            raise ValueError("schedule is not contiguous")
        out = [(0, 0)] * n
        for i, start, dur in self.blocks:
            out[i] = (dur, start)
        return out


def schedule_success(inst: Sae2Instance, schedule: LinearSchedule) -> float:
    """Exact success probability of a (possibly interleaved) linear schedule."""
    per: dict[int, list[int]] = {}
    for t, i in sorted(schedule.ticks().items()):
        per.setdefault(i, []).append(t)
    fail = 1.0
    for i, ticks in per.items():
        m, d = inst.profiles[i], inst.deadlines[i]
        ticks = np.asarray(ticks)
        k = np.arange(1, len(ticks) + 1)
        pmf = np.array([m.pmf(int(x)) for x in k])
        s = float(np.sum(pmf * (1.0 - d.cdf_array(ticks + 1))))
        fail *= 1.0 - min(max(s, 0.0), 1.0)
    return 1.0 - fail


# -- views -----------------------------------------------------------------------


def _relative_deadline(model: Model, state: State, i: int) -> DiscreteDistribution:
    """Deadline law re-expressed so that the k-th further unit is timely iff k < d'."""
    if model.windows[i][state.L] is None:
        base = state.T + model.rest[i][state.L]
        floor = state.W + 2

        def rel(x):
            y = x - base
            return y if y >= floor else -1

        return model.deadlines[i].map(rel)
    # start windows: tabulate completion times for successive units
    d = model.deadlines[i]
    comps = []
    for k in range(1, max(2, d.max - state.T + 1)):
        s = State(state.T + k - 1, state.used, max(0, state.W - k + 1), state.L)
        comps.append(model.earliest_completion(s, i))

    def rel_w(x):
        kx = int(np.searchsorted(comps, x, side="left"))
        return kx + 1 if kx else -1

    return d.map(rel_w)


def sae2_view(model: Model, state: State) -> Sae2Instance:
    """The allocation problem seen from an MDP state, heads executed after termination."""
    cache = model.__dict__.setdefault("_view_cache", {})
    profiles, deadlines = [], []
    for i, u in enumerate(state.used):
        key = (i, u, state.T, state.W, state.L)
        pair = cache.get(key)
        if pair is None:
            pair = _view_pair(model, state, i)
            cache[key] = pair
        profiles.append(pair[0])
        deadlines.append(pair[1])
    return Sae2Instance(tuple(profiles), tuple(deadlines))


def _view_pair(model: Model, state: State, i: int):
    m, u = model.profiles[i], state.used[i]
    if u == FAILED or model.is_tardy(state, i):
        return m, DEAD
    cond = m.condition_above(u) if u else m
    if cond is None:
        return m, DEAD
    return cond, _relative_deadline(model, state, i)


# -- greedy quantities ------------------------------------------------------------


def _t_max(m: DiscreteDistribution, d: DiscreteDistribution, t_b: int) -> int:
    return max(1, min(m.max, d.max - t_b))


def effective_time(inst: Sae2Instance, i: int, t_b: int = 0) -> int:
    return _effective(inst.profiles[i], inst.deadlines[i], t_b)[0]


def slope(inst: Sae2Instance, i: int, t_b: int = 0) -> float:
    """``LPF(e(t_b), t_b) / e(t_b)``; the best (most negative) log-failure per unit."""
    return _effective(inst.profiles[i], inst.deadlines[i], t_b)[1]


@lru_cache(maxsize=1 << 16)
def _effective(m: DiscreteDistribution, d: DiscreteDistribution, t_b: int):
    e = most_effective_time(m, d, t_b, _t_max(m, d, t_b))
    return e, lpf(m, d, e, t_b) / e


def expected_deadline(d: DiscreteDistribution, exclude_expired: bool = False) -> float:
    if exclude_expired:
        pairs = [(t, p) for t, p in d.pairs() if t > 0]
        if pairs:
            tot = math.fsum(p for _, p in pairs)
            return math.fsum(t * p for t, p in pairs) / tot
    return d.mean()


def _argmax(scores: dict[int, float]) -> int:
    best_i, best = None, -math.inf
    for i in sorted(scores):
        if scores[i] > best + 1e-12 * max(1.0, abs(best) if best != -math.inf else 1.0):
            best_i, best = i, scores[i]
    return best_i


def bgs_scores(inst: Sae2Instance, params: GreedyParams) -> dict[int, float]:
    out = {}
    for i in inst.live():
        ed = max(expected_deadline(inst.deadlines[i], params.exclude_expired), 1.0)
        out[i] = params.alpha / ed - slope(inst, i, 0)
    return out


def dda_scores(inst: Sae2Instance, params: GreedyParams) -> dict[int, float]:
    out = {}
    for i in inst.live():
        out[i] = params.gamma * slope(inst, i, params.t_u) - slope(inst, i, 0)
    return out


def _view_at(inst: Sae2Instance, clock: int, used=None) -> Sae2Instance:
    return inst.residual(clock, used) if (clock or used) else inst


def bgs(inst: Sae2Instance, params: GreedyParams = GreedyParams(), clock: int = 0, used=None) -> int:
    scores = bgs_scores(_view_at(inst, clock, used), params)
    if not scores:
        raise NoLiveProcess("no live process")
    return _argmax(scores)


def dda(inst: Sae2Instance, params: GreedyParams = GreedyParams(), clock: int = 0, used=None) -> int:
    scores = dda_scores(_view_at(inst, clock, used), params)
    if not scores:
        raise NoLiveProcess("no live process")
    return _argmax(scores)


def round_robin(inst: Sae2Instance, clock: int = 0, cursor: int = -1, used=None) -> int:
    live = _view_at(inst, clock, used).live()
    if not live:
        raise NoLiveProcess("no live process")
    after = [i for i in live if i > cursor]
    return after[0] if after else live[0]


def mpp_scores(inst: Sae2Instance) -> dict[int, float]:
    out = {}
    for i in inst.live():
        m, d = inst.profiles[i], inst.deadlines[i]
        out[i] = success_prob_single(m, d, max(inst.horizon, 1), 0)
    return out


def mpp(inst: Sae2Instance, clock: int = 0, used=None) -> int:
    scores = mpp_scores(_view_at(inst, clock, used))
    if not scores:
        raise NoLiveProcess("no live process")
    return _argmax(scores)


# -- stateful choosers ---------------------------------------------------------------


class Chooser:
    """Picks a live process in a view; keeps a choice for ``t_u`` consecutive units."""

    name = "chooser"
    t_u = 1

    def __init__(self):
        self.reset()

    def reset(self):
        self._held = None
        self._left = 0

    @property
    def stateless(self) -> bool:
        return self.t_u == 1

    def choose(self, view: Sae2Instance) -> int:
        if self._left > 0 and self._held is not None and view.is_live(self._held):
            self._left -= 1
            return self._held
        i = self._pick(view)
        self._held, self._left = i, self.t_u - 1
        return i

    def _pick(self, view: Sae2Instance) -> int:
        raise NotImplementedError


class BGS(Chooser):
    name = "bgs"
    _scores = staticmethod(bgs_scores)

    def __init__(self, params: GreedyParams = GreedyParams()):
        self.params = params
        self.t_u = params.t_u
        super().__init__()

    def _pick(self, view):
        return bgs(view, self.params)

    def choose_at(self, inst: Sae2Instance, clock: int, used, tables=None) -> int:
        """Same choice as ``choose(inst.residual(clock, used))`` with per-process caching."""
        if tables is None:
            tables = self.tables(inst)
        if self._left > 0 and self._held is not None:
            h = self._held
            if tables[h].score(used[h], clock) is not None:
                self._left -= 1
                return h
        best_i, thr = None, -math.inf
        for i, tab in enumerate(tables):
            sc = tab.values.get((used[i], clock), _MISS)
            if sc is _MISS:
                sc = tab.score(used[i], clock)
            if sc is not None and sc > thr:
                best_i, thr = i, sc + 1e-12 * max(1.0, abs(sc))
        if best_i is None:
            raise NoLiveProcess("no live process")
        self._held, self._left = best_i, self.t_u - 1
        return best_i

    def tables(self, inst: Sae2Instance):
        return [_score_table(self._scores, self.params, m, d) for m, d in zip(inst.profiles, inst.deadlines)]


_MISS = object()


class _ScoreTable:
    """Memoised greedy score of one process as a function of (units used, clock)."""

    def __init__(self, fn, params, m, d):
        self.fn, self.params, self.m, self.d = fn, params, m, d
        self.values: dict = {}

    def score(self, u, clock):
        key = (u, clock)
        try:
            return self.values[key]
        except KeyError:
            pass
        if self.d.max - clock <= 1:
            v = None
        else:
            pm, pd = _residual_pair(self.m, self.d, u, clock)
            v = self.fn(Sae2Instance((pm,), (pd,)), self.params).get(0)
        self.values[key] = v
        return v


@lru_cache(maxsize=1 << 14)
def _score_table(fn, params, m, d):
    return _ScoreTable(fn, params, m, d)


class DDA(BGS):
    name = "dda"
    _scores = staticmethod(dda_scores)

    def _pick(self, view):
        return dda(view, self.params)



class RoundRobin(Chooser):
    name = "rr"

    def reset(self):
        super().reset()
        self.cursor = -1

    @property
    def stateless(self):
        return False

    def _pick(self, view):
        self.cursor = round_robin(view, cursor=self.cursor)
        return self.cursor


class MPP(Chooser):
    """Sticks with the most promising process until it can no longer succeed."""

    name = "mpp"

    @property
    def stateless(self):
        return False

    def _pick(self, view):
        if self._held is not None and view.is_live(self._held):
            return self._held
        return mpp(view)

    def choose(self, view):
        self._held = self._pick(view)
        return self._held


CHOOSERS = {"bgs": BGS, "dda": DDA, "rr": RoundRobin, "mpp": MPP}


def make_chooser(name: str, params: GreedyParams = GreedyParams()) -> Chooser:
    if name in ("bgs", "dda"):
        return CHOOSERS[name](params)
    return CHOOSERS[name]()


def greedy_schedule(inst: Sae2Instance, chooser: Chooser, max_ticks: int | None = None):
    """Offline run of a chooser assuming no process terminates; returns (schedule, probability)."""
    chooser.reset()
    used = [0] * inst.n
    ticks = []
    limit = inst.horizon if max_ticks is None else max_ticks
    tables = chooser.tables(inst) if isinstance(chooser, BGS) else None
    for clock in range(max(limit, 0)):
        if tables is not None:
            try:
                i = chooser.choose_at(inst, clock, used, tables)
            except NoLiveProcess:
                break
        else:
            view = inst.residual(clock, used)
            if not view.live():
                break
            i = chooser.choose(view)
        ticks.append(i)
        used[i] += 1
    sched = LinearSchedule.from_ticks(ticks)
    return sched, schedule_success(inst, sched)


# -- dynamic programming for known deadlines ----------------------------------------------


def _lpf_table(m: DiscreteDistribution, d: DiscreteDistribution, horizon: int) -> np.ndarray:
    """``table[t, j] = LPF(j, t)`` for 0 <= t, j <= horizon."""
    size = horizon + 1
    pmf = np.zeros(size)
    for t, p in zip(m.times, m.masses):
        if t <= horizon:
            pmf[t] += p
    grid = np.arange(size)[:, None] + np.arange(size)[None, :]
    ok = 1.0 - d.cdf_array(grid)
    s = np.clip(np.cumsum(pmf[None, :] * ok, axis=1), 0.0, 1.0)
    return _log_fail(s)


def dp_schedule(inst: Sae2Instance, strict: bool = True, order_key=None):
    """Best contiguous schedule visiting processes in deadline order.

    With ``strict`` every deadline must be a point mass and the result is
    optimal. Otherwise processes are ordered by ``order_key(deadline)``
    (mean by default) and the schedule is optimal among contiguous
    schedules in that order.
    """
    if strict and not all(d.is_point for d in inst.deadlines):
        raise NotApplicable("dp requires known (point-mass) deadlines")
    key = order_key or (lambda d: d.mean())
    live = sorted(inst.live(), key=lambda i: (key(inst.deadlines[i]), i))
    if not live:
        return LinearSchedule(()), 0.0
    horizon = max(inst.deadlines[i].max for i in live)
    size = horizon + 1
    opt_next = np.zeros(size)
    choice = []
    for l in reversed(live):
        table = _lpf_table(inst.profiles[l], inst.deadlines[l], horizon)
        padded = np.concatenate((opt_next, np.full(size, -np.inf)))
        shifted = np.lib.stride_tricks.sliding_window_view(padded, size)[:size]
        vals = shifted - table
        best = vals.max(axis=1)
        tol = 1e-12 * np.maximum(1.0, np.abs(best))
        arg = np.argmax(vals >= (best - tol)[:, None], axis=1)
        choice.append((l, arg))
        opt_next = best
    choice.reverse()
    blocks, t = [], 0
    for l, arg in choice:
        j = int(arg[t])
        if j > 0:
            blocks.append((l, t, j))
        t += j
    total = float(opt_next[0])
    prob = 1.0 if total >= -LPF_FLOOR / 2 else -math.expm1(-total)
    return LinearSchedule(tuple(blocks)), prob


def brute_force_sae2(inst: Sae2Instance, orders: str = "all", budget: int = 5_000_000):
    """Exhaustive search over back-to-back contiguous allocations (test oracle).

    ``orders="deadline"`` restricts to deadline-sorted orders; ``"all"``
    tries every permutation.
    """
    live = [i for i in range(inst.n) if inst.is_live(i)]
    if not live:
        return LinearSchedule(()), 0.0
    horizon = max(inst.deadlines[i].max for i in live)
    if orders == "deadline":
        perms = [sorted(live, key=lambda i: (inst.deadlines[i].mean(), i))]
    else:
        perms = list(itertools.permutations(live))
    best, best_sched, count = -1.0, None, 0

    def lengths(k, left):
        if k == 0:
            yield ()
            return
        for j in range(left + 1):
            for rest in lengths(k - 1, left - j):
                yield (j,) + rest

    for perm in perms:
        for js in lengths(len(perm), horizon):
            count += 1
            if count > budget:
                raise RuntimeError(f"brute force budget exceeded ({budget} allocations)")
            fail, t, blocks = 1.0, 0, []
            for i, j in zip(perm, js):
                fail *= 1.0 - success_prob_single(inst.profiles[i], inst.deadlines[i], j, t)
                if j:
                    blocks.append((i, t, j))
                t += j
            p = 1.0 - fail
            if p > best + 1e-15:
                best, best_sched = p, LinearSchedule(tuple(blocks))
    return best_sched, best
