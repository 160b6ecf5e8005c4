"""Domain types and the closed-form success quantities shared by every solver.

Time is discrete. A process that receives its ``t``-th unit of computation
during the tick starting at wall-clock ``T`` terminates at ``T + 1``; the
result is timely iff the realized deadline is strictly greater than the
time at which execution of the remaining plan could start.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

#: stands in for log(0) so DP sums stay finite
LPF_FLOOR = -1e18
TOL = 1e-9


class DistributionError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteDistribution:
    """Sparse integer-time PMF.

    ``times`` is strictly increasing and ``masses`` are positive and sum to
    one. Negative times are allowed and mean "already expired".
    """

    times: tuple[int, ...]
    masses: tuple[float, ...]
    _cum: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.times) == 0 or len(self.times) != len(self.masses):
            raise DistributionError("distribution needs matching, non-empty times and masses")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise DistributionError(f"support times must be strictly increasing: {self.times}")
        if any(m <= 0 for m in self.masses):
            raise DistributionError("masses must be strictly positive")
        total = math.fsum(self.masses)
        if abs(total - 1.0) > TOL:
            raise DistributionError(f"masses sum to {total}, not 1")
        cum = list(np.cumsum(self.masses))
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", tuple(float(c) for c in cum))

    def __hash__(self):
        # distributions key many caches; hashing the tuples every time is costly
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.times, self.masses))
            object.__setattr__(self, "_hash", h)
        return h

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]], normalize: bool = False) -> "DiscreteDistribution":
        """Build from (time, mass) pairs; duplicate times are merged, zero masses dropped."""
        acc: dict[int, float] = {}
        for t, p in pairs:
            if p < 0:
                raise DistributionError(f"negative mass {p} at time {t}")
            acc[int(t)] = acc.get(int(t), 0.0) + float(p)
        items = sorted((t, p) for t, p in acc.items() if p > 0)
        if not items:
            raise DistributionError("no positive mass")
        times = tuple(t for t, _ in items)
        masses = [p for _, p in items]
        if normalize:
            total = math.fsum(masses)
            masses = [p / total for p in masses]
        return cls(times, tuple(masses))

    @classmethod
    def point(cls, t: int) -> "DiscreteDistribution":
        return cls((int(t),), (1.0,))

    @classmethod
    def from_counts(cls, counts: Mapping[int, int]) -> "DiscreteDistribution":
        total = sum(counts.values())
        return cls.from_pairs(((t, c / total) for t, c in counts.items()))

    def pairs(self) -> list[tuple[int, float]]:
        return list(zip(self.times, self.masses))

    @property
    def min(self) -> int:
        return self.times[0]

    @property
    def max(self) -> int:
        return self.times[-1]

    @property
    def is_point(self) -> bool:
        return len(self.times) == 1

    def cdf(self, t: int) -> float:
        k = bisect_right(self.times, t)
        return 0.0 if k == 0 else self._cum[k - 1]

    def pmf(self, t: int) -> float:
        k = bisect_right(self.times, t)
        if k and self.times[k - 1] == t:
            return self.masses[k - 1]
        return 0.0

    def cdf_array(self, ts: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.times), ts, side="right")
        cum = np.concatenate(([0.0], self._cum))
        return cum[idx]

    def mean(self) -> float:
        return float(math.fsum(t * p for t, p in zip(self.times, self.masses)))

    def shift(self, dt: int) -> "DiscreteDistribution":
        # masses are unchanged, so skip re-validation
        out = object.__new__(DiscreteDistribution)
        object.__setattr__(out, "times", tuple(t + dt for t in self.times))
        object.__setattr__(out, "masses", self.masses)
        object.__setattr__(out, "_cum", self._cum)
        return out

    def map(self, fn) -> "DiscreteDistribution":
        """Pushforward through an integer-valued function."""
        return DiscreteDistribution.from_pairs((fn(t), p) for t, p in zip(self.times, self.masses))

    def condition_above(self, u: int) -> "DiscreteDistribution | None":
        """Law of ``X - u`` given ``X > u``; None when no mass remains."""
        k = bisect_right(self.times, u)
        if k >= len(self.times):
            return None
        rest = self.masses[k:]
        total = math.fsum(rest)
        return DiscreteDistribution.from_pairs(
            ((t - u, p / total) for t, p in zip(self.times[k:], rest)), normalize=True
        )

    def sample(self, rng: np.random.Generator) -> int:
        x = rng.random()
        k = bisect_right(self._cum, x)
        return self.times[min(k, len(self.times) - 1)]


def cdf(dist: DiscreteDistribution, t: int) -> float:
    return dist.cdf(t)


@dataclass(frozen=True)
class BaseAction:
    id: str
    duration: int
    latest_start: int | None = None
    # a scheduled departure: the action cannot begin before this time
    earliest_start: int | None = None

    def __post_init__(self):
        if int(self.duration) <= 0:
            raise ValueError(f"action {self.id!r} must have positive duration")
        if (
            self.latest_start is not None
            and self.earliest_start is not None
            and self.earliest_start > self.latest_start
        ):
            raise ValueError(f"action {self.id!r} has an empty start window")


@dataclass(frozen=True)
class Process:
    head: tuple[str, ...]
    profile: DiscreteDistribution
    deadline: DiscreteDistribution

    def __post_init__(self):
        object.__setattr__(self, "head", tuple(self.head))
        if self.profile.min < 1:
            raise ValueError("performance profile support must start at time >= 1")


@dataclass(frozen=True)
class CopeInstance:
    actions: Mapping[str, BaseAction]
    processes: tuple[Process, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "processes", tuple(self.processes))
        object.__setattr__(self, "actions", dict(self.actions))
        if not self.processes:
            raise ValueError("an instance needs at least one process")
        for i, p in enumerate(self.processes):
            for b in p.head:
                if b not in self.actions:
                    raise ValueError(f"process {i} head uses unknown action {b!r}")

    @property
    def n(self) -> int:
        return len(self.processes)

    def head_duration(self, i: int, start: int = 0) -> int:
        return sum(self.actions[b].duration for b in self.processes[i].head[start:])

    @property
    def horizon(self) -> int:
        return max(
            max(p.deadline.max for p in self.processes),
            max(self.head_duration(i) for i in range(self.n)),
        )

    @property
    def known_deadlines(self) -> bool:
        return all(p.deadline.is_point for p in self.processes)

    def sae2(self) -> "Sae2Instance":
        """Computation-only view that drops the heads."""
        return Sae2Instance(
            tuple(p.profile for p in self.processes), tuple(p.deadline for p in self.processes)
        )


@dataclass(frozen=True)
class Sae2Instance:
    """Computation-only allocation problem; time 0 is "now"."""

    profiles: tuple[DiscreteDistribution, ...]
    deadlines: tuple[DiscreteDistribution, ...]

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        object.__setattr__(self, "deadlines", tuple(self.deadlines))
        if len(self.profiles) != len(self.deadlines):
            raise ValueError("profiles and deadlines must align")

    @property
    def n(self) -> int:
        return len(self.profiles)

    @property
    def horizon(self) -> int:
        return max(0, max(d.max for d in self.deadlines))

    def to_cope(self) -> CopeInstance:
        return CopeInstance({}, tuple(Process((), m, d) for m, d in zip(self.profiles, self.deadlines)))

    def is_live(self, i: int) -> bool:
        """Some timely termination is still possible for process i."""
        return self.deadlines[i].max > 1

    def live(self) -> list[int]:
        return [i for i in range(self.n) if self.is_live(i)]

    def residual(self, clock: int, used: Sequence[int] | None = None) -> "Sae2Instance":
        """Re-anchor at ``clock`` after ``used[i]`` fruitless units on each process.

        Exhausted profiles become dead processes (deadline point mass at -1).
        """
        used = used if used is not None else [0] * self.n
        pairs = [_residual_pair(m, d, u, clock) for m, d, u in zip(self.profiles, self.deadlines, used)]
        return Sae2Instance(tuple(m for m, _ in pairs), tuple(d for _, d in pairs))


DEAD = DiscreteDistribution.point(-1)


@lru_cache(maxsize=1 << 16)
def _residual_pair(m: DiscreteDistribution, d: DiscreteDistribution, u: int, clock: int):
    if d.max - clock <= 1:
        return m, DEAD
    cond = m.condition_above(u) if u else m
    if cond is None:
        return m, DEAD
    return cond, (d.shift(-clock) if clock else d)


@dataclass(frozen=True)
class GreedyParams:
    alpha: float = 1.0
    gamma: float = 1.0
    t_u: int = 1
    # E[D] over the whole deadline law, or only over its still-achievable part
    exclude_expired: bool = False

    def __post_init__(self):
        if self.t_u < 1:
            raise ValueError("t_u must be >= 1")
        if self.alpha < 0 or self.gamma < 0:
            raise ValueError("alpha and gamma must be non-negative")


@dataclass(frozen=True)
class Allocation:
    """Contiguous (duration, start) block per process."""

    blocks: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple((int(a), int(b)) for a, b in self.blocks))
        spans = sorted((b, b + a) for a, b in self.blocks if a > 0)
        for (s0, e0), (s1, _) in zip(spans, spans[1:]):
            if s1 < e0:
                raise ValueError("allocation blocks overlap")
        if any(a < 0 or b < 0 for a, b in self.blocks):
            raise ValueError("allocation durations and starts must be non-negative")


# -- closed forms --------------------------------------------------------------


def success_curve(profile: DiscreteDistribution, deadline: DiscreteDistribution, t_b: int, t_max: int) -> np.ndarray:
    """``s(t, t_b)`` for t = 0..t_max as an array."""
    t_max = max(int(t_max), 0)
    pmf = np.zeros(t_max + 1)
    for t, p in zip(profile.times, profile.masses):
        if 0 <= t <= t_max:
            pmf[t] += p
    ts = np.arange(t_max + 1) + t_b
    return np.clip(np.cumsum(pmf * (1.0 - deadline.cdf_array(ts))), 0.0, 1.0)


def success_prob_single(profile: DiscreteDistribution, deadline: DiscreteDistribution, t_i: int, t_b: int) -> float:
    total = 0.0
    for t, p in zip(profile.times, profile.masses):
        if t > t_i:
            break
        if t >= 0:
            total += p * (1.0 - deadline.cdf(t + t_b))
    return min(max(total, 0.0), 1.0)


def _log_fail(s):
    with np.errstate(divide="ignore"):
        out = np.log1p(-np.minimum(s, 1.0))
    return np.where(1.0 - np.asarray(s) <= 1e-15, LPF_FLOOR, out)


def lpf(profile: DiscreteDistribution, deadline: DiscreteDistribution, t_i: int, t_b: int) -> float:
    s = success_prob_single(profile, deadline, t_i, t_b)
    if 1.0 - s <= 1e-15:
        return LPF_FLOOR
    return math.log1p(-s)


def lpf_curve(profile, deadline, t_b: int, t_max: int) -> np.ndarray:
    return _log_fail(success_curve(profile, deadline, t_b, t_max))


def overall_success(instance: CopeInstance | Sae2Instance, alloc: Allocation) -> float:
    if isinstance(instance, CopeInstance):
        instance = instance.sae2()
    fail = 1.0
    for (t_i, t_b), m, d in zip(alloc.blocks, instance.profiles, instance.deadlines):
        fail *= 1.0 - success_prob_single(m, d, t_i, t_b)
    return 1.0 - fail


def most_effective_time(profile, deadline, t_b: int, t_max: int) -> int:
    """Length t in [1, t_max] minimising LPF(t, t_b) / t; smallest t on ties."""
    t_max = max(int(t_max), 1)
    curve = lpf_curve(profile, deadline, t_b, t_max)[1:]
    ratio = curve / np.arange(1, t_max + 1)
    best = ratio.min()
    # relative tolerance so float noise never beats the smallest-t rule
    return int(np.flatnonzero(ratio <= best + 1e-12 * max(1.0, abs(best)))[0]) + 1


def slack(instance: CopeInstance, i: int) -> int:
    p = instance.processes[i]
    if not p.deadline.is_point:
        raise ValueError("slack is defined only for known (point-mass) deadlines")
    return p.deadline.min - instance.head_duration(i)


# -- JSON form -------------------------------------------------------------------------


def instance_to_dict(inst: CopeInstance) -> dict:
    actions = []
    for a in inst.actions.values():
        row = {"id": a.id, "duration": a.duration}
        if a.latest_start is not None:
            row["latest_start"] = a.latest_start
        if a.earliest_start is not None:
            row["earliest_start"] = a.earliest_start
        actions.append(row)
    procs = [
        {
            "head": list(p.head),
            "profile": [[t, m] for t, m in p.profile.pairs()],
            "deadline": [[t, m] for t, m in p.deadline.pairs()],
        }
        for p in inst.processes
    ]
    return {"actions": actions, "processes": procs}


def _dist_from_json(pairs) -> DiscreteDistribution:
    # renormalise only when needed, so a dump/load round trip is exact
    total = math.fsum(float(p) for _, p in pairs)
    return DiscreteDistribution.from_pairs(pairs, normalize=abs(total - 1.0) > TOL)


def instance_from_dict(data: dict, name: str = "") -> CopeInstance:
    try:
        actions = {
            a["id"]: BaseAction(a["id"], int(a["duration"]), a.get("latest_start"), a.get("earliest_start"))
            for a in data.get("actions", [])
        }
        procs = tuple(
            Process(
                tuple(p.get("head", [])),
                _dist_from_json(p["profile"]),
                _dist_from_json(p["deadline"]),
            )
            for p in data["processes"]
        )
    except (KeyError, TypeError, IndexError) as e:
        raise ValueError(f"malformed instance: {e}") from None
    return CopeInstance(actions, procs, name=name or data.get("name", ""))
