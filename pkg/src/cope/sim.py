"""Monte-Carlo evaluation against pre-sampled outcomes.

An outcome fixes, per process, how much computation it needs and what its
deadline turns out to be. Trials are seeded from (base seed, instance id,
trial index), so every algorithm faces the same outcome stream.
"""
from __future__ import annotations

import itertools
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .cope_algs import AlgConfig, Decider, check_algorithm, make_decider
from .core import CopeInstance
from .mdp import FAIL, SUCCESS, IllegalAction, Model, is_terminal


class Outcome(NamedTuple):
    term: tuple[int, ...]
    deadline: tuple[int, ...]


class TrialError(RuntimeError):
    pass


def trial_seed(base: int, instance_id: str, t: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base), zlib.crc32(instance_id.encode()), int(t)])


def sample_outcome(instance: CopeInstance, seed) -> Outcome:
    rng = np.random.default_rng(seed)
    term = tuple(p.profile.sample(rng) for p in instance.processes)
    dl = tuple(p.deadline.sample(rng) for p in instance.processes)
    return Outcome(term, dl)


def enumerate_outcomes(instance: CopeInstance):
    """Every outcome with its probability (small instances only)."""
    axes = [p.profile.pairs() for p in instance.processes] + [p.deadline.pairs() for p in instance.processes]
    n = instance.n
    for combo in itertools.product(*axes):
        prob = math.prod(p for _, p in combo)
        yield Outcome(tuple(t for t, _ in combo[:n]), tuple(t for t, _ in combo[n:])), prob


class _Clock:
    def __init__(self):
        self.calls = 0
        self.seconds = 0.0


def run_trial(model: Model, decider: Decider, outcome: Outcome, memo: dict | None = None,
              clock: _Clock | None = None):
    """Drive the MDP with fixed outcomes until a terminal; returns SUCCESS or FAIL."""
    if not isinstance(model, Model):
        model = Model(model)
    decider.reset()
    state = model.initial()
    while not is_terminal(state):
        action = memo.get(state) if memo is not None else None
        if action is None:
            t0 = time.perf_counter()
            action = decider.decide(state)
            if clock is not None:
                clock.calls += 1
                clock.seconds += time.perf_counter() - t0
            if memo is not None:
                memo[state] = action
        try:
            state = model.step_with_outcome(state, action, outcome.term, outcome.deadline)
        except IllegalAction as e:
            raise TrialError(f"decider emitted illegal {action} in {state}") from e
    return SUCCESS if state == SUCCESS else FAIL


def exact_value(model: Model, decider: Decider) -> float:
    """Expected success of a stateless decider by walking the MDP's chance branches."""
    cache: dict = {}

    def v(s):
        if s == SUCCESS:
            return 1.0
        if s == FAIL:
            return 0.0
        if s not in cache:
            a = decider.decide(s)
            cache[s] = math.fsum(p * v(nxt) for p, nxt in model.apply(s, a))
        return cache[s]

    return v(model.initial())


@dataclass
class ResultRow:
    instance_id: str
    n_processes: int
    dur_b: int
    algorithm: str
    trials: int
    successes: int
    mean_decision_ms: float
    total_ms: float
    seed: int
    max_decision_ms: float = 0.0

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials


@dataclass
class EvalReport:
    rows: list[ResultRow] = field(default_factory=list)

    def by_algorithm(self) -> dict[str, dict]:
        out: dict[str, dict] = {}
        for r in self.rows:
            a = out.setdefault(r.algorithm, {"successes": 0, "trials": 0, "decision_ms": [], "total_ms": 0.0})
            a["successes"] += r.successes
            a["trials"] += r.trials
            a["decision_ms"].append(r.mean_decision_ms)
            a["total_ms"] += r.total_ms
        for a in out.values():
            a["success_rate"] = a["successes"] / a["trials"]
        return out

    def rate(self, alg: str) -> float:
        return self.by_algorithm()[alg]["success_rate"]


@dataclass(frozen=True)
class Job:
    instance_id: str
    instance: CopeInstance
    algorithm: str
    trials: int
    seed: int
    config: AlgConfig
    dur_b: int = 0
    # an already-solved decider to reuse instead of solving again
    decider: Decider | None = None


def run_job(job: Job) -> ResultRow:
    t_start = time.perf_counter()
    model = Model(job.instance)
    clock = _Clock()
    t0 = time.perf_counter()
    if job.decider is not None:
        decider = job.decider
        setup = getattr(decider, "setup_seconds", 0.0)
    else:
        decider = make_decider(job.algorithm, job.instance, job.config, model)
        setup = time.perf_counter() - t0
    memo = {} if decider.stateless else None
    wins = 0
    max_ms = setup * 1e3
    for t in range(job.trials):
        outcome = sample_outcome(job.instance, trial_seed(job.seed, job.instance_id, t))
        before = clock.seconds
        if run_trial(model, decider, outcome, memo, clock) == SUCCESS:
            wins += 1
        max_ms = max(max_ms, (clock.seconds - before) * 1e3)
    # offline solving counts as one decision
    calls = clock.calls + 1
    mean_ms = (clock.seconds + setup) / calls * 1e3
    return ResultRow(job.instance_id, job.instance.n, job.dur_b, job.algorithm, job.trials, wins,
                     mean_ms, (time.perf_counter() - t_start) * 1e3, job.seed, max_ms)


def evaluate(instances: Sequence, algorithms: Sequence[str], trials: int, seed: int = 0,
             config: AlgConfig | None = None, jobs: int = 1, prebuilt: dict | None = None) -> EvalReport:
    """Paired Monte-Carlo evaluation of every algorithm on every instance.

    ``instances`` holds ``(instance_id, CopeInstance)`` or
    ``(instance_id, CopeInstance, dur_b)`` tuples. ``prebuilt`` maps
    ``(instance_id, algorithm)`` to a decider that was already solved.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    for a in algorithms:
        check_algorithm(a)
    config = config or AlgConfig(seed=seed)
    work = []
    for item in instances:
        iid, inst = item[0], item[1]
        dur = item[2] if len(item) > 2 else 0
        for a in algorithms:
            ready = (prebuilt or {}).get((iid, a))
            work.append(Job(iid, inst, a, trials, seed, config, dur, ready))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(run_job, work))
    else:
        rows = [run_job(j) for j in work]
    return EvalReport(rows)
