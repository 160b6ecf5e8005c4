"""Independent oracles and random instance builders shared by the tests."""
from __future__ import annotations

import math
from collections import deque

import numpy as np

from cope.core import BaseAction, CopeInstance, DiscreteDistribution, Process, Sae2Instance
from cope.mdp import FAIL, FAILED, SUCCESS, Compute, Execute, IllegalAction, Model, is_terminal


def rand_dist(rng, lo, hi, k):
    k = min(k, hi - lo)
    ts = sorted(int(t) for t in rng.choice(np.arange(lo, hi), size=k, replace=False))
    ps = rng.random(k) + 0.1
    return DiscreteDistribution.from_pairs(zip(ts, ps), normalize=True)


def rand_instance(rng, n_max=3, head_max=2, dur_max=3, dl_lo=-1, dl_hi=14, m_hi=8, point=False,
                  share=0.5):
    """Small random instance; later processes may reuse an earlier head prefix."""
    acts, procs = {}, []
    n = int(rng.integers(1, n_max + 1))
    for i in range(n):
        L = int(rng.integers(0, head_max + 1))
        head = []
        for m in range(L):
            if procs and rng.random() < share:
                ref = procs[0].head
                if m < len(ref) and list(ref[:m]) == head:
                    head.append(ref[m])
                    continue
            b = f"a{i}{m}"
            acts[b] = BaseAction(b, int(rng.integers(1, dur_max + 1)))
            head.append(b)
        prof = rand_dist(rng, 1, m_hi, int(rng.integers(1, 3)))
        if point:
            dl = DiscreteDistribution.point(int(rng.integers(max(dl_lo, 2), dl_hi + 1)))
        else:
            dl = rand_dist(rng, dl_lo, dl_hi + 1, int(rng.integers(1, 4)))
        procs.append(Process(tuple(head), prof, dl))
    return CopeInstance(acts, tuple(procs))


def rand_point_sae2(rng, n_max=3, hi=12):
    n = int(rng.integers(1, n_max + 1))
    profs = tuple(rand_dist(rng, 1, 9, int(rng.integers(1, 4))) for _ in range(n))
    dls = tuple(DiscreteDistribution.point(int(rng.integers(0, hi + 1))) for _ in range(n))
    return Sae2Instance(profs, dls)


def equal_slack_instance(rng, sl=None, n=2):
    """Point deadlines chosen so every head has the same slack."""
    sl = int(rng.integers(0, 8)) if sl is None else sl
    acts, procs = {}, []
    for i in range(n):
        head = []
        for m in range(int(rng.integers(0, 3))):
            if i and m < len(procs[0].head) and head == list(procs[0].head[:m]) and rng.random() < 0.5:
                head.append(procs[0].head[m])
                continue
            b = f"a{i}{m}"
            acts[b] = BaseAction(b, int(rng.integers(1, 4)))
            head.append(b)
        dur = sum(acts[b].duration for b in head)
        prof = rand_dist(rng, 1, 10, int(rng.integers(1, 3)))
        procs.append(Process(tuple(head), prof, DiscreteDistribution.point(sl + dur)))
    return CopeInstance(acts, tuple(procs))


# -- success probability oracle -------------------------------------------------------------


def success_oracle(profile, deadline, t_i, t_b):
    """Direct sum over termination times, written without numpy."""
    total = 0.0
    for t, p in profile.pairs():
        if 0 <= t <= t_i:
            ok = sum(q for d, q in deadline.pairs() if d > t + t_b)
            total += p * ok
    return total


# -- effective deadline oracle by MDP replay ----------------------------------------------------


def effective_deadline_oracle(instance, j, i, starts, d):
    """Replay H_i at ``starts`` in the MDP and scan ticks where a termination of j would be timely."""
    far = 10 ** 6
    never = DiscreteDistribution.point(far)
    pj = instance.processes[j]
    procs = [Process(pj.head, never, DiscreteDistribution.point(d))]
    if i != j:
        pi = instance.processes[i]
        procs.append(Process(pi.head, never, DiscreteDistribution.point(far)))
    model = Model(CopeInstance(instance.actions, tuple(procs)))
    plan = list(zip(instance.processes[i].head, starts))
    s = model.initial()
    last = None
    if is_terminal(s):
        return min(d, 0)
    for t in range(0, d + 1):
        while not is_terminal(s) and s.W == 0 and s.L < len(plan) and plan[s.L][1] == s.T:
            s = model.apply_execute(s, plan[s.L][0])
        if is_terminal(s) or s.used[0] == FAILED or Compute(0) not in model.legal_actions(s):
            break
        assert s.T == t
        last = t
        s = model.apply_compute(s, 0)[0][1]
    return min(d, 0) if last is None else last + 2


# -- linear policy enumeration for known deadlines -----------------------------------------------


def _step(model, s, a):
    """(success prob, continuing non-terminal state or None); raises on illegal."""
    if a not in model.legal_actions(s):
        raise IllegalAction(str(a))
    branches = model.apply(s, a)
    succ = sum(p for p, x in branches if x == SUCCESS)
    cont = [(p, x) for p, x in branches if x != SUCCESS and x != FAIL]
    assert len(cont) <= 1, "known deadlines leave one non-terminal branch"
    return succ, (cont[0] if cont else None)


def linear_value(model, seq):
    s, reach, total = model.initial(), 1.0, 0.0
    for a in seq:
        if is_terminal(s):
            break
        succ, cont = _step(model, s, a)
        total += reach * succ
        if cont is None:
            break
        reach *= cont[0]
        s = cont[1]
    return total


def _legal_seq(model, seq):
    """Every action is legal along the continuing path; hitting FAIL with actions left is illegal."""
    s = model.initial()
    for k, a in enumerate(seq):
        if s == FAIL:
            return False
        if is_terminal(s):
            return True
        if a not in model.legal_actions(s):
            return False
        nxt = [x for p, x in model.apply(s, a) if p > 0 and x != SUCCESS]
        if not nxt:
            return True
        s = nxt[0]
        if s == FAIL and k + 1 < len(seq):
            return False
    return True


def best_linear_any(model):
    """Max over every linear action sequence, by recursion on the continuing path."""
    memo = {}

    def v(s):
        if is_terminal(s):
            return 0.0
        if s in memo:
            return memo[s]
        best = 0.0
        for a in model.legal_actions(s):
            succ, cont = _step(model, s, a)
            best = max(best, succ + (cont[0] * v(cont[1]) if cont else 0.0))
        memo[s] = best
        return best

    return v(model.initial())


def is_lazy(model, seq):
    for k in range(len(seq) - 1):
        if isinstance(seq[k], Execute) and isinstance(seq[k + 1], Compute):
            swapped = list(seq)
            swapped[k], swapped[k + 1] = swapped[k + 1], swapped[k]
            if _legal_seq(model, swapped):
                return False
    return True


def best_linear_contiguous_lazy(model):
    """Max over contiguous, lazy linear sequences by explicit enumeration."""
    best = 0.0
    count = 0
    stack = [(model.initial(), (), None, frozenset())]
    while stack:
        s, seq, cur, done = stack.pop()
        if seq and not isinstance(seq[-1], Execute) and is_lazy(model, seq):
            count += 1
            best = max(best, linear_value(model, seq))
        if is_terminal(s):
            continue
        for a in model.legal_actions(s):
            if isinstance(a, Compute):
                if a.i in done:
                    continue
                ndone = done | {cur} if cur is not None and cur != a.i else done
                ncur = a.i
            else:
                ndone, ncur = done, cur
            _, cont = _step(model, s, a)
            nxt = cont[1] if cont else FAIL
            stack.append((nxt, seq + (a,), ncur, ndone))
    return best, count


# -- puzzle oracles --------------------------------------------------------------------------------


def manhattan_oracle(board):
    k = int(round(math.sqrt(len(board))))
    grid = np.array(board).reshape(k, k)
    total = 0
    for tile in range(1, k * k):
        (r, c), = np.argwhere(grid == tile)
        total += abs(int(r) - (tile - 1) // k) + abs(int(c) - (tile - 1) % k)
    return total


def _moves(board, k):
    z = board.index(0)
    r, c = divmod(z, k)
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nr, nc = r + dr, c + dc
        if 0 <= nr < k and 0 <= nc < k:
            b = list(board)
            b[z], b[nr * k + nc] = b[nr * k + nc], 0
            yield tuple(b)


def bfs_length(board, limit=20):
    k = int(round(math.sqrt(len(board))))
    goal = tuple(range(1, k * k)) + (0,)
    seen = {board: 0}
    q = deque([board])
    while q:
        b = q.popleft()
        if b == goal:
            return seen[b]
        if seen[b] >= limit:
            continue
        for nb in _moves(b, k):
            if nb not in seen:
                seen[nb] = seen[b] + 1
                q.append(nb)
    return None


def ida_length(board):
    """Iterative deepening on f; solution length always has the parity of the heuristic."""
    k = int(round(math.sqrt(len(board))))
    goal = tuple(range(1, k * k)) + (0,)
    bound = manhattan_oracle(board)
    while True:
        r = _ida_depth(board, bound, goal, k)
        if r is not None:
            return r
        bound += 2


def _ida_depth(board, bound, goal, k):
    """Depth of a goal reachable within ``bound`` (f-limited DFS), else None."""
    best = [None]

    def dfs(b, g, prev):
        if best[0] is not None:
            return
        if g + manhattan_oracle(b) > bound:
            return
        if b == goal:
            best[0] = g
            return
        for nb in _moves(b, k):
            if nb != prev:
                dfs(nb, g + 1, b)

    dfs(board, 0, None)
    return best[0]
