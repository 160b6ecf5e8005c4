"""Sliding-tile data pipeline: A* statistics and CoPE instance assembly.

Boards are flat tuples in row-major order with 0 for the blank; the goal is
``1, 2, ..., k*k-1, 0``. Moves name the direction the blank travels.
"""
from __future__ import annotations

import heapq
import itertools
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import BaseAction, CopeInstance, DiscreteDistribution, Process

MOVES = ("U", "D", "L", "R")
_DELTA = {"U": (-1, 0), "D": (1, 0), "L": (0, -1), "R": (0, 1)}
_OPPOSITE = {"U": "D", "D": "U", "L": "R", "R": "L"}


class Unsolvable(ValueError):
    pass


def goal(k: int) -> tuple[int, ...]:
    return tuple(range(1, k * k)) + (0,)


def board_size(board) -> int:
    k = int(round(len(board) ** 0.5))
    if k * k != len(board) or sorted(board) != list(range(k * k)):
        raise ValueError(f"not a square tile permutation: {board}")
    return k


def manhattan(board) -> int:
    k = board_size(board)
    total = 0
    for pos, tile in enumerate(board):
        if tile:
            r, c = divmod(pos, k)
            gr, gc = divmod(tile - 1, k)
            total += abs(r - gr) + abs(c - gc)
    return total


def is_solvable(board) -> bool:
    k = board_size(board)
    tiles = [t for t in board if t]
    inversions = sum(1 for a, b in itertools.combinations(tiles, 2) if a > b)
    if k % 2:
        return inversions % 2 == 0
    blank_row_from_bottom = k - board.index(0) // k
    return (inversions + blank_row_from_bottom) % 2 == 1


def neighbors(board, k: int):
    """``(move, child)`` pairs in the fixed order U, D, L, R."""
    z = board.index(0)
    r, c = divmod(z, k)
    for mv in MOVES:
        dr, dc = _DELTA[mv]
        nr, nc = r + dr, c + dc
        if 0 <= nr < k and 0 <= nc < k:
            nz = nr * k + nc
            b = list(board)
            b[z], b[nz] = b[nz], 0
            yield mv, tuple(b)


def random_board(k: int, rng: np.random.Generator, scramble: int | None = None):
    """Uniform solvable board, or a random walk of ``scramble`` moves from the goal."""
    if scramble is None:
        while True:
            b = tuple(int(x) for x in rng.permutation(k * k))
            if is_solvable(b):
                return b
    b, last = goal(k), None
    for _ in range(scramble):
        opts = [(mv, nb) for mv, nb in neighbors(b, k) if mv != _OPPOSITE.get(last)]
        last, b = opts[int(rng.integers(len(opts)))]
    return b


@dataclass(order=True)
class _Entry:
    key: tuple
    board: tuple = field(compare=False)
    g: int = field(compare=False)
    path: tuple = field(compare=False)


class _Search:
    """A* with ties broken by lower f, then higher g, then insertion order."""

    def __init__(self, root):
        self.k = board_size(root)
        self.goal = goal(self.k)
        self.counter = itertools.count()
        self.heap: list[_Entry] = []
        self.best_g: dict = {}
        self.closed: set = set()
        self.expansions = 0
        self._push(root, 0, ())

    def _push(self, board, g, path):
        h = manhattan(board)
        self.best_g[board] = g
        heapq.heappush(self.heap, _Entry((g + h, -g, next(self.counter)), board, g, path))

    def _pop(self):
        while self.heap:
            e = heapq.heappop(self.heap)
            if e.board not in self.closed and self.best_g.get(e.board) == e.g:
                return e
        return None

    def open_entries(self):
        """Live open-list entries in pop order."""
        live = [e for e in self.heap if e.board not in self.closed and self.best_g.get(e.board) == e.g]
        return sorted(live)

    def open_size(self) -> int:
        return sum(1 for b in self.best_g if b not in self.closed)

    def step(self):
        """Pop and expand one node; returns the entry, or None when the open list is empty."""
        e = self._pop()
        if e is None:
            return None
        self.expansions += 1
        self.closed.add(e.board)
        self.best_g.pop(e.board, None)
        if e.board == self.goal:
            return e
        for mv, child in neighbors(e.board, self.k):
            if child in self.closed:
                continue
            g = e.g + 1
            if g < self.best_g.get(child, g + 1):
                self._push(child, g, e.path + (mv,))
        return e


def astar_solve(board) -> tuple[int, int]:
    """(expansions, optimal length). Popping the goal counts as an expansion."""
    if not is_solvable(board):
        raise Unsolvable(f"board {board} is not solvable")
    s = _Search(tuple(board))
    while True:
        e = s.step()
        if e is None:
            raise Unsolvable(f"search exhausted for {board}")
        if e.board == s.goal:
            return s.expansions, e.g


# -- histograms ----------------------------------------------------------------------------


@dataclass
class HistogramBank:
    """Per initial-h laws of A* expansions and optimal solution length."""

    expansions: dict[int, DiscreteDistribution]
    length: dict[int, DiscreteDistribution]
    samples: dict[int, int]
    config: dict = field(default_factory=dict)

    def nearest(self, h: int) -> int:
        if h in self.samples:
            return h
        return min(self.samples, key=lambda x: (abs(x - h), x))

    def to_json(self) -> str:
        rows = [
            {
                "h": h,
                "expansions": [[t, p] for t, p in self.expansions[h].pairs()],
                "length": [[t, p] for t, p in self.length[h].pairs()],
                "samples": self.samples[h],
            }
            for h in sorted(self.samples)
        ]
        return json.dumps({"config": self.config, "histograms": rows}, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "HistogramBank":
        data = json.loads(text)
        rows = data["histograms"] if isinstance(data, dict) else data
        exp, ln, cnt = {}, {}, {}
        for r in rows:
            h = int(r["h"])
            exp[h] = DiscreteDistribution.from_pairs(r["expansions"], normalize=True)
            ln[h] = DiscreteDistribution.from_pairs(r["length"], normalize=True)
            cnt[h] = int(r["samples"])
        return cls(exp, ln, cnt, data.get("config", {}) if isinstance(data, dict) else {})


def collect_histograms(count: int, seed: int, k: int = 4, scramble: int | None = None) -> HistogramBank:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    exp: dict[int, Counter] = {}
    ln: dict[int, Counter] = {}
    for _ in range(count):
        b = random_board(k, rng, scramble)
        h = manhattan(b)
        e, length = astar_solve(b)
        exp.setdefault(h, Counter())[e] += 1
        ln.setdefault(h, Counter())[length] += 1
    return HistogramBank(
        {h: DiscreteDistribution.from_counts(c) for h, c in exp.items()},
        {h: DiscreteDistribution.from_counts(c) for h, c in ln.items()},
        {h: sum(c.values()) for h, c in exp.items()},
        {"count": count, "seed": seed, "size": k, "scramble": scramble},
    )


# -- instances ------------------------------------------------------------------------------


def open_list_nodes(board, N: int):
    """Run A* until at least N nodes are open; the first N in pop order as (board, path).

    Returns None when the goal is reached (or the space runs out) first.
    """
    s = _Search(tuple(board))
    while s.open_size() < N:
        e = s.step()
        if e is None or e.board == s.goal:
            return None
    return [(e.board, e.path) for e in s.open_entries()[:N]]


def build_cope_instance(bank: HistogramBank, N: int, dur_b: int, deadline_factor: int, seed: int,
                        k: int = 4, scramble: int | None = None, anchor: str = "root",
                        max_tries: int = 1000) -> CopeInstance:
    """A CoPE instance from the open list of a partial A* search on a random board."""
    if N < 2:
        raise ValueError("N must be >= 2")
    if dur_b < 1:
        raise ValueError("dur_b must be >= 1")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        root = random_board(k, rng, scramble)
        nodes = open_list_nodes(root, N)
        if nodes is not None:
            break
    else:
        raise RuntimeError(f"no board with {N} open nodes after {max_tries} tries")
    h_root = manhattan(root)
    actions = {mv: BaseAction(mv, dur_b) for mv in MOVES}
    procs = []
    for b, path in nodes:
        h = bank.nearest(manhattan(b))
        x = deadline_factor * (h_root if anchor == "root" else manhattan(b))
        dl = bank.length[h].map(lambda r: x - dur_b * r if x - dur_b * r > 0 else -1)
        procs.append(Process(path, bank.expansions[h], dl))
    return CopeInstance(actions, tuple(procs), name=f"puzzle-k{k}-n{N}-d{dur_b}-s{seed}")
