"""Independent reference computations used by the tests.

These work on plain tuples with their own move generator so they share no
code with the solver or the search engines they check.
"""

from collections import deque

import numpy as np


def _sorted(stacks):
    return all(all(a >= b for a, b in zip(s, s[1:])) for s in stacks)


def _moves(stacks, tiers):
    for f, sf in enumerate(stacks):
        if not sf:
            continue
        for t, st in enumerate(stacks):
            if t != f and len(st) < tiers:
                child = list(stacks)
                child[f] = sf[:-1]
                child[t] = st + (sf[-1],)
                yield (f, t), tuple(child)


def bfs_shortest(stacks, tiers):
    """Length of a shortest sorting sequence by breadth-first search."""
    stacks = tuple(tuple(s) for s in stacks)
    if _sorted(stacks):
        return 0
    seen = {stacks}
    frontier = deque([(stacks, 0)])
    while frontier:
        state, g = frontier.popleft()
        for _, child in _moves(state, tiers):
            if child in seen:
                continue
            if _sorted(child):
                return g + 1
            seen.add(child)
            frontier.append((child, g + 1))
    return None


def distance_table(stacks, tiers):
    """Exact moves-to-sorted for every state reachable from ``stacks``.

    Moves are reversible, so a multi-source BFS from the sorted states over
    the reachable graph gives the exact remaining distance.
    """
    stacks = tuple(tuple(s) for s in stacks)
    reach = {stacks: []}
    queue = deque([stacks])
    while queue:
        s = queue.popleft()
        for _, c in _moves(s, tiers):
            if c not in reach:
                reach[c] = []
                queue.append(c)
            reach[s].append(c)
    dist = {s: 0 for s in reach if _sorted(s)}
    queue = deque(dist)
    while queue:
        s = queue.popleft()
        for c in reach[s]:
            if c not in dist:
                dist[c] = dist[s] + 1
                queue.append(c)
    return dist


class TableValue:
    """Value stub returning exact remaining moves from a BFS table."""

    def __init__(self, stacks, tiers):
        self.table = distance_table(stacks, tiers)

    def __call__(self, bay):
        return float(self.table[bay.stacks])


def random_small_stacks(rng, n_stacks, tiers, max_containers, min_containers=1):
    """Random gravity-packed bay with distinct groups, any height up to ``tiers``."""
    n = int(rng.integers(min_containers, max_containers + 1))
    groups = rng.permutation(np.arange(1, n + 1))
    stacks = [[] for _ in range(n_stacks)]
    for g in groups:
        open_ = [s for s in range(n_stacks) if len(stacks[s]) < tiers]
        stacks[open_[rng.integers(len(open_))]].append(int(g))
    return tuple(tuple(s) for s in stacks)


def central_difference(f, x, h=1e-4):
    """Gradient of scalar ``f`` at array ``x`` (modified in place, then restored)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
