"""Exact pre-marshalling solver used to label training data.

Iterative deepening on the solution length with the blocking-container bound,
a per-iteration transposition table keyed on the stack multiset, and a
greedy best-first incumbent so that a timed-out solve still returns a plan.
"""

from __future__ import annotations

import heapq
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .cpmp import Bay, Instance, Move, Solution, blocking_count, stack_blocking

log = logging.getLogger(__name__)

SOLUTION_HEADER = "CPMPSOL v1"


@dataclass(frozen=True)
class OracleResult:
    solution: Optional[Solution]
    proven_optimal: bool
    nodes_opened: int
    wall_time: float
    timed_out: bool = False
    id: str = ""

    @property
    def length(self) -> Optional[int]:
        return None if self.solution is None else len(self.solution)


class _Timeout(Exception):
    pass


def _children(stacks, T, prev_undo, blocking):
    """Successors as (child_lb_delta, f, t, new_stacks, new_blocking)."""
    out = []
    S = len(stacks)
    for f in range(S):
        sf = stacks[f]
        if not sf:
            continue
        nf = sf[:-1]
        bf = stack_blocking(nf)
        for t in range(S):
            if t == f:
                continue
            st = stacks[t]
            if len(st) >= T or (f, t) == prev_undo:
                continue
            nt = st + (sf[-1],)
            bt = stack_blocking(nt)
            delta = (bf - blocking[f]) + (bt - blocking[t])
            out.append((delta, f, t, nf, nt, bf, bt))
    out.sort(key=lambda c: (c[0], c[1], c[2]))
    return out


def greedy_incumbent(bay: Bay, max_nodes: int = 20000, deadline: float = None):
    """Best-first search on the blocking count; returns a move list or None."""
    T = bay.tiers
    root = bay.stacks
    if blocking_count(bay) == 0:
        return []
    counter = 0
    heap = [(blocking_count(bay), 0, counter, root)]
    parent = {tuple(sorted(root)): None}
    moves_to = {root: []}
    expanded = 0
    while heap and expanded < max_nodes:
        if deadline is not None and expanded % 512 == 0 and time.perf_counter() > deadline:
            return None
        lb, g, _, stacks = heapq.heappop(heap)
        expanded += 1
        path = moves_to.pop(stacks)
        blocking = [stack_blocking(s) for s in stacks]
        for delta, f, t, nf, nt, bf, bt in _children(stacks, T, None, blocking):
            child = list(stacks)
            child[f] = nf
            child[t] = nt
            child = tuple(child)
            key = tuple(sorted(child))
            if key in parent:
                continue
            parent[key] = True
            cpath = path + [Move(f, t)]
            clb = lb + delta
            if clb == 0:
                return cpath
            counter += 1
            moves_to[child] = cpath
            heapq.heappush(heap, (clb, g + 1, counter, child))
    return None


def solve_exact(instance, time_limit: Optional[float] = None) -> OracleResult:
    """Shortest move sequence sorting the bay.

    ``instance`` may be an :class:`Instance` or a bare :class:`Bay`. On timeout
    the greedy incumbent (if any) is returned with ``proven_optimal=False``.
    """
    if isinstance(instance, Instance):
        bay, iid = instance.bay, instance.id
    else:
        bay, iid = instance, ""
    start = time.perf_counter()
    deadline = None if time_limit is None else start + time_limit
    root_lb = blocking_count(bay)
    if root_lb == 0:
        return OracleResult(Solution(()), True, 1, time.perf_counter() - start, id=iid)

    T = bay.tiers
    incumbent = greedy_incumbent(bay, deadline=deadline)
    nodes = 0
    path = []

    def dfs(stacks, blocking, lb, g, bound, undo, seen):
        nonlocal nodes
        nodes += 1
        if deadline is not None and (nodes & 1023) == 0 and time.perf_counter() > deadline:
            raise _Timeout
        if lb == 0:
            return True
        if g + lb > bound:
            return False
        key = tuple(sorted(stacks))
        prev = seen.get(key)
        if prev is not None and prev <= g:
            return False
        seen[key] = g
        for delta, f, t, nf, nt, bf, bt in _children(stacks, T, undo, blocking):
            if g + 1 + lb + delta > bound:
                continue
            child = list(stacks)
            child[f] = nf
            child[t] = nt
            cblock = list(blocking)
            cblock[f] = bf
            cblock[t] = bt
            path.append(Move(f, t))
            if dfs(tuple(child), cblock, lb + delta, g + 1, bound, (t, f), seen):
                return True
            path.pop()
        return False

    root_blocking = [stack_blocking(s) for s in bay.stacks]
    bound = root_lb
    try:
        while True:
            if incumbent is not None and bound >= len(incumbent):
                sol = Solution(tuple(incumbent))
                return OracleResult(sol, True, nodes, time.perf_counter() - start, id=iid)
            path.clear()
            if dfs(bay.stacks, root_blocking, root_lb, 0, bound, None, {}):
                sol = Solution(tuple(path))
                return OracleResult(sol, True, nodes, time.perf_counter() - start, id=iid)
            bound += 1
    except _Timeout:
        sol = None if incumbent is None else Solution(tuple(incumbent))
        log.info("oracle timed out on %r after %d nodes (bound %d)", iid, nodes, bound)
        return OracleResult(sol, False, nodes, time.perf_counter() - start, timed_out=True, id=iid)


def _solve_one(args):
    instance, time_limit = args
    try:
        return solve_exact(instance, time_limit)
    except Exception as exc:  # one bad instance must not sink the batch
        log.error("oracle failed on %r: %s", getattr(instance, "id", ""), exc)
        return OracleResult(None, False, 0, 0.0, id=getattr(instance, "id", ""))


def batch_solve(instances, time_limit_each: Optional[float] = None, parallelism: int = 1) -> list:
    """Solve every instance, keeping input order. Timeouts are flagged, not raised."""
    jobs = [(inst, time_limit_each) for inst in instances]
    if parallelism is None or parallelism <= 0:
        parallelism = os.cpu_count() or 1
    if parallelism == 1 or len(jobs) <= 1:
        return [_solve_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_solve_one, jobs, chunksize=8))


def format_solution(solution: Solution, instance_id: str = "") -> str:
    lines = [SOLUTION_HEADER, instance_id, str(len(solution))]
    lines.extend("%d %d" % (m.src, m.dst) for m in solution.moves)
    return "\n".join(lines) + "\n"


def write_solution(solution: Solution, path, instance_id: str = "") -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_solution(solution, instance_id))


def read_solution(path):
    """Returns ``(instance_id, Solution)``."""
    from .errors import ParseError

    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != SOLUTION_HEADER:
        raise ParseError("expected header %r" % SOLUTION_HEADER, line=1, path=path)
    if len(lines) < 3:
        raise ParseError("truncated solution file", line=len(lines) + 1, path=path)
    iid = lines[1].strip()
    try:
        n = int(lines[2])
    except ValueError:
        raise ParseError("expected move count, got %r" % lines[2], line=3, path=path) from None
    body = lines[3:3 + n]
    if len(body) != n:
        raise ParseError("declared %d moves but found %d" % (n, len(body)), line=3, path=path)
    moves = []
    for i, ln in enumerate(body):
        try:
            f, t = (int(x) for x in ln.split())
        except ValueError:
            raise ParseError("expected 'f t', got %r" % ln, line=i + 4, path=path) from None
        moves.append(Move(f, t))
    return iid, Solution(tuple(moves))
