"""Container pre-marshalling problem: bay states, moves, bounds, instances.

Stacks are indexed from 0 and tiers from the bottom: ``stacks[s][0]`` is the
bottom container of stack ``s`` and ``stacks[s][-1]`` its top. A bay is
sorted when every stack is non-increasing in group value going up.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import IllegalMove, InfeasibleSpec, ParseError

FORMAT_HEADER = "CPMP v1"
CLASSES = ("G1", "G2", "G3")


class Move(NamedTuple):
    src: int
    dst: int

    def inverse(self) -> "Move":
        return Move(self.dst, self.src)


@dataclass(frozen=True)
class Bay:
    stacks: tuple
    tiers: int

    def __post_init__(self):
        stacks = tuple(tuple(int(g) for g in s) for s in self.stacks)
        object.__setattr__(self, "stacks", stacks)
        if self.tiers < 1:
            raise ValueError("tiers must be positive, got %r" % self.tiers)
        if not stacks:
            raise ValueError("a bay needs at least one stack")
        for i, s in enumerate(stacks):
            if len(s) > self.tiers:
                raise ValueError("stack %d holds %d containers, max %d" % (i, len(s), self.tiers))
            if any(g < 1 for g in s):
                raise ValueError("stack %d has a group value < 1: %r" % (i, s))

    @classmethod
    def _raw(cls, stacks: tuple, tiers: int) -> "Bay":
        # trusted constructor, skips validation
        bay = object.__new__(cls)
        object.__setattr__(bay, "stacks", stacks)
        object.__setattr__(bay, "tiers", tiers)
        return bay

    @classmethod
    def from_grid(cls, grid) -> "Bay":
        """Build from an ``(S, T)`` array of group values, 0 meaning empty."""
        grid = np.asarray(grid, dtype=np.int64)
        if grid.ndim != 2:
            raise ValueError("grid must be 2-D (stacks x tiers)")
        stacks = []
        for s, col in enumerate(grid):
            h = int(np.count_nonzero(col))
            if np.any(col[:h] == 0) or np.any(col[h:] != 0):
                raise ValueError("stack %d is not gravity-packed: %r" % (s, col.tolist()))
            stacks.append(tuple(int(g) for g in col[:h]))
        return cls(tuple(stacks), grid.shape[1])

    @property
    def n_stacks(self) -> int:
        return len(self.stacks)

    @property
    def heights(self) -> tuple:
        return tuple(len(s) for s in self.stacks)

    @property
    def n_containers(self) -> int:
        return sum(len(s) for s in self.stacks)

    @property
    def grid(self) -> np.ndarray:
        out = np.zeros((self.n_stacks, self.tiers), dtype=np.int64)
        for s, stack in enumerate(self.stacks):
            out[s, : len(stack)] = stack
        return out

    def groups(self) -> Counter:
        return Counter(g for s in self.stacks for g in s)

    def __str__(self):
        rows = []
        for t in reversed(range(self.tiers)):
            cells = [("%3d" % s[t]) if t < len(s) else "  ." for s in self.stacks]
            rows.append(" ".join(cells))
        return "\n".join(rows)


@dataclass(frozen=True)
class Instance:
    bay: Bay
    group_class: Optional[str] = None
    id: str = ""


@dataclass(frozen=True)
class Solution:
    moves: tuple

    def __post_init__(self):
        object.__setattr__(self, "moves", tuple(Move(*m) for m in self.moves))

    def __len__(self):
        return len(self.moves)

    @property
    def length(self) -> int:
        return len(self.moves)


def stack_sorted(stack: Sequence[int]) -> bool:
    return all(a >= b for a, b in zip(stack, stack[1:]))


def is_sorted(bay: Bay) -> bool:
    return all(stack_sorted(s) for s in bay.stacks)


def stack_blocking(stack: Sequence[int]) -> int:
    count = 0
    low = None
    for g in stack:
        if low is None or g <= low:
            low = g
        else:
            count += 1
    return count


def blocking_count(bay: Bay) -> int:
    """Number of containers resting above a strictly smaller group value.

    Each of them has to move at least once, so this is a lower bound on the
    remaining number of moves.
    """
    return sum(stack_blocking(s) for s in bay.stacks)


def legal_moves(bay: Bay, previous: Optional[Move] = None) -> list:
    stacks = bay.stacks
    T = bay.tiers
    undo = previous.inverse() if previous is not None else None
    out = []
    for f, sf in enumerate(stacks):
        if not sf:
            continue
        for t, st in enumerate(stacks):
            if t == f or len(st) >= T:
                continue
            m = Move(f, t)
            if m != undo:
                out.append(m)
    return out


def apply_move(bay: Bay, move: Move) -> Bay:
    f, t = move
    S = bay.n_stacks
    if not (0 <= f < S and 0 <= t < S):
        raise IllegalMove("stack index out of range in %r" % (move,))
    if f == t:
        raise IllegalMove("source and target are the same stack: %r" % (move,))
    src = bay.stacks[f]
    dst = bay.stacks[t]
    if not src:
        raise IllegalMove("stack %d is empty" % f)
    if len(dst) >= bay.tiers:
        raise IllegalMove("stack %d is full" % t)
    stacks = list(bay.stacks)
    stacks[f] = src[:-1]
    stacks[t] = dst + (src[-1],)
    return Bay._raw(tuple(stacks), bay.tiers)


def replay(bay: Bay, moves) -> Bay:
    for m in moves:
        bay = apply_move(bay, Move(*m))
    return bay


def infer_class(bay: Bay) -> Optional[str]:
    counts = set(bay.groups().values())
    if len(counts) == 1:
        k = counts.pop()
        if 1 <= k <= 3:
            groups = sorted(bay.groups())
            if groups == list(range(1, len(groups) + 1)):
                return "G%d" % k
    return None


def generate_instance(n_stacks: int, tiers: int, group_class: str, fill_count: int,
                      seed, id: str = "") -> Instance:
    """Random instance with the two top tiers left empty.

    Groups ``1..fill_count/k`` each appear ``k`` times for class ``Gk``. The
    shuffled containers are dropped one at a time onto a stack chosen
    uniformly among those below the generation cap ``tiers - 2``.
    """
    if group_class not in CLASSES:
        raise InfeasibleSpec("unknown class %r, expected one of %s" % (group_class, CLASSES))
    k = int(group_class[1])
    cap = tiers - 2
    if n_stacks < 1 or cap < 0:
        raise InfeasibleSpec("bay %dx%d has no room for generation" % (n_stacks, tiers))
    if fill_count < 0 or fill_count > n_stacks * cap:
        raise InfeasibleSpec("fill_count %d exceeds capacity %d" % (fill_count, n_stacks * cap))
    if fill_count % k:
        raise InfeasibleSpec("fill_count %d is not divisible by %d for class %s"
                             % (fill_count, k, group_class))
    rng = np.random.default_rng(seed)
    groups = np.repeat(np.arange(1, fill_count // k + 1), k)
    rng.shuffle(groups)
    stacks = [[] for _ in range(n_stacks)]
    for g in groups:
        open_ = [s for s in range(n_stacks) if len(stacks[s]) < cap]
        stacks[open_[rng.integers(len(open_))]].append(int(g))
    bay = Bay(tuple(tuple(s) for s in stacks), tiers)
    return Instance(bay, group_class, id)


def format_instance(instance: Instance) -> str:
    bay = instance.bay
    lines = [FORMAT_HEADER, "%d %d" % (bay.n_stacks, bay.tiers)]
    for s in bay.stacks:
        lines.append(" ".join(str(v) for v in (len(s),) + s))
    return "\n".join(lines) + "\n"


def write_instance(instance: Instance, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_instance(instance))


def parse_instance(text: str, id: str = "", path=None) -> Instance:
    lines = text.splitlines()
    if not lines or not text.strip():
        raise ParseError("empty instance file", line=1, path=path)
    if lines[0].strip() != FORMAT_HEADER:
        raise ParseError("expected header %r, got %r" % (FORMAT_HEADER, lines[0]), line=1, path=path)
    if len(lines) < 2:
        raise ParseError("missing 'S T' line", line=2, path=path)
    try:
        S, T = (int(x) for x in lines[1].split())
    except ValueError:
        raise ParseError("expected 'S T', got %r" % lines[1], line=2, path=path) from None
    if S < 1 or T < 1:
        raise ParseError("S and T must be positive", line=2, path=path)
    body = [ln for ln in lines[2:]]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != S:
        raise ParseError("header declares %d stacks but %d stack lines follow" % (S, len(body)),
                         line=2, path=path)
    stacks = []
    for i, ln in enumerate(body):
        lineno = i + 3
        try:
            values = [int(x) for x in ln.split()]
        except ValueError:
            raise ParseError("non-integer token in %r" % ln, line=lineno, path=path) from None
        if not values:
            raise ParseError("blank stack line", line=lineno, path=path)
        h, groups = values[0], values[1:]
        if h != len(groups):
            raise ParseError("height %d but %d group values" % (h, len(groups)), line=lineno, path=path)
        if h > T:
            raise ParseError("height %d exceeds %d tiers" % (h, T), line=lineno, path=path)
        if any(g < 1 for g in groups):
            raise ParseError("group values must be >= 1", line=lineno, path=path)
        stacks.append(tuple(groups))
    bay = Bay(tuple(stacks), T)
    return Instance(bay, infer_class(bay), id)


def read_instance(path) -> Instance:
    with open(path, encoding="ascii") as fh:
        text = fh.read()
    stem = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_instance(text, id=stem, path=path)
