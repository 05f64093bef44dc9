"""Conversions between bays/moves and network tensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cpmp import Bay, Move, apply_move, is_sorted, legal_moves
from .errors import DeadEnd, IllegalMove, InvalidSolution, ShapeMismatch


@dataclass(frozen=True)
class PolicyExample:
    input: np.ndarray
    target: np.ndarray  # one-hot over S(S-1) moves


@dataclass(frozen=True)
class ValueExample:
    input: np.ndarray
    target: float  # moves remaining from this state


def encode_bay(bay: Bay, scale: float = 1.0) -> np.ndarray:
    """Flatten stack-major, bottom tier first; empty slots are 0."""
    out = np.zeros(bay.n_stacks * bay.tiers)
    T = bay.tiers
    for s, stack in enumerate(bay.stacks):
        out[s * T: s * T + len(stack)] = stack
    return out / scale


def encode_bays(bays, scale: float = 1.0) -> np.ndarray:
    return np.stack([encode_bay(b, scale) for b in bays]) if bays else np.zeros((0, 0))


def decode_bay(vector, n_stacks: int, tiers: int, scale: float = 1.0) -> Bay:
    v = np.asarray(vector, dtype=np.float64)
    if v.size != n_stacks * tiers:
        raise ShapeMismatch("vector of length %d for a %dx%d bay" % (v.size, n_stacks, tiers))
    grid = np.rint(v.reshape(n_stacks, tiers) * scale).astype(np.int64)
    return Bay.from_grid(grid)


def n_moves(n_stacks: int) -> int:
    return n_stacks * (n_stacks - 1)


def move_index(move, n_stacks: int) -> int:
    """Lexicographic rank of ``(src, dst)`` among ordered pairs with src != dst."""
    f, t = move
    if f == t or not (0 <= f < n_stacks and 0 <= t < n_stacks):
        raise IllegalMove("no output index for move %r with %d stacks" % (tuple(move), n_stacks))
    return f * (n_stacks - 1) + (t if t < f else t - 1)


def index_move(i: int, n_stacks: int) -> Move:
    if not 0 <= i < n_moves(n_stacks):
        raise IndexError("move index %d out of range for %d stacks" % (i, n_stacks))
    f, r = divmod(i, n_stacks - 1)
    return Move(f, r if r < f else r + 1)


def masked_policy(output, bay: Bay, previous=None) -> list:
    """Legal moves with renormalized probabilities, most likely first.

    Ties keep ascending move-index order.
    """
    output = np.asarray(output, dtype=np.float64)
    S = bay.n_stacks
    if output.shape != (n_moves(S),):
        raise ShapeMismatch("policy output has shape %s, expected (%d,)" % (output.shape, n_moves(S)))
    moves = legal_moves(bay, previous)
    if not moves:
        raise DeadEnd("no legal move from this bay")
    idx = [move_index(m, S) for m in moves]
    probs = np.clip(output[idx], 0.0, None)
    total = probs.sum()
    probs = probs / total if total > 0 else np.full(len(idx), 1.0 / len(idx))
    order = sorted(range(len(idx)), key=lambda j: (-probs[j], idx[j]))
    return [(moves[j], float(probs[j])) for j in order]


def extract_examples(instance, solution, scale: float = 1.0):
    """One policy and one value example per pre-move state of the solution."""
    bay = getattr(instance, "bay", instance)
    moves = list(solution.moves if hasattr(solution, "moves") else solution)
    S = bay.n_stacks
    n = len(moves)
    policy, value = [], []
    for i, m in enumerate(moves):
        x = encode_bay(bay, scale)
        target = np.zeros(n_moves(S))
        try:
            target[move_index(m, S)] = 1.0
            nxt = apply_move(bay, Move(*m))
        except IllegalMove as exc:
            raise InvalidSolution("move %d %r is illegal: %s" % (i, tuple(m), exc)) from None
        policy.append(PolicyExample(x, target))
        value.append(ValueExample(x, float(n - i)))
        bay = nxt
    if not is_sorted(bay):
        raise InvalidSolution("solution does not end in a sorted bay")
    return policy, value


def format_example(example) -> str:
    """One ``input_csv | target_csv`` line."""
    x = ",".join(repr(float(v)) for v in example.input)
    y = np.atleast_1d(example.target)
    return "%s | %s" % (x, ",".join(repr(float(v)) for v in y))


def dump_examples(examples, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(format_example(ex) + "\n")
