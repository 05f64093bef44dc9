"""Learned-heuristic tree search over bay states.

A policy (``bay -> probabilities over all S(S-1) moves``) ranks and prunes
branches; an optional value function (``bay -> estimated remaining moves``)
supplies a lower bound for pruning. Three node orders are available:
depth-first, limited discrepancy (priority queue keyed on accumulated
discrepancy, deeper nodes first on ties) and weighted best-first.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from .cpmp import Bay, Move, Solution, apply_move, is_sorted
from .encoding import encode_bay, masked_policy, n_moves
from .errors import ConfigError, DeadEnd, ShapeMismatch

STRATEGIES = ("dfs", "lds", "wbs")
MP_VARIANTS = ("constant", "quadratic", "log")


@dataclass
class SearchConfig:
    strategy: str = "dfs"
    k: int = 1
    d: float = 1.0
    p: float = 0.4
    mp_variant: str = "log"
    reactive_md: bool = True
    binning: bool = False
    bins: int = 1
    z: int = 0
    alpha: float = 1.0
    gamma: float = 1.0
    time_limit: Optional[float] = 60.0
    md0: Optional[int] = None  # None: twice the container count
    max_depth: Optional[int] = None  # None: md0

    def __post_init__(self):
        self.strategy = self.strategy.lower()
        self.mp_variant = self.mp_variant.lower()
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy must be one of %s, got %r" % (STRATEGIES, self.strategy))
        if self.mp_variant not in MP_VARIANTS:
            raise ConfigError("mp_variant must be one of %s, got %r" % (MP_VARIANTS, self.mp_variant))
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError("k must be a positive integer")
        if not 0.0 <= self.d <= 1.0:
            raise ConfigError("d must lie in [0, 1]")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("p must lie in [0, 1]")
        if int(self.bins) != self.bins or self.bins < 1:
            raise ConfigError("bins must be a positive integer")
        if self.z < 0:
            raise ConfigError("z must be >= 0")
        if self.alpha < 0 or self.gamma < 0:
            raise ConfigError("alpha and gamma must be >= 0")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ConfigError("time_limit must be positive (or None for no limit)")
        if self.md0 is not None and self.md0 < 1:
            raise ConfigError("md0 must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError("unknown search options: %s" % ", ".join(sorted(unknown)))
        return cls(**d)


@dataclass
class SearchResult:
    solution: Optional[Solution]
    ub: float
    nodes: int
    value_queries: int
    policy_queries: int
    wall_time: float
    completed: bool
    timed_out: bool
    trace: list = field(default_factory=list, repr=False)  # popped queue keys, when recorded
    history: list = field(default_factory=list, repr=False)  # (nodes opened, new ub) per improvement

    @property
    def solved(self):
        return self.solution is not None

    @property
    def length(self):
        return None if self.solution is None else len(self.solution)


class UniformPolicy:
    """Equal probability on every move; legality is handled by masking."""

    def __call__(self, bay):
        m = n_moves(bay.n_stacks)
        return np.full(m, 1.0 / m)


class NetworkPolicy:
    def __init__(self, network):
        if network.head != "policy":
            raise ShapeMismatch("expected a policy network, got a %s head" % network.head)
        self.network = network

    def __call__(self, bay):
        _check_shape(self.network, bay)
        return self.network.forward(encode_bay(bay, self.network.scale))


class NetworkValue:
    def __init__(self, network):
        if network.head != "value":
            raise ShapeMismatch("expected a value network, got a %s head" % network.head)
        self.network = network

    def __call__(self, bay):
        _check_shape(self.network, bay)
        return float(self.network.forward(encode_bay(bay, self.network.scale))[0])


def _check_shape(network, bay):
    if bay.n_stacks != network.n_stacks or bay.tiers != network.tiers:
        raise ShapeMismatch("network is for %dx%d bays, got %dx%d"
                            % (network.n_stacks, network.tiers, bay.n_stacks, bay.tiers))


def mp_threshold(variant, p, r, depth, md):
    """Minimum branch probability; branches below it are pruned.

    ``constant`` keeps the same width everywhere; ``quadratic`` and ``log``
    keep more branches near the root and narrow towards depth ``md``. Never
    exceeds ``r`` so the most likely branch always survives.
    """
    md = max(md, 1)
    if variant == "constant":
        thr = r * (1.0 - p)
    elif variant == "quadratic":
        thr = r * (1.0 - p * (md - depth) ** 2 / md ** 2)
    elif variant == "log":
        thr = r * (1.0 - p * -math.log(max(depth, 1) / md))
    else:
        raise ConfigError("unknown MP variant %r" % variant)
    return min(thr, r)


def heuristic_lower_bound(cost, depth, bay, value_fn, d, k=1):
    """``cost + d * value`` at depths divisible by ``k``; ``-inf`` otherwise."""
    if value_fn is None or depth % k:
        return -math.inf
    return cost + d * max(0.0, value_fn(bay))


def discrepancy_bin(prob, r, bins):
    """Bin index of ``prob`` when ``[0, r]`` is cut into ``bins`` equal bins, highest first."""
    width = r / bins
    if width <= 0:
        return 0
    i = math.ceil((r - prob) / width - 1e-12) - 1
    return min(max(i, 0), bins - 1)


def _unwind(path):
    moves = []
    while path is not None:
        m, path = path
        moves.append(m)
    return Solution(tuple(reversed(moves)))


class _Search:
    def __init__(self, root, policy, value, config):
        if not isinstance(root, Bay):
            root = root.bay
        self.root = root
        self.policy = policy if policy is not None else UniformPolicy()
        self.value = value
        self.cfg = config
        self.md = config.md0 if config.md0 is not None else max(1, 2 * root.n_containers)
        self.max_depth = config.max_depth if config.max_depth is not None else self.md
        self.ub = math.inf
        self.best = None
        self.nodes = 0
        self.value_queries = 0
        self.policy_queries = 0
        self.timed_out = False
        self.history = []
        self.start = time.perf_counter()
        self.deadline = None if config.time_limit is None else self.start + config.time_limit

    def out_of_time(self):
        if self.deadline is not None and time.perf_counter() > self.deadline:
            self.timed_out = True
        return self.timed_out

    def value_of(self, bay):
        self.value_queries += 1
        return max(0.0, self.value(bay))

    def record(self, depth, path):
        self.ub = depth
        self.best = path
        self.history.append((self.nodes, depth))
        if self.cfg.reactive_md:
            self.md = max(1, depth)

    def branches(self, bay, prev, depth):
        """Surviving successors as (move, probability), most likely first, and ``r``."""
        self.policy_queries += 1
        try:
            ranked = masked_policy(self.policy(bay), bay, prev)
        except DeadEnd:
            return [], 0.0
        r = ranked[0][1]
        thr = mp_threshold(self.cfg.mp_variant, self.cfg.p, r, depth, self.md)
        return [(m, p) for m, p in ranked if p >= thr], r

    def result(self, completed, trace=None):
        sol = None if self.best is None and self.ub == math.inf else _unwind(self.best)
        return SearchResult(sol, self.ub, self.nodes, self.value_queries, self.policy_queries,
                            time.perf_counter() - self.start, completed and not self.timed_out,
                            self.timed_out, trace if trace is not None else [], self.history)


def dlts_dfs(root, policy=None, value=None, config=None) -> SearchResult:
    """Depth-first search visiting children in descending policy probability."""
    cfg = config or SearchConfig(strategy="dfs")
    s = _Search(root, policy, value, cfg)

    def visit(bay, depth, prev, path):
        s.nodes += 1
        if is_sorted(bay):
            if depth < s.ub:
                s.record(depth, path)
            return
        if s.out_of_time() or depth >= s.ub or depth >= s.max_depth:
            return
        if value is not None and depth % cfg.k == 0:
            if depth + cfg.d * s.value_of(bay) >= s.ub:
                return
        children, _ = s.branches(bay, prev, depth)
        for m, _p in children:
            # a child at depth ub or deeper cannot improve on the incumbent
            if depth + 1 >= s.ub or s.timed_out:
                break
            visit(apply_move(bay, m), depth + 1, m, (m, path))

    visit(s.root, 0, None, None)
    return s.result(completed=True)


def dlts_lds(root, policy=None, value=None, config=None, record_trace=False) -> SearchResult:
    """Limited discrepancy search driven by a priority queue.

    A child's discrepancy is its parent's plus its rank among the surviving
    branches (or its probability bin when binning is on); nodes shallower
    than ``z`` carry discrepancy 0.
    """
    cfg = config or SearchConfig(strategy="lds")
    s = _Search(root, policy, value, cfg)
    counter = 0
    queue = [(0, 0, counter, s.root, None, None)]
    trace = [] if record_trace else None
    while queue:
        if s.out_of_time():
            break
        disc, negdepth, _, bay, prev, path = heapq.heappop(queue)
        depth = -negdepth
        s.nodes += 1
        if trace is not None:
            trace.append((disc, negdepth))
        if is_sorted(bay):
            if depth < s.ub:
                s.record(depth, path)
            continue
        if depth + 1 >= s.ub or depth >= s.max_depth:
            continue
        if value is not None and depth % cfg.k == 0:
            if depth + cfg.d * s.value_of(bay) >= s.ub:
                continue
        children, r = s.branches(bay, prev, depth)
        for rank, (m, p) in enumerate(children):
            if depth + 1 < cfg.z:
                inc = 0
            elif cfg.binning:
                inc = discrepancy_bin(p, r, cfg.bins)
            else:
                inc = rank
            counter += 1
            heapq.heappush(queue, (disc + inc, negdepth - 1, counter,
                                   apply_move(bay, m), m, (m, path)))
    return s.result(completed=not queue, trace=trace)


def dlts_wbs(root, policy=None, value=None, config=None, record_trace=False) -> SearchResult:
    """Best-first on ``alpha * cost + gamma * d * value``; the policy only limits width."""
    if value is None:
        raise ConfigError("weighted beam search needs a value function")
    cfg = config or SearchConfig(strategy="wbs")
    s = _Search(root, policy, value, cfg)
    counter = 0

    def entry(bay, depth, prev, path):
        h = cfg.d * s.value_of(bay)
        return (cfg.alpha * depth + cfg.gamma * h, -depth, counter, depth + h, bay, prev, path)

    queue = [entry(s.root, 0, None, None)]
    trace = [] if record_trace else None
    while queue:
        if s.out_of_time():
            break
        f, negdepth, _, hlb, bay, prev, path = heapq.heappop(queue)
        depth = -negdepth
        s.nodes += 1
        if trace is not None:
            trace.append((f, negdepth))
        if is_sorted(bay):
            if depth < s.ub:
                s.record(depth, path)
            continue
        if not (depth < s.ub and hlb < s.ub) or depth >= s.max_depth:
            continue
        if depth + 1 >= s.ub:
            continue
        children, _ = s.branches(bay, prev, depth)
        for m, _p in children:
            child = apply_move(bay, m)
            counter += 1
            e = entry(child, depth + 1, m, (m, path))
            if e[3] < s.ub or is_sorted(child):
                heapq.heappush(queue, e)
    return s.result(completed=not queue, trace=trace)


_ENGINES = {"dfs": dlts_dfs, "lds": dlts_lds, "wbs": dlts_wbs}


def solve(root, policy=None, value=None, config=None) -> SearchResult:
    """Run the strategy named in ``config``."""
    cfg = config or SearchConfig()
    return _ENGINES[cfg.strategy](root, policy, value, cfg)
