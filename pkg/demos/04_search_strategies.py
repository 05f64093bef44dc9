# %% [markdown]
# # Three search orders
#
# The policy ranks moves and the pruning threshold drops unlikely ones. The
# threshold depends on depth and on the current maximum depth ``md``.

# %%
from dlts.cpmp import generate_instance
from dlts.oracle import solve_exact
from dlts.search import SearchConfig, UniformPolicy, mp_threshold, solve

for variant in ("constant", "quadratic", "log"):
    print(variant, [round(mp_threshold(variant, 0.4, 0.5, d, 10), 3) for d in (0, 2, 5, 8, 10)])

# %% [markdown]
# To see each engine on its own terms, feed it an exact value function built
# by breadth-first search over all states reachable from the start.

# %%
from collections import deque

from dlts.cpmp import apply_move, is_sorted, legal_moves


def exact_value(root):
    graph, queue = {root: []}, deque([root])
    while queue:
        b = queue.popleft()
        for m in legal_moves(b):
            c = apply_move(b, m)
            if c not in graph:
                graph[c] = []
                queue.append(c)
            graph[b].append(c)
    dist = {b: 0 for b in graph if is_sorted(b)}
    queue = deque(dist)
    while queue:
        b = queue.popleft()
        for c in graph[b]:
            if c not in dist:
                dist[c] = dist[b] + 1
                queue.append(c)
    return lambda bay: float(dist[bay])


inst = generate_instance(3, 4, "G1", 6, seed=4)
value = exact_value(inst.bay)
print(inst.bay)
print("optimal:", solve_exact(inst).length)
for strategy in ("dfs", "lds", "wbs"):
    cfg = SearchConfig(strategy=strategy, p=1.0, mp_variant="constant", time_limit=None)
    res = solve(inst.bay, UniformPolicy(), value, cfg)
    print("%s: %d moves, %d nodes, %d value queries" % (strategy, res.length, res.nodes, res.value_queries))

# %% [markdown]
# With p = 0 only moves tied with the top-ranked one survive. A uniform
# policy ties everything, so nothing is pruned. A policy with a clear favourite
# turns the search into a single greedy rollout.

# %%
import numpy as np

from dlts.encoding import n_moves


def favourite(bay):
    # deterministic preferences that differ from state to state
    rng = np.random.default_rng(hash(bay.stacks) & 0xFFFFFFFF)
    return rng.dirichlet(np.ones(n_moves(bay.n_stacks)))


for name, policy in (("uniform", UniformPolicy()), ("favourite", favourite)):
    res = solve(inst.bay, policy, None, SearchConfig(p=0.0, time_limit=None))
    print("%-9s p=0: %s after %d nodes" % (name, "%d moves" % res.length if res.solved else "no solution", res.nodes))
