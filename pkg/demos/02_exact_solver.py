# %% [markdown]
# # Exact solutions
#
# The exact solver deepens a bound on the number of moves, starting at the
# blocking count, and prunes any node whose blocking count cannot fit in the
# remaining budget. These solutions become the training labels.

# %%
import time

import numpy as np

from dlts.cpmp import blocking_count, generate_instance, replay
from dlts.oracle import format_solution, solve_exact

lengths, nodes = [], []
t = time.perf_counter()
for seed in range(20):
    inst = generate_instance(4, 5, "G1", 10, seed=seed, id="g%02d" % seed)
    res = solve_exact(inst, time_limit=30)
    assert res.proven_optimal and res.length >= blocking_count(inst.bay)
    lengths.append(res.length)
    nodes.append(res.nodes_opened)
print("solved 20 instances in %.1fs" % (time.perf_counter() - t))
print("lengths:", lengths)
print("median nodes: %d, max nodes: %d" % (np.median(nodes), max(nodes)))

# %% [markdown]
# A solution replays to a sorted bay. With a time limit too short to prove
# optimality, the solver returns its best sequence and says so. If even the
# greedy incumbent did not finish, the solution is None.

# %%
inst = generate_instance(4, 5, "G1", 12, seed=9, id="hard")
quick = solve_exact(inst, time_limit=0.5)
print("proven:", quick.proven_optimal, "length:", quick.length)
if quick.solution is not None:
    print(replay(inst.bay, quick.solution.moves))
    print(format_solution(quick.solution, inst.id))
