# %% [markdown]
# # Bays, moves and the blocking bound
#
# A bay is a tuple of stacks, bottom first. A bay is sorted when no container
# sits on top of a container with a smaller group value.

# %%
from dlts.cpmp import (Bay, Instance, Move, apply_move, blocking_count, format_instance,
                       generate_instance, is_sorted, legal_moves, parse_instance)

bay = Bay(((6, 2, 5), (4, 1), (3,)), tiers=5)
print(bay)
print("sorted:", is_sorted(bay), " blocking containers:", blocking_count(bay))

# %% [markdown]
# Moves take the top container of one stack to another stack with room.
# The undo of the previous move is never offered again.

# %%
moves = legal_moves(bay)
print(len(moves), "legal moves:", moves)
after = apply_move(bay, Move(0, 2))
print(after)
print("without undo:", legal_moves(after, previous=Move(0, 2)))

# %% [markdown]
# Random instances keep the two top tiers empty. G2 places every group twice.

# %%
inst = generate_instance(4, 5, "G2", 8, seed=42, id="demo")
print(inst.bay)
print(inst.bay.groups())
text = format_instance(inst)
print(text)
assert parse_instance(text, id="demo") == inst
