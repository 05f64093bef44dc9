# %% [markdown]
# # Desk-scale run on 4x5 bays
#
# 5000 labelled training instances, 100 held-out test instances, both
# networks, a tuning grid and the final gap. The first run takes a couple of
# hours on one core. Later runs reuse everything under ``artifacts/desk``.

# %%
import json
import sys

from dlts.desk import DeskConfig, run

root = sys.argv[1] if len(sys.argv) > 1 else "artifacts/desk"
summary = run(DeskConfig(root=root))

# %%
print("policy validation accuracy: %.3f" % summary["policy"]["val_accuracy"])
print("value validation MAE:       %.3f" % summary["value"]["val_mae"])
print("tuned search:", json.dumps(summary["tuned"]))
print("test gap: %.2f%% (%d unsolved)" % (summary["test"]["gap"], summary["test"]["unsolved"]))

# %% [markdown]
# On instances the exact solver needs many nodes for, the learned search
# opens far fewer.

# %%
eff = summary["efficiency"]
print("%d hard instances: oracle %.0f nodes, DLTS-DFS %.0f nodes (ratio %.0f)"
      % (eff["instances"], eff["oracle_mean_nodes"], eff["dlts_mean_nodes"], eff["ratio"]))
cce = summary["cce_check"]
print("best-CCE checkpoint gap %.2f%%, worst-CCE checkpoint gap %.2f%%" % (cce["best_gap"], cce["worst_gap"]))
