# %% [markdown]
# # The whole loop on 3x4 bays
#
# Generate, label, train, tune and evaluate in a scratch directory. Each step
# mirrors one ``dlts`` subcommand, shown in the comments.

# %%
import json
import os
import tempfile

from dlts import bench

work = tempfile.mkdtemp(prefix="dlts-demo-")
train_dir, test_dir = os.path.join(work, "train"), os.path.join(work, "test")

# dlts generate --stacks 3 --tiers 4 --class G1 --count 300 --fill 6 --seed 1 --out train
bench.generate(3, 4, "G1", 300, 6, 1, train_dir)
bench.generate(3, 4, "G1", 30, 6, 2, test_dir)
# dlts solve-exact train --out train
bench.solve_exact_dir(train_dir, 30, train_dir)
bench.solve_exact_dir(test_dir, 30, test_dir)

# %%
# dlts train train --head policy --out policy.dltsnet
models = {}
for head in ("policy", "value"):
    models[head] = os.path.join(work, head + ".dltsnet")
    best, report, data = bench.train_model(train_dir, head, models[head], swl=1, nswl=2,
                                           dense_width=32, epochs=40, patience=10, seed=0)
    print(head, "best epoch", report.best_epoch, "validation", report.best)

# %%
# dlts tune test --oracle test/oracle.csv --policy ... --value ... --grid grid.json --out tune
grid = {"strategy": ["dfs", "lds", "wbs"], "p": [0.2, 0.5], "mp_variant": ["log", "constant"]}
best, board = bench.tune(test_dir, os.path.join(test_dir, "oracle.csv"), models["policy"],
                         models["value"], grid, os.path.join(work, "tune"), base={"time_limit": 5})
for entry in board[:5]:
    print("%.2f%%  %6d nodes  %s" % (entry["gap"], entry["nodes"], entry["config"].strategy))
print(json.dumps(best.to_dict()))

# %%
# dlts solve-dlts test --policy ... --value ... --search-config tune/best_config.json --out results.csv
results = os.path.join(work, "results.csv")
bench.solve_dlts_dir(test_dir, models["policy"], models["value"], best, results)
# dlts evaluate results.csv --oracle test/oracle.csv
for row in bench.evaluate(results, os.path.join(test_dir, "oracle.csv")):
    print(row)
