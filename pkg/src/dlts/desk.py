"""Desk-scale end-to-end run: label, train, tune, then evaluate on held-out instances.

Every stage writes its outputs under one root directory and is skipped when
those outputs already exist, so an interrupted run resumes where it stopped
and a finished run can be re-read cheaply. The final numbers are collected
in ``summary.json``.

    python3 -m dlts.desk --root artifacts/desk
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bench
from .cpmp import read_instance
from .nn import load_weights
from .search import NetworkPolicy, SearchConfig, solve
from .training import gap_percent

log = logging.getLogger(__name__)

DESK_GRID = {
    "strategy": ["dfs", "lds", "wbs"],
    "mp_variant": ["constant", "quadratic", "log"],
    "p": [0.2, 0.4, 0.6],
    "d": [0.75, 1.0],
}


@dataclass
class DeskConfig:
    root: str = "artifacts/desk"
    stacks: int = 4
    tiers: int = 5
    fill: int = 12
    group_class: str = "G1"
    n_train: int = 5000
    n_test: int = 100
    train_seed: int = 1
    test_seed: int = 2
    train_oracle_limit: float = 60.0
    test_oracle_limit: float = 600.0
    swl: int = 2
    nswl: int = 3
    local_width: int = None
    dense_width: int = 64
    lr: float = 1e-3
    epochs: int = 500
    patience: int = 50
    minibatch: int = 64
    seed: int = 0
    tune_instances: int = 50
    tune_time_limit: float = 10.0
    grid: dict = field(default_factory=lambda: dict(DESK_GRID))
    time_limit: float = 60.0
    cce_instances: int = 50
    cce_time_limit: float = 10.0
    hard_nodes: int = 100000

    def path(self, *parts):
        return os.path.join(self.root, *parts)


def _done(*paths):
    return all(os.path.exists(p) for p in paths)


def label(cfg, split):
    """Generate and exactly solve the train or test instances."""
    n, seed, limit = ((cfg.n_train, cfg.train_seed, cfg.train_oracle_limit) if split == "train"
                      else (cfg.n_test, cfg.test_seed, cfg.test_oracle_limit))
    d = cfg.path(split)
    if _done(os.path.join(d, "oracle.csv")) and len(bench.list_instances(d)) == n:
        return
    log.info("labelling %d %s instances", n, split)
    bench.generate(cfg.stacks, cfg.tiers, cfg.group_class, n, cfg.fill, seed, d)
    bench.solve_exact_dir(d, limit, d)


def train_heads(cfg):
    """Train the policy (with per-epoch checkpoints) and value networks."""
    for head in ("policy", "value"):
        out = cfg.path("models", head + ".dltsnet")
        if _done(out, cfg.path("models", "validation_ids.txt")):
            continue
        os.makedirs(cfg.path("models"), exist_ok=True)
        ckpt = cfg.path("models", "checkpoints") if head == "policy" else None
        _, _, data = bench.train_model(
            cfg.path("train"), head, out, swl=cfg.swl, nswl=cfg.nswl, local_width=cfg.local_width,
            dense_width=cfg.dense_width, lr=cfg.lr, epochs=cfg.epochs, patience=cfg.patience,
            minibatch=cfg.minibatch, seed=cfg.seed, checkpoint_dir=ckpt)
        ids = sorted(i for i, (tag, _) in data.provenance.items() if tag == "validation")
        with open(cfg.path("models", "validation_ids.txt"), "w") as fh:
            fh.write("\n".join(ids) + "\n")


def validation_subset(cfg, n):
    with open(cfg.path("models", "validation_ids.txt")) as fh:
        ids = [line.strip() for line in fh if line.strip()]
    return ids[:n]


def _subset_dir(cfg, name, ids):
    """Copy instances ``ids`` from the train directory with a matching oracle CSV."""
    d = cfg.path(name)
    if _done(os.path.join(d, "oracle.csv")):
        return d
    os.makedirs(d, exist_ok=True)
    for iid in ids:
        shutil.copy(cfg.path("train", iid + ".cpmp"), d)
    with open(cfg.path("train", "oracle.csv"), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        keep = [row for row in reader if row[1] in set(ids)]
    with open(os.path.join(d, "oracle.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(keep)
    return d


def tune(cfg):
    out = cfg.path("tune")
    if _done(os.path.join(out, "best_config.json")):
        return
    d = _subset_dir(cfg, "tune_instances", validation_subset(cfg, cfg.tune_instances))
    bench.tune(d, os.path.join(d, "oracle.csv"), cfg.path("models", "policy.dltsnet"),
               cfg.path("models", "value.dltsnet"), cfg.grid, out,
               base={"time_limit": cfg.tune_time_limit})


def best_dfs_config(cfg):
    """Highest-ranked depth-first configuration on the leaderboard."""
    for row in bench.read_leaderboard(cfg.path("tune", "leaderboard.csv")):
        if row["config"].strategy == "dfs":
            row["config"].time_limit = cfg.time_limit
            return row["config"]
    return None


def evaluate_test(cfg):
    """Run the tuned configuration on the held-out instances and compute the gap table."""
    out = cfg.path("results", "test.csv")
    if not _done(out):
        os.makedirs(cfg.path("results"), exist_ok=True)
        best = bench.load_config(cfg.path("tune", "best_config.json"))
        best.time_limit = cfg.time_limit
        value = cfg.path("models", "value.dltsnet")
        bench.solve_dlts_dir(cfg.path("test"), cfg.path("models", "policy.dltsnet"), value, best, out)
    return bench.evaluate(out, cfg.path("test", "oracle.csv"))


def efficiency(cfg):
    """Mean opened nodes of the oracle versus tuned DLTS-DFS on oracle-hard test instances."""
    out = cfg.path("results", "efficiency.csv")
    oracle = bench.read_oracle_csv(cfg.path("test", "oracle.csv"))
    hard = sorted(i for i, r in oracle.items() if r["nodes"] >= cfg.hard_nodes)
    if not hard:
        return dict(instances=0)
    dfs = best_dfs_config(cfg)
    if not _done(out):
        policy, value = bench.load_models(cfg.path("models", "policy.dltsnet"), cfg.path("models", "value.dltsnet"))
        instances = [read_instance(cfg.path("test", i + ".cpmp")) for i in hard]
        results = bench.run_dlts(instances, policy, value, dfs)
        bench._write_results(out, instances, results)
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    oracle_nodes = [oracle[r["id"]]["nodes"] for r in rows]
    dlts_nodes = [int(r["nodes"]) for r in rows]
    return dict(instances=len(rows), config=dfs.to_dict(),
                oracle_mean_nodes=float(np.mean(oracle_nodes)), dlts_mean_nodes=float(np.mean(dlts_nodes)),
                ratio=float(np.mean(oracle_nodes) / max(np.mean(dlts_nodes), 1.0)),
                solved=sum(r["solved"] == "1" for r in rows))


def cce_check(cfg):
    """Gap of the best- and worst-validation-CCE policy checkpoints on the same instances.

    Both run depth-first with Log pruning and no value network. The gap is
    taken over instances both checkpoints solve so the totals compare the
    same instances.
    """
    out = cfg.path("results", "cce_check.json")
    if _done(out):
        with open(out) as fh:
            return json.load(fh)
    with open(cfg.path("models", "policy.report.csv"), newline="") as fh:
        report = list(csv.DictReader(fh))
    losses = {int(r["epoch"]): float(r["val_loss"]) for r in report}
    best_epoch = min(losses, key=lambda e: (losses[e], e))
    worst_epoch = max(losses, key=lambda e: (losses[e], -e))
    ids = validation_subset(cfg, cfg.cce_instances)
    instances = [read_instance(cfg.path("train", i + ".cpmp")) for i in ids]
    oracle = bench.read_oracle_csv(cfg.path("train", "oracle.csv"))
    search = SearchConfig(strategy="dfs", mp_variant="log", p=0.4, time_limit=cfg.cce_time_limit)
    lengths = {}
    for tag, epoch in (("best", best_epoch), ("worst", worst_epoch)):
        net = load_weights(cfg.path("models", "checkpoints", "epoch_%04d.dltsnet" % epoch), head="policy")
        policy = NetworkPolicy(net)
        lengths[tag] = [solve(inst.bay, policy, None, search).length for inst in instances]
    both = [j for j in range(len(ids)) if lengths["best"][j] is not None and lengths["worst"][j] is not None]
    opt = sum(oracle[ids[j]]["length"] for j in both)
    result = dict(best_epoch=best_epoch, worst_epoch=worst_epoch,
                  best_cce=losses[best_epoch], worst_cce=losses[worst_epoch],
                  compared=len(both),
                  best_unsolved=sum(x is None for x in lengths["best"]),
                  worst_unsolved=sum(x is None for x in lengths["worst"]),
                  best_gap=gap_percent(sum(lengths["best"][j] for j in both), opt),
                  worst_gap=gap_percent(sum(lengths["worst"][j] for j in both), opt))
    with open(out, "w") as fh:
        json.dump(result, fh, indent=2)
    return result


def _report_row(path, epoch):
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if int(row["epoch"]) == epoch:
                return row
    raise ValueError("epoch %d not in %s" % (epoch, path))


def _oracle_seconds(d):
    with open(os.path.join(d, "oracle.timing.csv"), newline="") as fh:
        return sum(float(r["time"]) for r in csv.DictReader(fh))


def _stage_done(cfg, name):
    markers = {
        "label_test": [cfg.path("test", "oracle.csv")],
        "label_train": [cfg.path("train", "oracle.csv")],
        "train": [cfg.path("models", "policy.dltsnet"), cfg.path("models", "value.dltsnet")],
        "tune": [cfg.path("tune", "best_config.json")],
        "evaluate": [cfg.path("results", "test.csv")],
        "efficiency": [cfg.path("results", "efficiency.csv")],
        "cce_check": [cfg.path("results", "cce_check.json")],
    }
    return _done(*markers[name])


def _total_seconds(cfg, stages):
    """Recorded stage times; labelling falls back to summed oracle times if it ran elsewhere."""
    total = 0.0
    for name, split in (("label_test", "test"), ("label_train", "train")):
        total += stages.get(name, _oracle_seconds(cfg.path(split)))
    return total + sum(v for k, v in stages.items() if not k.startswith("label_"))


def run(cfg: DeskConfig = None):
    """Run (or resume) every stage and return the summary dict.

    ``stage_seconds.json`` keeps the time each stage took when it was
    actually computed, so resumed runs still report the full cost.
    """
    cfg = cfg or DeskConfig()
    os.makedirs(cfg.root, exist_ok=True)
    times_path = cfg.path("stage_seconds.json")
    stages = {}
    if os.path.exists(times_path):
        with open(times_path) as fh:
            stages = json.load(fh)
    results = {}
    for name, fn in (("label_test", lambda: label(cfg, "test")),
                     ("label_train", lambda: label(cfg, "train")),
                     ("train", lambda: train_heads(cfg)),
                     ("tune", lambda: tune(cfg)),
                     ("evaluate", lambda: evaluate_test(cfg)),
                     ("efficiency", lambda: efficiency(cfg)),
                     ("cce_check", lambda: cce_check(cfg))):
        cached = _stage_done(cfg, name)
        t = time.perf_counter()
        results[name] = fn()
        if not cached:
            stages[name] = time.perf_counter() - t
            with open(times_path, "w") as fh:
                json.dump(stages, fh, indent=2)
    table, eff, cce = results["evaluate"], results["efficiency"], results["cce_check"]

    pol_manifest = json.load(open(cfg.path("models", "policy.manifest.json")))["config"]
    val_manifest = json.load(open(cfg.path("models", "value.manifest.json")))["config"]
    pol = _report_row(cfg.path("models", "policy.report.csv"), pol_manifest["best_epoch"])
    val = _report_row(cfg.path("models", "value.report.csv"), val_manifest["best_epoch"])
    summary = dict(
        config={k: v for k, v in asdict(cfg).items()},
        policy=dict(best_epoch=pol_manifest["best_epoch"], stop_epoch=pol_manifest["stop_epoch"],
                    n_train=pol_manifest["n_train"], n_validation=pol_manifest["n_validation"],
                    n_params=pol_manifest["n_params"], val_cce=float(pol["val_loss"]),
                    val_accuracy=float(pol["val_accuracy"])),
        value=dict(best_epoch=val_manifest["best_epoch"], stop_epoch=val_manifest["stop_epoch"],
                   val_mse=float(val["val_loss"]), val_mae=float(val["val_mae"])),
        tuned=bench.load_config(cfg.path("tune", "best_config.json")).to_dict(),
        test=table[-1],
        efficiency=eff,
        cce_check=cce,
        oracle_seconds=dict(train=_oracle_seconds(cfg.path("train")), test=_oracle_seconds(cfg.path("test"))),
        stage_seconds=stages,
        total_seconds=_total_seconds(cfg, stages),
    )
    with open(cfg.path("summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--root", default=DeskConfig.root)
    parser.add_argument("--config", help="JSON object overriding DeskConfig fields")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    overrides = {}
    if args.config:
        with open(args.config) as fh:
            overrides = json.load(fh)
    summary = run(DeskConfig(root=args.root, **overrides))
    print(json.dumps({k: summary[k] for k in ("policy", "test", "efficiency", "cce_check")}, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
