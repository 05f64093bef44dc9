"""Reproducible runs: instance generation, exact labelling, training, DLTS runs,
grid tuning and gap evaluation. Every entry point writes a run manifest.

CSV files carry a ``schema`` column naming their layout and version. Wall-clock
times go to a ``*.timing.csv`` sidecar so the main CSVs are bit-identical
across reruns of the same manifest.
"""

from __future__ import annotations

import csv
import datetime as dt
import glob
import hashlib
import itertools
import json
import logging
import math
import os
import platform
from collections import OrderedDict

import numpy as np

from . import __version__
from .cpmp import CLASSES, generate_instance, read_instance, write_instance
from .errors import ConfigError, EmptyDataset, InfeasibleSpec, ParseError, ShapeMismatch
from .nn import AdamState, WEIGHTS_VERSION, build_network, load_weights, save_weights
from .oracle import batch_solve, read_solution, write_solution
from .search import NetworkPolicy, NetworkValue, SearchConfig, solve
from .training import build_dataset, gap_percent, train

log = logging.getLogger(__name__)

ORACLE_SCHEMA = "oracle/1"
RESULTS_SCHEMA = "dlts-results/1"
LEADERBOARD_SCHEMA = "leaderboard/1"
GAP_SCHEMA = "gap-table/1"

ORACLE_COLUMNS = ["schema", "id", "group", "length", "proven", "nodes"]
RESULTS_COLUMNS = ["schema", "id", "group", "moves", "nodes", "policy_queries", "value_queries", "solved"]

# the default tuning grid; WBS points are dropped when no value model is given
DEFAULT_GRID = OrderedDict([
    ("strategy", ["dfs", "lds", "wbs"]),
    ("mp_variant", ["constant", "quadratic", "log"]),
    ("p", [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
    ("k", [1, 2, 4]),
    ("d", [0.5, 0.75, 0.9, 1.0]),
])


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command, config, seeds=None, inputs=(), outputs=()):
    manifest = OrderedDict(
        command=command,
        config=config,
        seeds=seeds or {},
        inputs={str(p): sha256_file(p) for p in inputs if os.path.isfile(p)},
        outputs=[str(p) for p in outputs],
        versions={"dlts": __version__, "weights_format": WEIGHTS_VERSION,
                  "oracle_csv": ORACLE_SCHEMA, "results_csv": RESULTS_SCHEMA,
                  "python": platform.python_version(), "numpy": np.__version__},
        created=dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path, schema):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for i, row in enumerate(rows):
        if row.get("schema") != schema:
            raise ParseError("expected schema %r, found %r" % (schema, row.get("schema")),
                             line=i + 2, path=path)
    return rows


def _fmt(x):
    if isinstance(x, bool):
        return int(x)
    if isinstance(x, float):
        return repr(x)
    return x


# ---------------------------------------------------------------- generate

def generate(n_stacks, tiers, group_class, count, fill, seed, out_dir):
    """Write ``count`` instance files; ``G123`` cycles through G1, G2, G3."""
    if group_class == "G123":
        classes = CLASSES
    elif group_class in CLASSES:
        classes = (group_class,)
    else:
        raise InfeasibleSpec("unknown class %r" % group_class)
    for c in classes:
        if fill % int(c[1]):
            raise InfeasibleSpec("fill %d is not divisible by %s multiplicity" % (fill, c))
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i in range(count):
        cls = classes[i % len(classes)]
        iid = "%s_%dx%d_%05d" % (cls, n_stacks, tiers, i)
        inst = generate_instance(n_stacks, tiers, cls, fill, seed=[seed, i], id=iid)
        path = os.path.join(out_dir, iid + ".cpmp")
        write_instance(inst, path)
        paths.append(path)
    write_manifest(os.path.join(out_dir, "manifest.json"), "generate",
                   dict(n_stacks=n_stacks, tiers=tiers, group_class=group_class,
                        count=count, fill=fill),
                   seeds={"seed": seed}, outputs=[os.path.basename(p) for p in paths])
    return paths


def list_instances(path):
    """Instance files under a directory (sorted) or a single file."""
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "*.cpmp")))
    else:
        files = [path]
    return files


def load_instances(path):
    return [read_instance(p) for p in list_instances(path)]


# ---------------------------------------------------------------- oracle

def solve_exact_dir(instance_dir, time_limit, out_dir, parallelism=1):
    """Label instances with the exact solver.

    Writes ``solutions/<id>.sol``, ``oracle.csv`` and ``oracle.timing.csv``
    into ``out_dir``. Timed-out instances keep the greedy incumbent and are
    marked ``proven=0``.
    """
    files = list_instances(instance_dir)
    instances = [read_instance(p) for p in files]
    results = batch_solve(instances, time_limit, parallelism)
    sol_dir = os.path.join(out_dir, "solutions")
    os.makedirs(sol_dir, exist_ok=True)
    rows, timing = [], []
    for inst, res in zip(instances, results):
        length = "" if res.solution is None else len(res.solution)
        if res.solution is not None:
            write_solution(res.solution, os.path.join(sol_dir, inst.id + ".sol"), inst.id)
        rows.append([ORACLE_SCHEMA, inst.id, inst.group_class or "", length,
                     int(res.proven_optimal), res.nodes_opened])
        timing.append([inst.id, repr(round(res.wall_time, 6))])
    csv_path = os.path.join(out_dir, "oracle.csv")
    _write_csv(csv_path, ORACLE_COLUMNS, rows)
    _write_csv(os.path.join(out_dir, "oracle.timing.csv"), ["id", "time"], timing)
    write_manifest(os.path.join(out_dir, "oracle.manifest.json"), "solve-exact",
                   dict(instances=str(instance_dir), time_limit=time_limit, parallelism=parallelism),
                   inputs=files, outputs=[csv_path])
    return results


def read_oracle_csv(path):
    """id -> row dict with integer ``length`` (None when unsolved), ``proven``, ``nodes``."""
    out = {}
    for row in _read_csv(path, ORACLE_SCHEMA):
        row = dict(row)
        row["length"] = int(row["length"]) if row["length"] != "" else None
        row["proven"] = bool(int(row["proven"]))
        row["nodes"] = int(row["nodes"])
        out[row["id"]] = row
    return out


def load_labelled(dataset_dir):
    """Instances in ``dataset_dir`` paired with their ``solutions/*.sol`` (None if missing)."""
    files = list_instances(dataset_dir)
    if not files:
        raise EmptyDataset("no instance files in %s" % dataset_dir)
    oracle_csv = os.path.join(dataset_dir, "oracle.csv")
    proven = {}
    if os.path.exists(oracle_csv):
        proven = {k: v["proven"] for k, v in read_oracle_csv(oracle_csv).items()}
    instances, results = [], []
    for p in files:
        inst = read_instance(p)
        sol_path = os.path.join(dataset_dir, "solutions", inst.id + ".sol")
        sol = None
        if os.path.exists(sol_path):
            _, sol = read_solution(sol_path)
        instances.append(inst)
        results.append(_Labelled(sol, proven.get(inst.id, sol is not None)))
    return instances, results


class _Labelled:
    def __init__(self, solution, proven_optimal):
        self.solution = solution
        self.proven_optimal = proven_optimal


# ---------------------------------------------------------------- train

def train_model(dataset_dir, head, out_model, swl=2, nswl=3, local_width=None, dense_width=64,
                lr=0.001, epochs=500, patience=50, minibatch=64, split_ratio=0.8, seed=0,
                checkpoint_dir=None):
    """Build the dataset, train one network, write weights + report CSV + manifest.

    With ``checkpoint_dir`` the weights after every epoch are also saved as
    ``epoch_NNNN.dltsnet``.
    """
    if head not in ("policy", "value"):
        raise ConfigError("head must be 'policy' or 'value'")
    if not os.path.isdir(dataset_dir):
        raise EmptyDataset("dataset directory %s does not exist" % dataset_dir)
    instances, results = load_labelled(dataset_dir)
    data = build_dataset(instances, results, split_ratio=split_ratio, seed=seed)
    if len(data.train) == 0:
        raise EmptyDataset("no training examples in %s" % dataset_dir)
    net = build_network(data.n_stacks, data.tiers, head, swl=swl, nswl=nswl,
                        local_width=local_width, dense_width=dense_width,
                        scale=data.scale, seed=seed)
    on_epoch = None
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)

        def on_epoch(stats, network):
            save_weights(network, os.path.join(checkpoint_dir, "epoch_%04d.dltsnet" % stats.epoch))

    best, report = train(net, data, epochs_max=epochs, patience=patience, minibatch_size=minibatch,
                         adam=AdamState(lr=lr), seed=seed, on_epoch=on_epoch)
    save_weights(best, out_model)
    report_path = os.path.splitext(out_model)[0] + ".report.csv"
    with open(report_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv())
    config = dict(dataset=str(dataset_dir), head=head, swl=swl, nswl=nswl, local_width=local_width,
                  dense_width=dense_width, lr=lr, epochs=epochs, patience=patience,
                  minibatch=minibatch, split_ratio=split_ratio,
                  n_params=best.n_params(), dataset_sha256=data.digest(),
                  n_train=len(data.train), n_validation=len(data.validation),
                  skipped=data.skipped, best_epoch=report.best_epoch, stop_epoch=report.stop_epoch)
    write_manifest(os.path.splitext(out_model)[0] + ".manifest.json", "train", config,
                   seeds={"seed": seed}, outputs=[out_model, report_path])
    return best, report, data


# ---------------------------------------------------------------- search

def load_models(policy_path, value_path=None):
    policy = load_weights(policy_path, head="policy")
    value = None
    if value_path:
        value = load_weights(value_path, head="value")
        if (value.n_stacks, value.tiers) != (policy.n_stacks, policy.tiers):
            raise ShapeMismatch("policy and value models are for different bay sizes")
    return policy, value


def run_dlts(instances, policy_net, value_net, config: SearchConfig):
    """Search every instance; returns a list of SearchResult in input order."""
    if config.strategy == "wbs" and value_net is None:
        raise ConfigError("--strategy wbs requires a value model")
    policy = NetworkPolicy(policy_net)
    value = NetworkValue(value_net) if value_net is not None else None
    return [solve(inst.bay, policy, value, config) for inst in instances]


def solve_dlts_dir(instance_dir, policy_path, value_path, config: SearchConfig, out_csv):
    files = list_instances(instance_dir)
    instances = [read_instance(p) for p in files]
    policy, value = load_models(policy_path, value_path)
    results = run_dlts(instances, policy, value, config)
    _write_results(out_csv, instances, results)
    write_manifest(os.path.splitext(out_csv)[0] + ".manifest.json", "solve-dlts",
                   dict(instances=str(instance_dir), policy=str(policy_path),
                        value=str(value_path) if value_path else None, search=config.to_dict()),
                   inputs=files + [policy_path] + ([value_path] if value_path else []),
                   outputs=[out_csv])
    return instances, results


def _write_results(out_csv, instances, results):
    rows, timing = [], []
    for inst, res in zip(instances, results):
        rows.append([RESULTS_SCHEMA, inst.id, inst.group_class or "",
                     "" if res.solution is None else len(res.solution),
                     res.nodes, res.policy_queries, res.value_queries, int(res.solved)])
        timing.append([inst.id, repr(round(res.wall_time, 6)), int(res.timed_out)])
    _write_csv(out_csv, RESULTS_COLUMNS, rows)
    _write_csv(os.path.splitext(out_csv)[0] + ".timing.csv", ["id", "time", "timed_out"], timing)


# ---------------------------------------------------------------- tune

def expand_grid(grid, has_value=True):
    """Cartesian product of ``grid`` (name -> list); returns SearchConfig kwargs dicts."""
    names = list(grid)
    points = []
    seen = set()
    for combo in itertools.product(*(grid[n] for n in names)):
        point = dict(zip(names, combo))
        if point.get("strategy") == "wbs" and not has_value:
            continue
        if not has_value:
            # k and d only matter with a value model; collapse duplicates
            point.pop("k", None)
            point.pop("d", None)
        key = json.dumps(point, sort_keys=True)
        if key in seen:
            continue
        seen.add(key)
        points.append(point)
    return points


def tune(instance_dir, oracle_csv, policy_path, value_path, grid, out_dir, base=None):
    """Grid search over search configurations by gap to the oracle.

    The leaderboard is ordered by gap, then total opened nodes (a
    deterministic stand-in for run time), then grid order. Configurations
    leaving instances unsolved rank after every configuration that solves them all.
    """
    files = list_instances(instance_dir)
    instances = [read_instance(p) for p in files]
    oracle = read_oracle_csv(oracle_csv)
    lengths = []
    for inst in instances:
        row = oracle.get(inst.id)
        if row is None or row["length"] is None:
            raise ConfigError("oracle CSV has no length for instance %r" % inst.id)
        lengths.append(row["length"])
    policy, value = load_models(policy_path, value_path)
    base = dict(base or {})
    points = expand_grid(grid, has_value=value is not None)
    if not points:
        raise ConfigError("empty tuning grid")
    board = []
    for order, point in enumerate(points):
        cfg = SearchConfig.from_dict({**base, **point})
        results = run_dlts(instances, policy, value, cfg)
        moves = sum(len(r.solution) for r in results if r.solution is not None)
        opt = sum(l for r, l in zip(results, lengths) if r.solution is not None)
        unsolved = sum(1 for r in results if r.solution is None)
        nodes = sum(r.nodes for r in results)
        secs = sum(r.wall_time for r in results)
        board.append(dict(order=order, config=cfg, gap=gap_percent(moves, opt), unsolved=unsolved,
                          nodes=nodes, time=secs, moves=moves, optimal=opt))
        log.info("tune %d/%d %s gap=%.3f unsolved=%d nodes=%d", order + 1, len(points), point,
                 board[-1]["gap"], unsolved, nodes)
    board.sort(key=lambda e: (e["unsolved"] > 0, e["gap"], e["nodes"], e["order"]))
    os.makedirs(out_dir, exist_ok=True)
    keys = list(SearchConfig().to_dict())
    rows = []
    for i, e in enumerate(board):
        cfg = e["config"].to_dict()
        rows.append([LEADERBOARD_SCHEMA, i + 1, _fmt(e["gap"]), e["unsolved"], e["moves"], e["optimal"],
                     e["nodes"]] + ["" if cfg[k] is None else _fmt(cfg[k]) for k in keys])
    lb_path = os.path.join(out_dir, "leaderboard.csv")
    _write_csv(lb_path, ["schema", "rank", "gap", "unsolved", "moves", "optimal", "nodes"] + keys, rows)
    _write_csv(os.path.join(out_dir, "leaderboard.timing.csv"), ["rank", "time"],
               [[i + 1, repr(round(e["time"], 6))] for i, e in enumerate(board)])
    best = board[0]["config"]
    best_path = os.path.join(out_dir, "best_config.json")
    with open(best_path, "w", encoding="utf-8") as fh:
        json.dump(best.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(os.path.join(out_dir, "tune.manifest.json"), "tune",
                   dict(instances=str(instance_dir), oracle=str(oracle_csv), policy=str(policy_path),
                        value=str(value_path) if value_path else None, grid=grid, base=base),
                   inputs=files + [oracle_csv, policy_path] + ([value_path] if value_path else []),
                   outputs=[lb_path, best_path])
    return best, board


_INT_FIELDS = {"k", "bins", "z", "md0", "max_depth"}
_BOOL_FIELDS = {"reactive_md", "binning"}
_STR_FIELDS = {"strategy", "mp_variant"}


def read_leaderboard(path):
    """Leaderboard rows in rank order, each with its ``SearchConfig`` under ``config``."""
    out = []
    for row in _read_csv(path, LEADERBOARD_SCHEMA):
        kw = {}
        for name in SearchConfig().to_dict():
            raw = row[name]
            if raw == "":
                kw[name] = None
            elif name in _STR_FIELDS:
                kw[name] = raw
            elif name in _BOOL_FIELDS:
                kw[name] = raw == "1"
            elif name in _INT_FIELDS:
                kw[name] = int(raw)
            else:
                kw[name] = float(raw)
        out.append(dict(rank=int(row["rank"]), gap=float(row["gap"]), unsolved=int(row["unsolved"]),
                        nodes=int(row["nodes"]), config=SearchConfig(**kw)))
    return out


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return SearchConfig.from_dict(json.load(fh))


# ---------------------------------------------------------------- evaluate

def evaluate(results_csv, oracle_csv):
    """Gap per instance group plus a combined row.

    Returns a list of dicts (group, instances, unsolved, dlts_moves,
    optimal_moves, gap). Raises ConfigError naming any result id missing from
    the oracle CSV.
    """
    results = _read_csv(results_csv, RESULTS_SCHEMA)
    oracle = read_oracle_csv(oracle_csv)
    groups = OrderedDict()
    for row in results:
        iid = row["id"]
        if iid not in oracle or oracle[iid]["length"] is None:
            raise ConfigError("no oracle length for instance %r" % iid)
        g = row["group"] or "?"
        acc = groups.setdefault(g, dict(instances=0, unsolved=0, dlts=0, opt=0))
        acc["instances"] += 1
        if row["solved"] != "1":
            acc["unsolved"] += 1
            continue
        acc["dlts"] += int(row["moves"])
        acc["opt"] += oracle[iid]["length"]
    table = []
    for g in sorted(groups):
        a = groups[g]
        table.append(dict(group=g, instances=a["instances"], unsolved=a["unsolved"],
                          dlts_moves=a["dlts"], optimal_moves=a["opt"], gap=gap_percent(a["dlts"], a["opt"])))
    tot = dict(instances=0, unsolved=0, dlts=0, opt=0)
    for a in groups.values():
        for k in tot:
            tot[k] += a[k]
    table.append(dict(group="all", instances=tot["instances"], unsolved=tot["unsolved"],
                      dlts_moves=tot["dlts"], optimal_moves=tot["opt"],
                      gap=gap_percent(tot["dlts"], tot["opt"])))
    return table


def write_gap_table(table, path):
    _write_csv(path, ["schema", "group", "instances", "unsolved", "dlts_moves", "optimal_moves", "gap"],
               [[GAP_SCHEMA, r["group"], r["instances"], r["unsolved"], r["dlts_moves"],
                 r["optimal_moves"], _fmt(r["gap"])] for r in table])
