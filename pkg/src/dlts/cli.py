"""Command-line interface: ``dlts <command> ...``.

Commands: generate, solve-exact, train, solve-dlts, tune, evaluate. Any
command accepts ``--config FILE`` (JSON object keyed by option name, dashes
or underscores) whose values override the command-line flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import bench
from .errors import ConfigError, DLTSError
from .search import SearchConfig

log = logging.getLogger("dlts")


def _add_search_flags(p, with_strategy=True):
    if with_strategy:
        p.add_argument("--strategy", choices=["dfs", "lds", "wbs"], default="dfs")
    p.add_argument("--prune", dest="mp_variant", choices=["constant", "quadratic", "log"], default="log",
                   help="branch pruning function")
    p.add_argument("--p", type=float, default=0.4, help="branch pruning adjustment in [0,1]")
    p.add_argument("--k", type=int, default=1, help="query the value model every k levels")
    p.add_argument("--d", type=float, default=1.0, help="value bound deflation in [0,1]")
    p.add_argument("--binning", action="store_true", help="LDS: bin discrepancies by probability")
    p.add_argument("--bins", type=int, default=1)
    p.add_argument("--z", type=int, default=0, help="LDS: depth from which discrepancies count")
    p.add_argument("--alpha", type=float, default=1.0, help="WBS cost weight")
    p.add_argument("--gamma", type=float, default=1.0, help="WBS value weight")
    p.add_argument("--time-limit", type=float, default=60.0, help="seconds per instance")
    p.add_argument("--md0", type=int, default=None, help="initial maximum depth (default 2 x containers)")
    p.add_argument("--static-md", dest="reactive_md", action="store_false",
                   help="keep md fixed instead of tightening it at each new best solution")


def _search_config(args, strategy=None):
    return SearchConfig(
        strategy=strategy or args.strategy, k=args.k, d=args.d, p=args.p, mp_variant=args.mp_variant,
        reactive_md=args.reactive_md, binning=args.binning, bins=args.bins, z=args.z,
        alpha=args.alpha, gamma=args.gamma, time_limit=args.time_limit, md0=args.md0)


def build_parser():
    parser = argparse.ArgumentParser(prog="dlts", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON file whose values override flags")
        return p

    p = command("generate", "write random instance files")
    p.add_argument("--stacks", type=int, required=True)
    p.add_argument("--tiers", type=int, required=True)
    p.add_argument("--class", dest="group_class", default="G1", choices=["G1", "G2", "G3", "G123"])
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--fill", type=int, required=True, help="containers per instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = command("solve-exact", "label instances with the exact solver")
    p.add_argument("instances", help="instance file or directory")
    p.add_argument("--time-limit", type=float, default=600.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")

    p = command("train", "train a policy or value network")
    p.add_argument("dataset", help="directory with instances, solutions/ and oracle.csv")
    p.add_argument("--head", choices=["policy", "value"], required=True)
    p.add_argument("--swl", type=int, default=2, help="per-stack (locally connected) layers")
    p.add_argument("--nswl", type=int, default=3, help="dense layers, output layer included")
    p.add_argument("--local-width", type=int, default=None)
    p.add_argument("--dense-width", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--split", type=float, default=0.8, help="fraction of instances used for training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoints", default=None, help="directory for per-epoch weights")
    p.add_argument("--out", required=True, help="weights file")

    p = command("solve-dlts", "solve instances with the learned tree search")
    p.add_argument("instances")
    p.add_argument("--policy", required=True)
    p.add_argument("--value", default=None)
    p.add_argument("--search-config", default=None, help="JSON search config (e.g. from tune)")
    _add_search_flags(p)
    p.add_argument("--out", required=True, help="results CSV")

    p = command("tune", "grid-search search configurations")
    p.add_argument("instances")
    p.add_argument("--oracle", required=True, help="oracle CSV for the instances")
    p.add_argument("--policy", required=True)
    p.add_argument("--value", default=None)
    p.add_argument("--grid", default=None, help="JSON object: option -> list of values")
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("--out", required=True, help="output directory")

    p = command("evaluate", "gap table of DLTS results against the oracle")
    p.add_argument("results")
    p.add_argument("--oracle", required=True)
    p.add_argument("--out", default=None, help="write the table as CSV")
    return parser


def _apply_config_file(parser, args):
    if not getattr(args, "config", None):
        return args
    with open(args.config, encoding="utf-8") as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise ConfigError("config file must hold a JSON object")
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest == "prune":
            dest = "mp_variant"
        if dest == "class":
            dest = "group_class"
        if not hasattr(args, dest) or dest in ("command", "config"):
            raise ConfigError("unknown option %r in %s" % (key, args.config))
        setattr(args, dest, value)
    return args


def run(args):
    cmd = args.command
    if cmd == "generate":
        paths = bench.generate(args.stacks, args.tiers, args.group_class, args.count, args.fill,
                               args.seed, args.out)
        print("wrote %d instances to %s" % (len(paths), args.out))
    elif cmd == "solve-exact":
        results = bench.solve_exact_dir(args.instances, args.time_limit, args.out, args.jobs)
        proven = sum(r.proven_optimal for r in results)
        print("solved %d instances (%d proven optimal)" % (len(results), proven))
    elif cmd == "train":
        best, report, data = bench.train_model(
            args.dataset, args.head, args.out, swl=args.swl, nswl=args.nswl,
            local_width=args.local_width, dense_width=args.dense_width, lr=args.lr,
            epochs=args.epochs, patience=args.patience, minibatch=args.batch,
            split_ratio=args.split, seed=args.seed, checkpoint_dir=args.checkpoints)
        b = report.best
        metric = "accuracy" if args.head == "policy" else "MAE"
        print("parameters: %d" % best.n_params())
        print("examples: %d train / %d validation" % (len(data.train), len(data.validation)))
        print("best epoch %d of %d: val loss %.4f, %s %.4f"
              % (report.best_epoch, report.stop_epoch, b.val_loss, metric, b.val_metric))
    elif cmd == "solve-dlts":
        if args.search_config:
            cfg = bench.load_config(args.search_config)
        else:
            cfg = _search_config(args)
        if cfg.strategy == "wbs" and not args.value:
            raise ConfigError("--strategy wbs requires --value")
        instances, results = bench.solve_dlts_dir(args.instances, args.policy, args.value, cfg, args.out)
        solved = sum(r.solved for r in results)
        print("solved %d/%d instances, results in %s" % (solved, len(results), args.out))
    elif cmd == "tune":
        if args.grid:
            with open(args.grid, encoding="utf-8") as fh:
                grid = json.load(fh)
        else:
            grid = dict(bench.DEFAULT_GRID)
        best, board = bench.tune(args.instances, args.oracle, args.policy, args.value, grid, args.out,
                                 base={"time_limit": args.time_limit})
        print("best of %d configurations: gap %.3f%% %s"
              % (len(board), board[0]["gap"], json.dumps(best.to_dict(), sort_keys=True)))
    elif cmd == "evaluate":
        table = bench.evaluate(args.results, args.oracle)
        if args.out:
            bench.write_gap_table(table, args.out)
        print("%-6s %9s %8s %10s %10s %8s" % ("group", "instances", "unsolved", "dlts", "optimal", "gap%"))
        for r in table:
            print("%-6s %9d %8d %10d %10d %8.3f" % (r["group"], r["instances"], r["unsolved"],
                                                   r["dlts_moves"], r["optimal_moves"], r["gap"]))
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_config_file(parser, args)
        return run(args)
    except (DLTSError, OSError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
