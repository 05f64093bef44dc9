"""Dataset construction, supervised training with early stopping, and DLTS validation."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cpmp import apply_move, legal_moves
from .encoding import extract_examples, move_index, n_moves
from .errors import EmptyDataset, ShapeMismatch
from .nn import AdamState, Network, backward_and_step, loss_cce, loss_mse
from .search import NetworkPolicy, NetworkValue, SearchConfig, solve

log = logging.getLogger(__name__)

SPLITS = ("train", "validation")


@dataclass
class Split:
    """Stacked examples of one split; row ``j`` of every array is one pre-move state."""

    inputs: np.ndarray
    policy_targets: np.ndarray
    value_targets: np.ndarray
    legal_mask: np.ndarray  # legal moves after excluding the undo of the previous move
    instance_ids: list

    def __len__(self):
        return self.inputs.shape[0]

    def targets(self, head):
        return self.policy_targets if head == "policy" else self.value_targets


@dataclass
class Dataset:
    n_stacks: int
    tiers: int
    scale: float
    train: Split
    validation: Split
    skipped: int = 0
    provenance: dict = field(default_factory=dict)  # instance id -> (split, proven_optimal)

    def digest(self):
        h = hashlib.sha256()
        for split in (self.train, self.validation):
            for arr in (split.inputs, split.policy_targets, split.value_targets):
                h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            h.update("|".join(split.instance_ids).encode())
        return h.hexdigest()


def _empty_split(S, T):
    return Split(np.zeros((0, S * T)), np.zeros((0, n_moves(S))), np.zeros(0),
                 np.zeros((0, n_moves(S)), dtype=bool), [])


def _make_split(pairs, S, T, scale):
    X, P, V, M, ids = [], [], [], [], []
    for inst, sol in pairs:
        pol, val = extract_examples(inst, sol, scale)
        bay, prev = inst.bay, None
        for ex_p, ex_v, m in zip(pol, val, sol.moves):
            X.append(ex_p.input)
            P.append(ex_p.target)
            V.append(ex_v.target)
            mask = np.zeros(n_moves(S), dtype=bool)
            for lm in legal_moves(bay, prev):
                mask[move_index(lm, S)] = True
            M.append(mask)
            ids.append(inst.id)
            bay, prev = apply_move(bay, m), m
    if not X:
        return _empty_split(S, T)
    return Split(np.array(X), np.array(P), np.array(V), np.array(M), ids)


def build_dataset(instances, oracle_results, split_ratio=0.8, seed=0, scale=None) -> Dataset:
    """Extract examples from solved instances and split them by instance.

    Instances whose result carries no solution are skipped and counted.
    ``scale`` defaults to the largest group value over all instances.
    """
    instances = list(instances)
    oracle_results = list(oracle_results)
    if len(instances) != len(oracle_results):
        raise ValueError("got %d instances but %d oracle results" % (len(instances), len(oracle_results)))
    if not instances:
        raise EmptyDataset("no instances given")
    S, T = instances[0].bay.n_stacks, instances[0].bay.tiers
    solved, skipped = [], 0
    for inst, res in zip(instances, oracle_results):
        if (inst.bay.n_stacks, inst.bay.tiers) != (S, T):
            raise ShapeMismatch("instance %r is %dx%d, dataset is %dx%d"
                                % (inst.id, inst.bay.n_stacks, inst.bay.tiers, S, T))
        sol = getattr(res, "solution", res)
        if sol is None:
            skipped += 1
            continue
        solved.append((inst, sol, bool(getattr(res, "proven_optimal", True))))
    if scale is None:
        scale = max((max(inst.bay.groups(), default=1) for inst in instances), default=1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(solved))
    n_train = int(round(split_ratio * len(solved)))
    train_idx = sorted(order[:n_train])
    val_idx = sorted(order[n_train:])
    provenance = {}
    for tag, idx in (("train", train_idx), ("validation", val_idx)):
        for j in idx:
            provenance[solved[j][0].id] = (tag, solved[j][2])
    train = _make_split([solved[j][:2] for j in train_idx], S, T, scale)
    val = _make_split([solved[j][:2] for j in val_idx], S, T, scale)
    if skipped:
        log.info("skipped %d instances without a solution", skipped)
    return Dataset(S, T, float(scale), train, val, skipped, provenance)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_metric: float  # accuracy for policy heads, MAE for value heads
    val_masked_accuracy: float = math.nan


@dataclass
class TrainReport:
    head: str
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    stop_epoch: int = 0

    @property
    def best(self) -> EpochStats:
        return self.epochs[self.best_epoch - 1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        metric = "val_accuracy" if self.head == "policy" else "val_mae"
        w.writerow(["epoch", "train_loss", "val_loss", metric])
        for e in self.epochs:
            w.writerow([e.epoch, repr(e.train_loss), repr(e.val_loss), repr(e.val_metric)])
        return buf.getvalue()


def evaluate(network: Network, split: Split):
    """(loss, metric, masked accuracy) of ``network`` on ``split``."""
    out = network.forward(split.inputs)
    if network.head == "policy":
        y = split.policy_targets
        target = y.argmax(axis=1)
        acc = float(np.mean(out.argmax(axis=1) == target))
        masked = np.where(split.legal_mask, out, -np.inf)
        macc = float(np.mean(masked.argmax(axis=1) == target))
        return loss_cce(out, y), acc, macc
    pred = out[:, 0]
    return loss_mse(pred, split.value_targets), float(np.mean(np.abs(pred - split.value_targets))), math.nan


def train(network: Network, dataset: Dataset, epochs_max=500, patience=50, minibatch_size=64,
          adam: Optional[AdamState] = None, seed=0,
          on_epoch: Optional[Callable[[EpochStats, Network], None]] = None):
    """Minibatch Adam training with early stopping on validation loss.

    Returns a copy of the network at its best validation epoch and the
    per-epoch report. ``network`` itself ends in its final state.
    """
    if len(dataset.train) == 0:
        raise EmptyDataset("training split is empty")
    if len(dataset.validation) == 0:
        raise EmptyDataset("validation split is empty")
    if (network.n_stacks, network.tiers) != (dataset.n_stacks, dataset.tiers):
        raise ShapeMismatch("network is %dx%d, dataset is %dx%d"
                            % (network.n_stacks, network.tiers, dataset.n_stacks, dataset.tiers))
    if network.scale != dataset.scale:
        raise ShapeMismatch("network input scale %g differs from dataset scale %g"
                            % (network.scale, dataset.scale))
    adam = adam or AdamState()
    if not adam.m:
        adam.bind(network)
    rng = np.random.default_rng(seed)
    X = dataset.train.inputs
    Y = dataset.train.targets(network.head)
    n = X.shape[0]
    report = TrainReport(network.head)
    best_loss, best_net = math.inf, network.copy()
    for epoch in range(1, epochs_max + 1):
        perm = rng.permutation(n)
        losses = []
        for lo in range(0, n, minibatch_size):
            idx = perm[lo:lo + minibatch_size]
            losses.append(backward_and_step(network, adam, X[idx], Y[idx]) * len(idx))
        vloss, metric, macc = evaluate(network, dataset.validation)
        stats = EpochStats(epoch, float(sum(losses) / n), vloss, metric, macc)
        report.epochs.append(stats)
        if vloss < best_loss:
            best_loss, best_net = vloss, network.copy()
            report.best_epoch = epoch
        log.debug("epoch %d train %.4f val %.4f metric %.4f", epoch, stats.train_loss, vloss, metric)
        if on_epoch is not None:
            on_epoch(stats, network)
        report.stop_epoch = epoch
        if epoch - report.best_epoch > patience:
            break
    return best_net, report


@dataclass
class GapReport:
    gap_pct: float
    dlts_moves: int
    optimal_moves: int
    n_instances: int
    unsolved: list
    results: dict  # instance id -> SearchResult

    @property
    def n_unsolved(self):
        return len(self.unsolved)


def gap_percent(dlts_moves, optimal_moves):
    if optimal_moves == 0:
        return 0.0 if dlts_moves == 0 else math.inf
    return 100.0 * (dlts_moves / optimal_moves - 1.0)


def validate_dlts(policy, value, instances, oracle_lengths, config: SearchConfig) -> GapReport:
    """Solve every instance with DLTS and compare total moves to the optimum.

    ``policy``/``value`` may be networks or plain callables. Instances DLTS
    fails to solve are listed and left out of both totals.
    """
    if isinstance(policy, Network):
        policy = NetworkPolicy(policy)
    if isinstance(value, Network):
        value = NetworkValue(value)
    total, total_opt, unsolved, results = 0, 0, [], {}
    for inst, opt in zip(instances, oracle_lengths):
        res = solve(inst.bay, policy, value, config)
        results[inst.id] = res
        if res.solution is None:
            unsolved.append(inst.id)
            continue
        total += len(res.solution)
        total_opt += int(opt)
    return GapReport(gap_percent(total, total_opt), total, total_opt, len(results), unsolved, results)
