import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlts.cpmp import Bay, apply_move, generate_instance, is_sorted, legal_moves, replay
from dlts.encoding import move_index, n_moves
from dlts.errors import ConfigError, ShapeMismatch
from dlts.nn import build_network
from dlts.search import (NetworkPolicy, NetworkValue, SearchConfig, UniformPolicy, discrepancy_bin,
                         dlts_dfs, dlts_lds, dlts_wbs, heuristic_lower_bound, mp_threshold, solve)

from oracles import TableValue, bfs_shortest, random_small_stacks


class HashPolicy:
    """Fixed but arbitrary policy: a Dirichlet draw seeded by the bay contents."""

    def __init__(self, salt=0):
        self.salt = salt

    def __call__(self, bay):
        key = hash((self.salt, bay.stacks)) & 0xFFFFFFFF
        return np.random.default_rng(key).dirichlet(np.ones(n_moves(bay.n_stacks)))


def small_bay(seed, S=3, T=3, max_containers=4):
    rng = np.random.default_rng(seed)
    return Bay(random_small_stacks(rng, S, T, max_containers), T)


def unsorted_bays(n, seed, **kw):
    out, i = [], 0
    while len(out) < n:
        b = small_bay([seed, i], **kw)
        i += 1
        if not is_sorted(b):
            out.append(b)
    return out


def cfg(strategy, **kw):
    kw.setdefault("time_limit", None)
    return SearchConfig(strategy=strategy, **kw)


class TestThreshold:
    def test_constant(self):
        assert abs(mp_threshold("constant", 0.4, 0.5, 3, 10) - 0.3) < 1e-12

    def test_quadratic_root_and_md(self):
        assert abs(mp_threshold("quadratic", 0.4, 0.5, 0, 10) - 0.3) < 1e-12
        assert abs(mp_threshold("quadratic", 0.4, 0.5, 10, 10) - 0.5) < 1e-12
        assert abs(mp_threshold("quadratic", 0.4, 0.5, 5, 10) - 0.5 * (1 - 0.4 * 0.25)) < 1e-12

    def test_log(self):
        md = 10
        assert abs(mp_threshold("log", 0.4, 0.5, md, md) - 0.5) < 1e-12
        # depth 0 is treated as depth 1
        expected = 0.5 * (1 - 0.4 * math.log(10))
        assert abs(mp_threshold("log", 0.4, 0.5, 0, md) - expected) < 1e-12
        assert abs(mp_threshold("log", 0.4, 0.5, 1, md) - expected) < 1e-12

    def test_pinned_points(self):
        assert abs(mp_threshold("constant", 0.0, 0.8, 4, 10) - 0.8) < 1e-12
        assert abs(mp_threshold("quadratic", 1.0, 0.6, 0, 10) - 0.0) < 1e-12
        assert abs(mp_threshold("quadratic", 0.5, 1.0, 5, 10) - 0.875) < 1e-12

    def test_never_above_r(self):
        assert mp_threshold("log", 0.9, 0.5, 30, 10) == 0.5

    @given(st.sampled_from(["constant", "quadratic", "log"]), st.floats(0, 1), st.floats(0.01, 1),
           st.integers(0, 40), st.integers(1, 40))
    def test_p_zero_keeps_only_top(self, variant, p, r, depth, md):
        assert mp_threshold(variant, 0.0, r, depth, md) == pytest.approx(r, abs=1e-12)
        assert mp_threshold(variant, p, r, depth, md) <= r

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            mp_threshold("cubic", 0.4, 0.5, 1, 2)


class TestLowerBound:
    def test_deflated(self):
        assert heuristic_lower_bound(4, 4, None, None, 0.5) == -math.inf
        assert heuristic_lower_bound(4, 4, None, lambda b: 3.2, 0.5) == pytest.approx(5.6, abs=1e-12)

    def test_d_zero_is_cost(self):
        assert heuristic_lower_bound(7, 7, None, lambda b: 9.0, 0.0) == 7

    def test_skipped_depth(self):
        assert heuristic_lower_bound(1, 1, None, lambda b: 3.0, 1.0, k=2) == -math.inf
        assert heuristic_lower_bound(2, 2, None, lambda b: 3.0, 1.0, k=2) == 5.0


class TestBins:
    def test_three_bins(self):
        # bins of width 0.7/3: 0.2 and 0.1 both land in the lowest
        assert [discrepancy_bin(p, 0.7, 3) for p in [0.7, 0.2, 0.1]] == [0, 2, 2]

    def test_two_bins(self):
        assert [discrepancy_bin(p, 0.7, 2) for p in [0.7, 0.65, 0.1]] == [0, 0, 1]

    def test_single_bin(self):
        assert all(discrepancy_bin(p, 0.25, 1) == 0 for p in [0.25, 0.2, 0.01])

    @given(st.floats(0.01, 1), st.integers(1, 10), st.data())
    def test_in_range_and_monotone(self, r, bins, data):
        a = data.draw(st.floats(0, r))
        b = data.draw(st.floats(0, r))
        ia, ib = discrepancy_bin(a, r, bins), discrepancy_bin(b, r, bins)
        assert 0 <= ia < bins and 0 <= ib < bins
        if a >= b:
            assert ia <= ib


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(strategy="bfs"), dict(mp_variant="cubic"), dict(p=1.5),
                                    dict(d=-0.1), dict(k=0), dict(bins=0), dict(z=-1), dict(alpha=-1),
                                    dict(time_limit=0), dict(md0=0)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            SearchConfig(**kw)

    def test_round_trip(self):
        c = SearchConfig(strategy="LDS", binning=True, bins=3, p=0.6)
        assert c.strategy == "lds"
        assert SearchConfig.from_dict(c.to_dict()) == c
        with pytest.raises(ConfigError):
            SearchConfig.from_dict({"beam": 3})


ENGINES = {"dfs": dlts_dfs, "lds": dlts_lds, "wbs": dlts_wbs}


@pytest.mark.parametrize("strategy", ["dfs", "lds", "wbs"])
def test_sorted_root(strategy):
    b = Bay(((3, 1), (2,)), 3)
    res = solve(b, UniformPolicy(), TableValue(b.stacks, b.tiers), cfg(strategy))
    assert res.solution.moves == () and res.ub == 0
    assert res.nodes == 1 and res.completed


def test_wbs_requires_value():
    with pytest.raises(ConfigError):
        dlts_wbs(Bay(((1, 2), ()), 2))


def test_network_adapters_check_shape():
    pol = NetworkPolicy(build_network(3, 4, "policy"))
    with pytest.raises(ShapeMismatch):
        pol(Bay(((), (), (), ()), 5))
    with pytest.raises(ShapeMismatch):
        NetworkValue(build_network(3, 4, "policy"))
    val = NetworkValue(build_network(3, 4, "value"))
    assert isinstance(val(Bay(((1,), (), ()), 4)), float)


class TestExhaustive:
    """With p = 1 and constant pruning nothing is cut, so every engine is exact."""

    @pytest.mark.parametrize("strategy", ["dfs", "lds"])
    def test_matches_bfs_without_value(self, strategy):
        for b in unsorted_bays(25, 1):
            res = solve(b, HashPolicy(), None, cfg(strategy, p=1.0, mp_variant="constant"))
            assert res.completed
            assert res.ub == bfs_shortest(b.stacks, b.tiers)
            assert is_sorted(replay(b, res.solution.moves))

    @pytest.mark.parametrize("strategy", ["dfs", "lds", "wbs"])
    def test_exact_value_stub_is_optimal(self, strategy):
        for b in unsorted_bays(12, 2, S=4, T=4, max_containers=5):
            value = TableValue(b.stacks, b.tiers)
            res = solve(b, HashPolicy(1), value, cfg(strategy, p=1.0, mp_variant="constant"))
            assert res.ub == value(b)
            assert len(res.solution) == res.ub


def greedy_rollout(policy, bay, limit):
    moves, prev = [], None
    while not is_sorted(bay) and len(moves) < limit:
        raw = policy(bay)
        legal = legal_moves(bay, prev)
        prev = max(legal, key=lambda m: raw[move_index(m, bay.n_stacks)])
        bay = apply_move(bay, prev)
        moves.append(prev)
    return tuple(moves) if is_sorted(bay) else None


class TestGreedy:
    @pytest.mark.parametrize("variant", ["constant", "quadratic", "log"])
    def test_p_zero_follows_argmax(self, variant):
        checked = 0
        for b in unsorted_bays(40, 3, S=4, T=4, max_containers=6):
            policy = HashPolicy(2)
            expected = greedy_rollout(policy, b, 2 * b.n_containers)
            res = dlts_dfs(b, policy, None, cfg("dfs", p=0.0, mp_variant=variant))
            if expected is None:
                assert not res.solved
                continue
            checked += 1
            assert res.solution.moves == expected
            assert res.nodes == len(expected) + 1
        assert checked > 5

    def test_lds_first_solution_is_greedy(self):
        for b in unsorted_bays(20, 4, S=4, T=4, max_containers=6):
            policy = HashPolicy(3)
            expected = greedy_rollout(policy, b, 2 * b.n_containers)
            res = dlts_lds(b, policy, None, cfg("lds", p=1.0, mp_variant="constant"))
            if expected is not None:
                assert res.history[0] == (len(expected) + 1, len(expected))


class FixedPolicy:
    def __init__(self, probs):
        self.probs = probs

    def __call__(self, bay):
        out = np.zeros(n_moves(bay.n_stacks))
        for (f, t), p in self.probs.items():
            out[move_index((f, t), bay.n_stacks)] = p
        return out


class TestLDSOrder:
    # three root moves, each of which sorts the bay
    ROOT = Bay(((1, 2), (), (), ()), 2)

    @pytest.mark.parametrize("probs,kw,expected", [
        ([0.7, 0.2, 0.1], {}, [0, 1, 2]),
        ([0.7, 0.65, 0.1], dict(binning=True, bins=2), [0, 0, 1]),
        ([1 / 3] * 3, dict(binning=True, bins=1), [0, 0, 0]),
    ])
    def test_child_increments(self, probs, kw, expected):
        policy = FixedPolicy(dict(zip([(0, 1), (0, 2), (0, 3)], probs)))
        res = dlts_lds(self.ROOT, policy, None, cfg("lds", p=1.0, mp_variant="constant", **kw),
                       record_trace=True)
        assert res.trace[0] == (0, 0)
        assert sorted(d for d, nd in res.trace if nd == -1) == expected

    def test_discrepancy_never_decreases(self):
        for b in unsorted_bays(20, 5, S=4, T=4, max_containers=6):
            res = dlts_lds(b, HashPolicy(), None, cfg("lds", p=0.7, mp_variant="constant"),
                           record_trace=True)
            discs = [d for d, _ in res.trace]
            assert discs == sorted(discs)
            assert len(res.trace) == res.nodes

    def test_deeper_first_within_discrepancy(self):
        b = next(iter(unsorted_bays(1, 6, S=4, T=4, max_containers=6)))
        res = dlts_lds(b, HashPolicy(), None, cfg("lds", p=1.0, mp_variant="constant"),
                       record_trace=True)
        zero = [negdepth for d, negdepth in res.trace if d == 0]
        # discrepancy-0 nodes form the single greedy path, visited root first
        assert zero == [-i for i in range(len(zero))]

    @pytest.mark.parametrize("kw", [dict(z=100), dict(binning=True, bins=1)])
    def test_no_discrepancy(self, kw):
        for b in unsorted_bays(5, 7):
            res = dlts_lds(b, HashPolicy(), None, cfg("lds", p=0.8, mp_variant="constant", **kw),
                           record_trace=True)
            assert all(d == 0 for d, _ in res.trace)

    def test_rank_versus_bins(self):
        b = next(iter(unsorted_bays(1, 8, S=4, T=4, max_containers=6)))
        ranked = dlts_lds(b, HashPolicy(), None, cfg("lds", p=1.0, mp_variant="constant"),
                          record_trace=True)
        binned = dlts_lds(b, HashPolicy(), None, cfg("lds", p=1.0, mp_variant="constant",
                                                      binning=True, bins=2), record_trace=True)
        assert max(d for d, _ in binned.trace) <= max(d for d, _ in ranked.trace)
        assert ranked.ub == binned.ub


class TestWBS:
    def bays(self):
        return unsorted_bays(10, 9, S=4, T=4, max_containers=5)

    def test_optimal_path_first(self):
        for b in self.bays():
            value = TableValue(b.stacks, b.tiers)
            opt = int(value(b))
            res = dlts_wbs(b, UniformPolicy(), value, cfg("wbs", p=1.0, mp_variant="constant"),
                           record_trace=True)
            assert [-nd for _, nd in res.trace[:opt + 1]] == list(range(opt + 1))
            assert res.history[0] == (opt + 1, opt)

    def test_gamma_zero_is_uniform_cost(self):
        for b in self.bays():
            res = dlts_wbs(b, UniformPolicy(), TableValue(b.stacks, b.tiers),
                           cfg("wbs", gamma=0.0, p=1.0, mp_variant="constant"), record_trace=True)
            depths = [-nd for _, nd in res.trace]
            assert depths == sorted(depths)
            assert res.ub == bfs_shortest(b.stacks, b.tiers)

    def test_alpha_zero_is_greedy_on_value(self):
        for b in self.bays():
            value = TableValue(b.stacks, b.tiers)
            res = dlts_wbs(b, UniformPolicy(), value,
                           cfg("wbs", alpha=0.0, p=1.0, mp_variant="constant"), record_trace=True)
            fs = [f for f, _ in res.trace[:int(value(b)) + 1]]
            assert fs == sorted(fs, reverse=True) and fs[-1] == 0
            assert res.ub == value(b)

    def test_value_queried_for_every_child(self):
        b = self.bays()[0]
        res = dlts_wbs(b, UniformPolicy(), TableValue(b.stacks, b.tiers),
                       cfg("wbs", p=1.0, mp_variant="constant"))
        assert res.value_queries >= res.nodes


class TestValueUse:
    def test_no_value_no_queries(self):
        b = unsorted_bays(1, 10)[0]
        assert dlts_dfs(b, HashPolicy(), None, cfg("dfs")).value_queries == 0

    def test_d_zero_changes_nothing(self):
        for b in unsorted_bays(10, 11, S=4, T=4, max_containers=6):
            base = dlts_dfs(b, HashPolicy(), None, cfg("dfs", p=0.8, mp_variant="constant"))
            flat = dlts_dfs(b, HashPolicy(), lambda bay: 50.0, cfg("dfs", p=0.8, mp_variant="constant", d=0.0))
            assert (base.ub, base.nodes) == (flat.ub, flat.nodes)
            assert flat.value_queries > 0

    def test_k_spacing(self):
        depths = []

        class Spy:
            def __call__(self, bay):
                depths.append(self.depth_of[bay.stacks])
                return 0.0

        b = unsorted_bays(1, 12, S=4, T=4, max_containers=6)[0]
        spy = Spy()
        spy.depth_of = {}
        # record depth of each state the search can reach from the root
        frontier = {b.stacks: 0}
        todo = [b]
        while todo:
            cur = todo.pop()
            for m in legal_moves(cur):
                c = apply_move(cur, m)
                if c.stacks not in frontier:
                    frontier[c.stacks] = frontier[cur.stacks] + 1
                    todo.append(c)
        spy.depth_of = frontier
        dlts_dfs(b, UniformPolicy(), spy, cfg("dfs", k=1000, p=1.0, mp_variant="constant"))
        assert depths == [0]


def test_timeout():
    hard = generate_instance(4, 5, "G1", 12, seed=9)
    for strategy in ("dfs", "lds", "wbs"):
        res = solve(hard, UniformPolicy(), lambda b: 0.0, SearchConfig(strategy=strategy, time_limit=1e-9))
        assert res.timed_out and not res.completed


def test_static_md_prunes_less_than_reactive():
    b = generate_instance(4, 5, "G1", 7, seed=3).bay
    reactive = dlts_dfs(b, HashPolicy(), None, cfg("dfs", p=0.5))
    static = dlts_dfs(b, HashPolicy(), None, cfg("dfs", p=0.5, reactive_md=False))
    assert static.ub <= reactive.ub


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["dfs", "lds", "wbs"]))
def test_invariants(seed, strategy):
    b = small_bay(seed, S=4, T=4, max_containers=5)
    rng = np.random.default_rng(seed)
    table = TableValue(b.stacks, b.tiers)
    noise = float(rng.uniform(0, 2))
    res = solve(b, HashPolicy(seed), lambda bay: table(bay) + noise,
                cfg(strategy, p=float(rng.uniform(0, 1)), d=float(rng.uniform(0, 1))))
    ubs = [u for _, u in res.history]
    assert all(a > c for a, c in zip(ubs, ubs[1:]))
    nodes = [n for n, _ in res.history]
    assert nodes == sorted(nodes)
    if res.solved:
        assert res.ub == ubs[-1] == len(res.solution)
        assert is_sorted(replay(b, res.solution.moves))
        assert res.ub >= table(b)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["dfs", "lds"]))
def test_wider_pruning_never_worse(seed, strategy):
    # constant pruning keeps a superset of branches as p grows and cost pruning is admissible
    b = small_bay(seed, S=3, T=4, max_containers=5)
    ubs = []
    for p in (0.0, 0.3, 0.6, 0.9):
        res = solve(b, HashPolicy(seed), None, cfg(strategy, p=p, mp_variant="constant"))
        assert res.completed
        ubs.append(res.ub)
    assert all(a >= c for a, c in zip(ubs, ubs[1:]))
