import numpy as np
import pytest

from dlts.cpmp import Bay, Instance, Move, blocking_count, generate_instance, is_sorted, replay
from dlts.errors import ParseError
from dlts.oracle import (batch_solve, greedy_incumbent, read_solution, solve_exact, write_solution)

from oracles import bfs_shortest

# needs ~350k nodes, several seconds without a limit
HARD = generate_instance(4, 5, "G1", 12, seed=9, id="hard")


def random_instances(n, seed, S=3, T=4, max_fill=5):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        cls = str(rng.choice(["G1", "G2", "G3"]))
        k = int(cls[1])
        fill = k * int(rng.integers(0, max_fill // k + 1))
        out.append(generate_instance(S, T, cls, fill, seed=[seed, i], id="r%d" % i))
    return out


def test_sorted_bay():
    res = solve_exact(Bay(((3, 1), (2,)), 3))
    assert res.solution.length == 0
    assert res.proven_optimal


def test_one_move():
    res = solve_exact(Bay(((1, 2), ()), 2))
    assert res.solution.moves == (Move(0, 1),)
    assert res.proven_optimal


@pytest.mark.parametrize("seed", range(3))
def test_matches_bfs(seed):
    for inst in random_instances(30, seed):
        res = solve_exact(inst)
        assert res.proven_optimal
        assert res.length == bfs_shortest(inst.bay.stacks, inst.bay.tiers)
        assert is_sorted(replay(inst.bay, res.solution.moves))
        assert res.length >= blocking_count(inst.bay)


def test_blocking_count_three_needs_three_moves():
    found = 0
    for i in range(200):
        inst = generate_instance(3, 4, "G1", 6, seed=i)
        if blocking_count(inst.bay) != 3:
            continue
        found += 1
        assert solve_exact(inst).length >= 3
    assert found > 5


def test_timeout_returns_incumbent():
    res = solve_exact(HARD, time_limit=0.05)
    assert res.timed_out and not res.proven_optimal
    if res.solution is not None:
        assert is_sorted(replay(HARD.bay, res.solution.moves))


def test_greedy_incumbent_sorts():
    for inst in random_instances(20, 5, S=4, T=5, max_fill=12):
        moves = greedy_incumbent(inst.bay)
        assert moves is not None
        assert is_sorted(replay(inst.bay, moves))


def test_batch_sorted():
    insts = [Instance(Bay(((2, 1), ()), 3), "G1", "s%d" % i) for i in range(10)]
    res = batch_solve(insts)
    assert [r.length for r in res] == [0] * 10
    assert all(r.proven_optimal for r in res)


def test_batch_flags_timeout():
    easy = random_instances(9, 11)
    res = batch_solve(easy[:4] + [HARD] + easy[4:], time_limit_each=0.05)
    assert [r.id for r in res] == [i.id for i in easy[:4]] + ["hard"] + [i.id for i in easy[4:]]
    flagged = [r for r in res if not r.proven_optimal]
    assert len(flagged) == 1 and flagged[0].id == "hard" and flagged[0].timed_out
    assert sum(r.proven_optimal for r in res) == 9


def test_batch_parallel_preserves_order():
    insts = random_instances(12, 3)
    serial = batch_solve(insts)
    parallel = batch_solve(insts, parallelism=2)
    assert [r.solution for r in serial] == [r.solution for r in parallel]


def test_solution_round_trip(tmp_path):
    inst = random_instances(1, 4)[0]
    res = solve_exact(inst)
    path = tmp_path / "x.sol"
    write_solution(res.solution, path, "abc")
    iid, sol = read_solution(path)
    assert iid == "abc" and sol == res.solution
    path.write_text("CPMPSOL v1\nabc\n3\n0 1\n")
    with pytest.raises(ParseError):
        read_solution(path)
