import math
import random
from collections import Counter

import pytest

from ncsched.analysis import DIVERGENT, ScheduleEvaluator
from ncsched.model import Schedule, random_instance
from ncsched.search import (
    Mcts, MctsConfig, SearchSpaceTooLarge, SweepResult, TreeNode, action_set, backup,
    exhaustive_search, mcts_search, reward, rollout, round_robin, sweep, uct_select,
)

from conftest import instance_of, scalar_plant


def test_action_set_lexicographic_complete():
    acts = action_set(4, 2)
    assert acts == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
    assert len(action_set(5, 2)) == math.comb(5, 2)


def test_round_robin_is_feasible():
    for N, M, T0 in [(3, 1, 5), (5, 2, 10), (4, 3, 2)]:
        slots = round_robin(N, M, T0)
        Schedule.from_actions(slots, N)
        assert all(len(set(s)) == M for s in slots)


# selection / rollout / backup

def _node(stats, n_s):
    node = TreeNode(0, len(stats))
    node.w_sa = [w for w, _ in stats]
    node.n_sa = [n for _, n in stats]
    node.n_s = n_s
    return node


def test_uct_select_hand_example():
    node = _node([(2.0, 4), (1.0, 4)], 8)
    s0 = 0.5 + 1.2 * math.sqrt(math.log(8) / 4)
    assert s0 == pytest.approx(1.3653, abs=1e-4)
    assert uct_select(node, 1.2) == 0


def test_uct_select_unvisited_first_in_order():
    node = _node([(4.0, 4), (0.0, 0), (0.0, 0)], 4)
    assert uct_select(node, 1.2) == 1


def test_uct_select_ties_go_to_lowest_index_and_single_action():
    assert uct_select(_node([(1.0, 2), (1.0, 2)], 4), 1.2) == 0
    assert uct_select(_node([(0.3, 1)], 1), 1.2) == 0


def test_rollout_appends_to_prefix_and_replays():
    r = rollout((2, 0), random.Random(3), 3, 4)
    assert len(r) == 3 and r[:2] == (2, 0)
    assert rollout((), random.Random(9), 6, 5) == rollout((), random.Random(9), 6, 5)


def test_rollout_uniform_per_slot():
    rng = random.Random(2022)
    K, T0, n = 3, 4, 100_000
    counts = [Counter() for _ in range(T0)]
    for _ in range(n):
        for m, a in enumerate(rollout((), rng, T0, K)):
            counts[m][a] += 1
    sd = math.sqrt(n * (1 / K) * (1 - 1 / K))
    for c in counts:
        for a in range(K):
            assert abs(c[a] - n / K) <= 3 * sd


@pytest.mark.parametrize("loss,want", [(10.0, 0.0), (0.0, 1.0), (5.0, 0.5), (25.0, 0.0), (DIVERGENT, 0.0)])
def test_reward_clamped(loss, want):
    assert reward(loss, 10.0) == want


def test_backup_counts_divergent_visits():
    root, child = TreeNode(0, 2), TreeNode(1, 2)
    backup([(root, 1), (child, 0)], DIVERGENT, 3.0)
    assert root.n_sa == [0, 1] and root.w_sa == [0.0, 0.0] and root.n_s == 1
    backup([(root, 1), (child, 0)], 1.5, 3.0)
    assert root.w_sa[1] == 0.5 and child.n_sa[0] == 2 and child.n_s == 2


# exhaustive

def test_exhaustive_t1_schedules_costlier_plant():
    inst = instance_of([scalar_plant(a=0.2), scalar_plant(a=0.9)], 1)
    ev = ScheduleEvaluator(inst)
    res = exhaustive_search(inst, 1)
    assert res.evaluations == 2 and res.best_schedule.alloc == ((0,), (1,))
    assert res.best_loss == min(ev.total(Schedule.from_rows([[1], [0]])), ev.total(Schedule.from_rows([[0], [1]])))


def test_exhaustive_identical_plants_alternate_with_lexicographic_tie_break():
    p = scalar_plant(a=0.8)
    inst = instance_of([p, p], 1)
    res = exhaustive_search(inst, 2)
    assert res.evaluations == 4
    assert res.best_actions == (0, 1)
    assert res.best_schedule.alloc == ((1, 0), (0, 1))


def test_exhaustive_budget_message():
    inst = random_instance(3, 1, seed=1)
    with pytest.raises(SearchSpaceTooLarge) as err:
        exhaustive_search(inst, 12, eval_cap=10**5)
    assert err.value.required == 3**12 and "531441" in str(err.value)


def test_exhaustive_result_is_reevaluated(inst3):
    res = exhaustive_search(inst3, 4)
    assert res.best_loss == ScheduleEvaluator(inst3).total(res.best_schedule)


# mcts

def test_mcts_single_iteration_returns_its_rollout(inst3):
    res = mcts_search(inst3, 4, MctsConfig(iterations=1, seed=5))
    assert res.iterations == 1 and len(res.best_actions) == 4
    assert res.best_loss == ScheduleEvaluator(inst3).total(res.best_schedule)


def test_mcts_small_instance_finds_optimum():
    inst = instance_of([scalar_plant(a=1.1), scalar_plant(a=0.7)], 1)
    assert mcts_search(inst, 2, MctsConfig(iterations=200)).best_loss == exhaustive_search(inst, 2).best_loss


def test_conservation_and_reward_range(inst3):
    m = Mcts(inst3, 5, MctsConfig(iterations=500, seed=1))
    m.run()
    assert m.root.n_s == 500 == sum(m.root.n_sa)
    nodes = list(m.root.iter_nodes())
    assert len(nodes) - 1 <= 500
    for node in nodes:
        for w, n in zip(node.w_sa, node.n_sa):
            assert 0.0 <= w <= n


def test_best_so_far_monotone_in_budget(inst3):
    m = Mcts(inst3, 6, MctsConfig(iterations=10, seed=8))
    last = math.inf
    for _ in range(30):
        res = m.run(100)
        assert res.best_loss <= last
        assert res.best_loss == ScheduleEvaluator(inst3).total(res.best_schedule)
        last = res.best_loss


def test_replayed_budget_matches_single_run(inst3):
    a = Mcts(inst3, 5, MctsConfig(iterations=10, seed=4))
    a.run(300)
    a.run(300)
    b = mcts_search(inst3, 5, MctsConfig(iterations=600, seed=4))
    assert a.result().best_actions == b.best_actions


def test_mcts_never_beats_exhaustive_and_usually_matches():
    inst = random_instance(3, 1, seed=7)
    T0 = 4  # 81 sequences
    opt = exhaustive_search(inst, T0).best_loss
    hits = 0
    for seed in range(100):
        got = mcts_search(inst, T0, MctsConfig(iterations=50 * 3**T0, seed=seed)).best_loss
        assert got >= opt
        hits += got == opt
    assert hits >= 95


def test_all_divergent_probes_defer_j_max():
    # four unstable plants, one channel, period 3: some plant is always left out
    hot = scalar_plant(a=1.5)
    inst = instance_of([hot, hot, hot, hot], 1)
    m = Mcts(inst, 3, MctsConfig(iterations=1, seed=0))
    assert m.j_max is None
    res = m.run(50)
    assert res.best_loss is DIVERGENT and m.j_max is None
    assert all(w == 0.0 for w in m.root.w_sa) and m.root.n_s == 50


def test_j_max_fixed_on_first_finite_loss_resets_stats():
    # only the 6 permutations out of 27 sequences cover all three plants
    hot = scalar_plant(a=1.5)
    inst = instance_of([hot, hot, hot], 1)
    m = Mcts(inst, 3, MctsConfig(iterations=1, seed=0))
    m.j_max = None  # as if every calibration probe had diverged
    m.run(400)
    assert math.isfinite(m.best)
    assert m.j_max == pytest.approx(1.1 * m.best, rel=1e-12)
    assert m.root.n_s == sum(m.root.n_sa) < 400


def test_explicit_j_max_skips_calibration(inst3):
    m = Mcts(inst3, 3, MctsConfig(iterations=5, j_max=123.0))
    assert m.j_max == 123.0 and m.loss.calls == 0


def test_config_validation():
    with pytest.raises(ValueError):
        MctsConfig(iterations=0)
    with pytest.raises(ValueError):
        MctsConfig(iterations=5, c_uct=0.0)


# sweep

def test_sweep_methods_agree_on_small_period():
    inst = random_instance(3, 1, seed=4)
    ex = sweep(inst, [3], "exhaustive")
    mc = sweep(inst, [3], "mcts", MctsConfig(iterations=2000))
    assert ex.table == mc.table


def test_sweep_flags_smallest_minimizing_period(inst3):
    res = sweep(inst3, range(2, 7))
    assert len(res.rows) == 5
    best = min(res.table.values())
    assert res.table[res.best_period] <= best * (1 + 1e-9)
    assert all(res.table[T0] > best * (1 + 1e-9) for T0 in res.table if T0 < res.best_period)


def test_best_period_prefers_shorter_on_rounding_tie():
    def fake(loss):
        from ncsched.search import SearchResult
        return SearchResult(Schedule.from_rows([[1], [0]]), loss, 1, (0,))
    res = SweepResult([(3, fake(10.0)), (6, fake(10.0 - 1e-14)), (4, fake(11.0))])
    assert res.best_period == 3


def test_sweep_unknown_method(inst3):
    with pytest.raises(ValueError):
        sweep(inst3, [2], "genetic")
