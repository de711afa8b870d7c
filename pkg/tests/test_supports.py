import random

import networkx as nx
import pytest

from conftest import load, load_normalized, scenario2_gadget
from pdpomdp.analysis import Analysis
from pdpomdp.errors import NodeBudgetExceeded
from pdpomdp.model import normalize
from pdpomdp.oracles import random_instance
from pdpomdp.supports import explore, rank_table, subsets, support_step

S = frozenset


def test_support_step_examples():
    m = load("scenario1_gadget").model
    assert support_step(m, S({"q", "q1"}), "a", "o1") == S({"q", "q1"})
    assert support_step(m, S({"q1", "q2"}), "a", "o2") == S({"q1", "q2"})
    assert support_step(scenario2_gadget(), S({"q1"}), "a", "o2") == S()


def test_explore_scenario2():
    g = explore(scenario2_gadget(), [S({"q1", "q2"})])
    assert {S({"q1", "q2"}), S({"q3"})} <= g.nodes
    assert g.step(S({"q1", "q2"}), "a", "o1") == S({"q1", "q2"})
    assert g.step(S({"q1", "q2"}), "a", "o2") == S({"q3"})


def test_explore_top_is_single_node(scenario1):
    _, nm, _ = scenario1
    g = explore(nm, [S({"TOP"})])
    assert g.nodes == {S({"TOP"})}
    assert rank_table(g).rank(S({"TOP"})) == 0


def test_explore_budget():
    m = load("scenario1_gadget").model
    with pytest.raises(NodeBudgetExceeded):
        explore(m, subsets(m.states), budget=3)


def test_scenario1_ranks(scenario1):
    _, nm, b = scenario1
    an = Analysis(nm, [b.support])
    assert an.rank(S({"q", "q1", "q2"})) > an.rank(S({"q", "q1"}))
    assert an.rank(S({"TOP"})) == an.rank(S({"BOT"})) == 0


def _check_table(m, g, table):
    n = len(m.states)
    assert len(g.nodes) <= 2**n - 1
    reach = g.to_networkx()
    for S_ in g.nodes:
        # T reachable from S implies |T| <= |S|
        for T in nx.descendants(reach, S_):
            assert len(T) <= len(S_)
            assert table.rank(T) <= table.rank(S_)
        assert table.rank(S_) <= 2**n - 1
        if m.normalized and S_ not in (S({m.top}), S({m.bot})):
            assert table.rank(S_) >= 1
    for cls in table.classes:
        assert len({len(x) for x in cls}) == 1
    order = table.order()
    assert nx.is_directed_acyclic_graph(order)
    # rank is the longest descending chain
    for i in order.nodes:
        below = [table.ranks[j] for j in order.successors(i)]
        assert table.ranks[i] == (1 + max(below) if below else 0)


@pytest.mark.parametrize("name", ["scenario1", "g1", "tiger", "infinite_tree", "chain"])
def test_rank_table_invariants(name):
    _, nm, b = load_normalized(name)
    an = Analysis(nm, [b.support])
    _check_table(nm, an.graph, an.ranks)


def test_rank_table_random_models():
    for seed in range(40):
        m, _, targets = random_instance(4, 2, 2, seed, branching=2)
        nm = normalize(m, targets)
        an = Analysis(nm, [S(q for q in nm.states if q not in (nm.top, nm.bot))])
        _check_table(nm, an.graph, an.ranks)


def test_random_histories_never_grow_supports():
    rng = random.Random(7)
    samples = 0
    for seed in range(50):
        m, _, _ = random_instance(5, 2, 3, seed, branching=3)
        for _ in range(12):
            cur = S(rng.sample(m.states, rng.randint(1, 5)))
            start = len(cur)
            for _ in range(10):
                a = rng.choice(m.actions)
                o = rng.choice(m.observations)
                nxt = support_step(m, cur, a, o)
                if not nxt:
                    break
                assert len(nxt) <= len(cur) <= start
                cur = nxt
            samples += 1
    assert samples >= 500
