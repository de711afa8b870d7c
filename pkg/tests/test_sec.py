from fractions import Fraction as F
from itertools import combinations

import pytest

from conftest import build, load, load_normalized
from pdpomdp.analysis import Analysis
from pdpomdp.errors import DisjointDomains, EmptyDomain, NotInAnySec
from pdpomdp.model import SubBelief, normalize
from pdpomdp.oracles import random_instance
from pdpomdp.sec import (
    Sec,
    enumerate_exit_frontier,
    indistinguishability_partition,
    is_distinguishing,
    is_sec,
    maximal_sec_of,
    reachable_beliefs,
    relation_is_transitive,
    sec_union,
)
from pdpomdp.supports import support_key, support_step

S = frozenset
Q01 = S({"q", "q1"})
Q02 = S({"q", "q2"})
Q12 = S({"q1", "q2"})
QALL = S({"q", "q1", "q2"})

f1 = Sec({QALL: {"a"}})
f2 = Sec({Q01: {"a"}, Q02: {"a"}})
f3 = Sec({Q12: {"a"}})


@pytest.fixture
def gadget():
    return load("scenario1_gadget").model


def brute_force_secs(m, nodes):
    """Every SEC over ``nodes``, each with the largest action sets its domain allows."""
    nodes = sorted(nodes, key=lambda x: support_key(m, x))
    found = []
    for r in range(1, len(nodes) + 1):
        for dom in combinations(nodes, r):
            inside = set(dom)
            f = {}
            for X in dom:
                f[X] = {
                    a
                    for a in m.actions
                    if all(not support_step(m, X, a, o) or support_step(m, X, a, o) in inside for o in m.observations)
                }
            if all(f.values()) and len({len(X) for X in dom}) == 1 and is_sec(m, Sec(f)) is True:
                found.append(Sec(f))
    return found


def test_example_secs(gadget):
    assert is_sec(gadget, f1) is True
    assert is_sec(gadget, f2) is True
    assert is_sec(gadget, f3) is True
    f4 = Sec({Q01: {"a"}, Q02: {"a"}, Q12: {"a"}})
    v = is_sec(gadget, f4)
    assert not v and v.axiom == "strong-connectivity"


def test_closure_violation(gadget):
    v = is_sec(gadget, Sec({Q01: {"a"}}))
    assert not v and v.axiom == "closure"


def test_top_sec(scenario1):
    _, nm, _ = scenario1
    assert is_sec(nm, Sec({S({"TOP"}): set(nm.actions)})) is True


def test_empty_domain_rejected(gadget):
    with pytest.raises(EmptyDomain):
        is_sec(gadget, Sec({}))


def test_union(gadget):
    with pytest.raises(DisjointDomains):
        sec_union(f2, f3)
    assert sec_union(f1, f1, gadget) == f1


def test_union_of_overlapping_random_secs():
    checked = 0
    for seed in range(60):
        m, _, targets = random_instance(3, 2, 2, seed, branching=2)
        nm = normalize(m, targets)
        an = Analysis(nm, [S(q for q in nm.states if q not in ("TOP", "BOT"))])
        if len(an.graph.nodes) > 11:
            continue
        secs = brute_force_secs(nm, an.graph.nodes)
        for g, h in combinations(secs, 2):
            if g.domain & h.domain:
                assert is_sec(nm, sec_union(g, h, nm)) is True
                checked += 1
    assert checked > 0


def test_maximal_sec_of_examples(scenario1):
    _, nm, b = scenario1
    rep = maximal_sec_of(nm, Q01)
    assert rep.sec.domain == {Q01, Q02}
    assert rep.distinguishing and not rep.trivial
    top = maximal_sec_of(nm, S({"TOP"}))
    assert top.trivial and top.bottom and not top.distinguishing


def test_not_in_any_sec():
    m = build(
        ["s", "goal", "sink"],
        ["a"],
        ["o1", "o2"],
        {
            ("s", "a"): [("o1", "sink", F(1, 2)), ("o2", "goal", F(1, 2))],
            ("goal", "a"): [("o1", "goal", 1)],
            ("sink", "a"): [("o1", "sink", 1)],
        },
    )
    nm = normalize(m, {"goal"})
    with pytest.raises(NotInAnySec):
        maximal_sec_of(nm, S({"s"}))
    an = Analysis(nm, [S({"s"})])
    assert not any(S({"s"}) in g for g in brute_force_secs(nm, an.graph.nodes))


def test_partitions(gadget):
    p = indistinguishability_partition(gadget, f1, QALL)
    assert p.blocks == (S({"q"}), S({"q1", "q2"}))
    assert relation_is_transitive(p)
    assert indistinguishability_partition(gadget, f3, Q12).blocks == (Q12,)
    single = Sec({S({"q"}): {"a"}})
    assert indistinguishability_partition(gadget, single, S({"q"})).blocks == (S({"q"}),)


def test_distinguishing_flags(gadget, scenario1):
    assert is_distinguishing(gadget, f1, check_all=True)
    assert is_distinguishing(gadget, f2, check_all=True)
    assert not is_distinguishing(gadget, f3, check_all=True)
    _, nm, _ = scenario1
    assert not is_distinguishing(nm, Sec({S({"TOP"}): set(nm.actions)}))


def test_exit_frontier_swap():
    _, nm, _ = load_normalized("ndist_swap")
    f = maximal_sec_of(nm, Q12).sec
    assert f == Sec({Q12: {"a"}})
    b = SubBelief({"q1": F(1, 3), "q2": F(2, 3)})
    swapped = SubBelief({"q1": F(2, 3), "q2": F(1, 3)})
    assert set(reachable_beliefs(nm, f, b)) == {b, swapped}
    assert enumerate_exit_frontier(nm, f, b) == [(b, "b"), (swapped, "b")]
    half = SubBelief({"q1": F(1, 2), "q2": F(1, 2)})
    assert reachable_beliefs(nm, f, half) == [half]


def test_exit_frontier_dirac(scenario1):
    _, nm, _ = scenario1
    f = maximal_sec_of(nm, S({"q1"})).sec
    beliefs = reachable_beliefs(nm, f, SubBelief.dirac("q1"))
    assert len(beliefs) <= len(f)


def test_maximal_secs_match_brute_force():
    tried = 0
    for seed in range(80):
        m, _, targets = random_instance(3, 2, 2, seed, branching=2)
        nm = normalize(m, targets)
        an = Analysis(nm, [S(q for q in nm.states if q not in ("TOP", "BOT"))])
        if len(an.graph.nodes) > 11:
            continue
        tried += 1
        brute = brute_force_secs(nm, an.graph.nodes)
        for g in brute:
            hosts = [f for f in an.secs if g.domain <= f.domain]
            assert len(hosts) == 1
            assert all(g[X] <= hosts[0][X] for X in g.domain)
        for f in an.secs:
            assert f in brute
            # adding any outside action breaks the axioms
            for X in f.domain:
                for a in set(nm.actions) - f[X]:
                    grown = dict(f.items())
                    grown[X] = f[X] | {a}
                    assert is_sec(nm, Sec(grown)) is not True
    assert tried >= 20
