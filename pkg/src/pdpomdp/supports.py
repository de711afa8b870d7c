"""Belief-support automaton, its reachability order and the rank of supports.

A support is a ``frozenset`` of state names. In a posterior-deterministic
model the successor of a support under ``(a, o)`` is unique and never larger
than the support itself, so forward exploration from any set of roots is a
finite subset construction.
"""

from collections import deque
from itertools import combinations

import networkx as nx

from .errors import NodeBudgetExceeded

__all__ = [
    "DEFAULT_BUDGET",
    "support_key",
    "fmt_support",
    "support_step",
    "SupportGraph",
    "explore",
    "RankTable",
    "rank_table",
    "subsets",
]

DEFAULT_BUDGET = 2**20


def support_key(m, S):
    """Canonical sort key: size first, then state positions in model order."""
    return (len(S), tuple(sorted(m.state_index(q) for q in S)))


def fmt_support(m, S):
    return "{" + ",".join(sorted(S, key=m.state_index)) + "}"


def subsets(S):
    """All non-empty subsets of ``S``."""
    items = sorted(S)
    for k in range(1, len(items) + 1):
        for combo in combinations(items, k):
            yield frozenset(combo)


def support_step(m, S, a, o):
    """``{delta(q, a, o) : q in S}``; empty when no state of ``S`` can emit ``o``."""
    out = set()
    for q in S:
        for q2, _ in m.successors(q, a, o):
            out.add(q2)
    return frozenset(out)


class SupportGraph:
    """Forward closure of a growing set of root supports.

    ``moves[S][a]`` is the tuple of ``(o, S')`` pairs with non-empty ``S'``,
    ordered by the model's observation order.
    """

    def __init__(self, m, budget=DEFAULT_BUDGET):
        self.model = m
        self.budget = budget
        self.nodes = set()
        self.moves = {}
        self.roots = set()

    @property
    def edges(self):
        return {
            (S, a, o): T
            for S, by_action in self.moves.items()
            for a, outs in by_action.items()
            for o, T in outs
        }

    def successors(self, S):
        return {T for outs in self.moves[S].values() for _, T in outs}

    def step(self, S, a, o):
        for o2, T in self.moves[S][a]:
            if o2 == o:
                return T
        return frozenset()

    def _admit(self, S):
        if len(self.nodes) >= self.budget:
            raise NodeBudgetExceeded(f"support exploration exceeded {self.budget} nodes")
        self.nodes.add(S)

    def extend(self, roots):
        """Add ``roots`` and close under all moves. Returns the newly added supports."""
        m = self.model
        added = []
        queue = deque()
        for R in roots:
            R = frozenset(R)
            if not R:
                raise ValueError("supports must be non-empty")
            self.roots.add(R)
            if R not in self.nodes:
                self._admit(R)
                added.append(R)
                queue.append(R)
        while queue:
            S = queue.popleft()
            by_action = {}
            for a in m.actions:
                emitted = set()
                for q in S:
                    emitted.update(m.emitted(q, a))
                outs = []
                for o in sorted(emitted, key=m.obs_index):
                    T = support_step(m, S, a, o)
                    if len(T) > len(S):
                        raise AssertionError(f"support grew along ({a}, {o}); model not posterior-deterministic")
                    outs.append((o, T))
                    if T not in self.nodes:
                        self._admit(T)
                        added.append(T)
                        queue.append(T)
                by_action[a] = tuple(outs)
            self.moves[S] = by_action
        return added

    def sorted_nodes(self):
        return sorted(self.nodes, key=lambda S: support_key(self.model, S))

    def to_networkx(self):
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for S, by_action in self.moves.items():
            for outs in by_action.values():
                for _, T in outs:
                    g.add_edge(S, T)
        return g


def explore(m, roots, budget=DEFAULT_BUDGET):
    g = SupportGraph(m, budget)
    g.extend(roots)
    return g


class RankTable:
    """Mutual-reachability classes of supports and their heights.

    ``classes[i]`` is a frozenset of supports; ``reach_edges`` holds the
    condensed reachability DAG as ``(upper, lower)`` class-index pairs.
    """

    def __init__(self, m, classes, reach_edges, ranks):
        self.model = m
        self.classes = classes
        self.reach_edges = reach_edges
        self.ranks = ranks
        self._class_of = {S: i for i, cls in enumerate(classes) for S in cls}

    def class_of(self, S):
        return self._class_of[frozenset(S)]

    def rank(self, S):
        if not S:
            return 0
        return self.ranks[self._class_of[frozenset(S)]]

    def rank_of_belief(self, b):
        """``mass(b) * rank(supp(b))``."""
        if b.is_empty():
            return 0
        return b.mass * self.rank(b.support)

    def class_size(self, i):
        return len(next(iter(self.classes[i])))

    def order(self):
        """Class DAG with reachability edges plus size edges, as a networkx graph.

        Quadratic in the number of classes; meant for inspection and tests.
        """
        g = nx.DiGraph()
        g.add_nodes_from(range(len(self.classes)))
        g.add_edges_from(self.reach_edges)
        sizes = [self.class_size(i) for i in range(len(self.classes))]
        for i in range(len(sizes)):
            for j in range(len(sizes)):
                if sizes[j] < sizes[i]:
                    g.add_edge(i, j)
        # size edges never close a cycle, since reachability cannot grow a support
        if not nx.is_directed_acyclic_graph(g):
            g = nx.condensation(g)
        return g


def rank_table(g):
    """Rank every support of a closed :class:`SupportGraph`.

    Classes are the SCCs of the support graph. A class sits above every class
    it reaches and above every class of strictly smaller supports; its rank is
    the length of the longest descending chain below it.
    """
    m = g.model
    dg = g.to_networkx()
    cond = nx.condensation(dg)
    members = [frozenset(cond.nodes[c]["members"]) for c in cond.nodes]

    # deterministic class numbering independent of hash order
    order = sorted(
        range(len(members)),
        key=lambda c: min(support_key(m, S) for S in members[c]),
    )
    renum = {old: new for new, old in enumerate(order)}
    classes = [members[old] for old in order]
    reach_edges = sorted({(renum[u], renum[v]) for u, v in cond.edges})

    sizes = []
    for cls in classes:
        lens = {len(S) for S in cls}
        if len(lens) != 1:
            raise AssertionError(f"class mixes support sizes {sorted(lens)}")
        sizes.append(lens.pop())

    below = {i: [] for i in range(len(classes))}
    for u, v in reach_edges:
        below[u].append(v)

    topo = list(nx.topological_sort(nx.DiGraph(reach_edges)))
    topo_pos = {c: i for i, c in enumerate(topo)}
    # lower classes first: ascending size, then reverse topological order
    processing = sorted(
        range(len(classes)),
        key=lambda c: (sizes[c], -topo_pos.get(c, -1)),
    )
    ranks = [0] * len(classes)
    best_of_size = {}
    for c in processing:
        r = -1
        for d in below[c]:
            r = max(r, ranks[d])
        for s, br in best_of_size.items():
            if s < sizes[c]:
                r = max(r, br)
        ranks[c] = r + 1
        best_of_size[sizes[c]] = max(best_of_size.get(sizes[c], 0), ranks[c])
    return RankTable(m, classes, reach_edges, ranks)
