"""Support end components (SECs) and indistinguishability inside them.

An SEC maps belief supports to non-empty action sets such that playing
those actions never leaves the domain and every domain support can reach
every other. Maximal SECs are the maximal end components of the
belief-support MDP and are computed by the usual SCC-pruning fixpoint.
"""

from collections import deque
from dataclasses import dataclass, field

import networkx as nx

from .errors import DisjointDomains, EmptyDomain, NodeBudgetExceeded, NoExit, NotInAnySec
from .model import belief_update, obs_probability
from .supports import explore, fmt_support, support_key, support_step

__all__ = [
    "Sec",
    "AxiomViolation",
    "Partition",
    "SecReport",
    "is_sec",
    "sec_union",
    "maximal_secs",
    "maximal_sec_of",
    "indistinguishability_partition",
    "indistinguishable_pairs",
    "is_distinguishing",
    "reachable_beliefs",
    "enumerate_exit_frontier",
]


class Sec:
    """Partial map from supports to action sets. Immutable and hashable."""

    __slots__ = ("_map", "_hash")

    def __init__(self, mapping):
        self._map = {frozenset(S): frozenset(acts) for S, acts in dict(mapping).items()}
        self._hash = hash(frozenset(self._map.items()))

    @property
    def domain(self):
        return frozenset(self._map)

    def __getitem__(self, S):
        return self._map[frozenset(S)]

    def get(self, S, default=frozenset()):
        return self._map.get(frozenset(S), default)

    def __contains__(self, S):
        return frozenset(S) in self._map

    def items(self):
        return self._map.items()

    def __len__(self):
        return len(self._map)

    def __eq__(self, other):
        if not isinstance(other, Sec):
            return NotImplemented
        return self._map == other._map

    def __hash__(self):
        return self._hash

    def __repr__(self):
        inner = ", ".join(
            "{" + ",".join(sorted(S)) + "}->" + "{" + ",".join(sorted(a)) + "}"
            for S, a in sorted(self._map.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))
        )
        return f"Sec({inner})"

    def sorted_domain(self, m):
        return sorted(self._map, key=lambda S: support_key(m, S))

    def support_size(self):
        return len(next(iter(self._map)))


@dataclass(frozen=True)
class AxiomViolation:
    """Why a candidate map is not an SEC. Falsy, like a failed check."""

    axiom: str
    witness: tuple

    def __bool__(self):
        return False


@dataclass(frozen=True)
class Partition:
    support: frozenset
    blocks: tuple
    indistinguishable: frozenset = field(default=frozenset(), compare=False)

    def block_of(self, q):
        for blk in self.blocks:
            if q in blk:
                return blk
        raise KeyError(q)


@dataclass(frozen=True)
class SecReport:
    sec: Sec
    maximal: bool
    distinguishing: bool
    trivial: bool
    bottom: bool


def is_sec(m, f):
    """``True`` when ``f`` satisfies the three SEC axioms, else an :class:`AxiomViolation`."""
    if not len(f):
        raise EmptyDomain("an SEC needs a non-empty domain")
    for S in f.sorted_domain(m):
        acts = f[S]
        unknown = acts - set(m.actions)
        if unknown:
            raise ValueError(f"unknown actions {sorted(unknown)}")
        if not acts:
            return AxiomViolation("non-emptiness", (S,))
    dom = f.domain
    for S in f.sorted_domain(m):
        for a in sorted(f[S], key=m.actions.index):
            for o in m.observations:
                T = support_step(m, S, a, o)
                if T and T not in dom:
                    return AxiomViolation("closure", (S, a, o, T))
    for S in f.sorted_domain(m):
        seen = _reach_inside(m, f, S)
        for T in f.sorted_domain(m):
            if T not in seen:
                return AxiomViolation("strong-connectivity", (S, T))
    sizes = {len(S) for S in dom}
    if len(sizes) != 1:
        raise AssertionError(f"SEC with mixed support sizes {sorted(sizes)}")
    return True


def _reach_inside(m, f, S):
    seen = {S}
    queue = deque([S])
    while queue:
        T = queue.popleft()
        for a in f[T]:
            for o in m.observations:
                U = support_step(m, T, a, o)
                if U and U in f and U not in seen:
                    seen.add(U)
                    queue.append(U)
    return seen


def sec_union(f, g, m=None):
    """Pointwise union of two SECs with intersecting domains.

    When the model is given the result is re-checked against the axioms.
    """
    if not (f.domain & g.domain):
        raise DisjointDomains("SEC domains do not intersect")
    merged = {}
    for S in f.domain | g.domain:
        merged[S] = f.get(S) | g.get(S)
    h = Sec(merged)
    if m is not None and is_sec(m, h) is not True:
        raise AssertionError(f"union of SECs is not an SEC: {is_sec(m, h)}")
    return h


def maximal_secs(g):
    """Maximal end components of the belief-support MDP on a closed support graph.

    Returns the SECs sorted by their smallest support.
    """
    m = g.model
    allowed = {S: set(m.actions) for S in g.nodes}
    while True:
        dg = nx.DiGraph()
        dg.add_nodes_from(g.nodes)
        for S, acts in allowed.items():
            for a in acts:
                for _, T in g.moves[S][a]:
                    dg.add_edge(S, T)
        comp = {}
        for i, scc in enumerate(nx.strongly_connected_components(dg)):
            for S in scc:
                comp[S] = i
        changed = False
        for S, acts in allowed.items():
            for a in list(acts):
                if any(comp[T] != comp[S] or not allowed[T] for _, T in g.moves[S][a]):
                    acts.discard(a)
                    changed = True
        if not changed:
            break
    groups = {}
    for S, acts in allowed.items():
        if acts:
            groups.setdefault(comp[S], {})[S] = acts
    secs = [Sec(dom) for dom in groups.values()]
    secs.sort(key=lambda f: min(support_key(m, S) for S in f.domain))
    return secs


def maximal_sec_of(m, S, graph=None, secs=None):
    """The maximal SEC whose domain contains ``S``, as a :class:`SecReport`.

    Raises :class:`NotInAnySec` when no end component keeps ``S``.
    """
    S = frozenset(S)
    if secs is None:
        if graph is None or S not in graph.nodes:
            graph = explore(m, [S])
        secs = maximal_secs(graph)
    for f in secs:
        if S in f:
            return report(m, f)
    raise NotInAnySec(f"{fmt_support(m, S)} belongs to no SEC")


def report(m, f, maximal=True):
    dom = f.domain
    special = {m.top, m.bot} - {None}
    trivial = len(dom) == 1 and next(iter(dom)) in {frozenset([s]) for s in special}
    bottom = all(f[S] == frozenset(m.actions) for S in dom)
    return SecReport(f, maximal, is_distinguishing(m, f), trivial, bottom)


def _pair(r, s):
    return (r, s) if r < s else (s, r)


def indistinguishable_pairs(m, f):
    """All ``(S, r, r')`` with ``r < r'`` in ``S`` that are ``(f, S)``-indistinguishable.

    Triples move synchronously under ``(a, o)`` with ``a`` in ``f``; a triple
    is distinguishable when it can reach one where some allowed action gives
    the two states different observation marginals.
    """
    triples = []
    local = set()
    succ = {}
    for S in f.sorted_domain(m):
        states = sorted(S)
        for i in range(len(states)):
            for j in range(i + 1, len(states)):
                t = (S, states[i], states[j])
                triples.append(t)
                r, s = t[1], t[2]
                outs = []
                for a in f[S]:
                    for o in m.observations:
                        if m.obs_prob(r, a, o) != m.obs_prob(s, a, o):
                            local.add(t)
                        T = support_step(m, S, a, o)
                        if not T:
                            continue
                        r2, s2 = m.successor(r, a, o), m.successor(s, a, o)
                        if r2 is None or s2 is None or r2 == s2:
                            continue
                        outs.append((T,) + _pair(r2, s2))
                succ[t] = outs
    pred = {t: [] for t in triples}
    for t, outs in succ.items():
        for u in outs:
            if u in pred:
                pred[u].append(t)
    dist = set(local)
    queue = deque(local)
    while queue:
        u = queue.popleft()
        for t in pred[u]:
            if t not in dist:
                dist.add(t)
                queue.append(t)
    return frozenset(t for t in triples if t not in dist)


def _blocks_from_pairs(S, pairs):
    g = nx.Graph()
    g.add_nodes_from(S)
    g.add_edges_from(pairs)
    blocks = [frozenset(c) for c in nx.connected_components(g)]
    blocks.sort(key=lambda blk: sorted(blk))
    return tuple(blocks)


def indistinguishability_partition(m, f, S, pairs=None):
    """Blocks of ``(f, S)``-indistinguishable states of ``S``."""
    S = frozenset(S)
    if pairs is None:
        pairs = indistinguishable_pairs(m, f)
    local = frozenset((r, s) for (T, r, s) in pairs if T == S)
    return Partition(S, _blocks_from_pairs(S, local), local)


def relation_is_transitive(partition):
    """Each block must be a clique of the computed indistinguishability relation."""
    rel = partition.indistinguishable
    for blk in partition.blocks:
        items = sorted(blk)
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                if (items[i], items[j]) not in rel:
                    return False
    return True


def is_distinguishing(m, f, check_all=False, pairs=None):
    """Whether some domain support of ``f`` has two distinguishable states.

    One support decides the answer; ``check_all`` recomputes it on every
    support and fails loudly if they disagree.
    """
    if pairs is None:
        pairs = indistinguishable_pairs(m, f)
    dom = f.sorted_domain(m)
    first = len(indistinguishability_partition(m, f, dom[0], pairs).blocks) > 1
    if check_all:
        for S in dom[1:]:
            here = len(indistinguishability_partition(m, f, S, pairs).blocks) > 1
            if here != first:
                raise AssertionError(f"distinguishing flag differs at {fmt_support(m, S)}")
    return first


def reachable_beliefs(m, f, b, cap=100_000):
    """All beliefs reachable from ``b`` using actions of ``f`` only, in BFS order."""
    if b.support not in f:
        raise ValueError("belief support is not in the SEC domain")
    seen = {b}
    order = [b]
    queue = deque([b])
    while queue:
        c = queue.popleft()
        S = c.support
        for a in sorted(f[S], key=m.actions.index):
            for o in m.observations:
                if obs_probability(m, c, a, o) == 0:
                    continue
                d = belief_update(m, c, a, o)
                if d not in seen:
                    if len(seen) >= cap:
                        raise NodeBudgetExceeded(f"more than {cap} beliefs inside the SEC")
                    seen.add(d)
                    order.append(d)
                    queue.append(d)
    return order


def enumerate_exit_frontier(m, f, b, cap=100_000):
    """Pairs ``(b', a)`` with ``b'`` reachable inside ``f`` and ``a`` leaving ``f``.

    Sorted by belief then action order.
    """
    out = []
    for c in sorted(reachable_beliefs(m, f, b, cap)):
        inside = f[c.support]
        for a in m.actions:
            if a not in inside:
                out.append((c, a))
    if not out:
        raise NoExit(f"no action leaves the SEC from {b}")
    return out
