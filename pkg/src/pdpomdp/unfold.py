"""Smart belief-tree unfolding with certified value bounds.

Nodes are labelled either by a sub-belief or by a ``(sub-belief, action)``
pair and are expanded by the first applicable of six rules. Two statistics
are propagated bottom-up: ``value`` (a lower bound on the reachability
value) and ``rankhat`` (which bounds the remaining error together with the
cut slack ``|supp(b)| * eta``).
"""

import enum
import logging
import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction

from mpmath import iv
from mpmath.libmp import to_rational

from .analysis import Analysis, require_ready
from .errors import EmptyResult, NodeBudgetExceeded
from .model import belief_update, cut, obs_probability, restrict, to_fraction
from .modelio import ResultDocument

__all__ = [
    "ApproxParams",
    "Rule",
    "UnfoldNode",
    "Unfolder",
    "Decision",
    "approximate",
    "decide",
    "certified_depth",
    "default_node_budget",
]

log = logging.getLogger(__name__)

ZERO = Fraction(0)
ONE = Fraction(1)
DEFAULT_NODE_BUDGET = 2**20
LOG_PRECISION = 512


def default_node_budget():
    raw = os.environ.get("PDPOMDP_NODE_BUDGET")
    if raw:
        return int(raw)
    return DEFAULT_NODE_BUDGET


def _log_upper(x):
    """A rational upper bound on ``ln(x)`` for rational ``x > 0``."""
    x = Fraction(x)
    saved = iv.prec
    iv.prec = LOG_PRECISION
    try:
        val = iv.log(iv.mpf(x.numerator) / iv.mpf(x.denominator))
        p, q = to_rational(val._mpi_[1])
    finally:
        iv.prec = saved
    return Fraction(int(p), int(q))


@dataclass(frozen=True)
class ApproxParams:
    epsilon: Fraction
    n_states: int
    p_min: Fraction
    eta: Fraction
    big_n: int
    c: Fraction

    @classmethod
    def build(cls, n_states, p_min, epsilon):
        epsilon = to_fraction(epsilon)
        p_min = to_fraction(p_min)
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < p_min <= 1:
            raise ValueError("p_min must lie in (0, 1]")
        eta = epsilon / (2 * n_states)
        big_n = 2 ** (n_states + 1)
        c = (p_min * eta) ** big_n / 2**n_states
        return cls(epsilon, n_states, p_min, eta, big_n, c)

    @classmethod
    def for_model(cls, m, epsilon):
        return cls.build(len(m.states), m.p_min(), epsilon)

    @property
    def n_eps(self):
        return certified_depth(self)


def certified_depth(params):
    """Smallest ``n`` with ``n >= (N/c) * ((|Q|+1) ln 2 + ln(1/eps))``.

    Both logarithms are replaced by rational upper bounds, so the returned
    depth is never below the exact threshold.
    """
    logs = (params.n_states + 1) * _log_upper(2) + _log_upper(1 / params.epsilon)
    bound = Fraction(params.big_n) / params.c * logs
    return max(0, math.ceil(bound))


class Rule(enum.IntEnum):
    OBSERVE = 1
    LEAF = 2
    CUT = 3
    SPLIT = 4
    EXIT = 5
    BRANCH = 6

    @property
    def kind(self):
        return {1: "sum", 2: "leaf", 3: "cut", 4: "sum", 5: "max", 6: "max"}[self.value]


def label_key(label):
    """Total order on labels, used for tie-breaking and stable output."""
    if isinstance(label, tuple):
        return (1, label[0].sort_key(), label[1])
    return (0, label.sort_key(), "")


def label_belief(label):
    return label[0] if isinstance(label, tuple) else label


@dataclass
class UnfoldNode:
    label: object
    rule: Rule
    depth: int
    value: Fraction = ZERO
    rankhat: Fraction = ZERO
    children: list = field(default_factory=list)  # (weight, UnfoldNode)
    truncated: bool = False
    best: int = -1  # index of the witness child at max nodes

    @property
    def kind(self):
        if self.truncated or not self.children:
            return "leaf"
        return self.rule.kind


class Unfolder:
    """Expands labels by the unfolding rules and evaluates the statistics.

    Expansion is a deterministic function of the label, so it is cached.
    """

    def __init__(self, m, eta, analysis=None):
        require_ready(m)
        self.model = m
        self.eta = to_fraction(eta)
        self.analysis = analysis if analysis is not None else Analysis(m)
        self._top = frozenset([m.top])
        self._bot = frozenset([m.bot])
        self._cache = {}

    def ensure_roots(self, labels):
        self.analysis.extend([label_belief(x).support for x in labels if not label_belief(x).is_empty()])

    def expand(self, label):
        hit = self._cache.get(label)
        if hit is None:
            hit = self._expand(label)
            self._cache[label] = hit
        return hit

    def _expand(self, label):
        m = self.model
        an = self.analysis
        if isinstance(label, tuple):
            b, a = label
            kids = []
            for o in m.observations:
                p = obs_probability(m, b, a, o)
                if p:
                    kids.append((p, belief_update(m, b, a, o)))
            return Rule.OBSERVE, tuple(kids)
        b = label
        S = b.support
        if not S or S == self._top or S == self._bot:
            return Rule.LEAF, ()
        if b.min_mass() < self.eta:
            try:
                return Rule.CUT, ((ONE, cut(b, self.eta)),)
            except EmptyResult:
                return Rule.CUT, ()
        i = an.sec_index(S)
        if i is not None:
            if an.distinguishing(i):
                kids = []
                for C in an.partition(i, S).blocks:
                    part = restrict(b, C)
                    kids.append((part.mass / b.mass, part.scaled(b.mass / part.mass)))
                return Rule.SPLIT, tuple(kids)
            return Rule.EXIT, tuple((ONE, (c, a)) for c, a in an.frontier(i, b))
        return Rule.BRANCH, tuple((ONE, (b, a)) for a in m.actions)

    def leaf_stats(self, label):
        """Statistics of a label treated as a leaf (true leaf or depth frontier)."""
        b = label_belief(label)
        if isinstance(label, tuple):
            return ZERO, self.analysis.rank_of_belief(b)
        if b.is_empty():
            return ZERO, ZERO
        if b.support == self._top:
            return b.mass, ZERO
        if all(p < self.eta for _, p in b.items()):
            return ZERO, ZERO  # cut to nothing
        return ZERO, self.analysis.rank_of_belief(b)

    @staticmethod
    def combine(rule, weighted):
        """Fold child statistics ``[(weight, (value, rankhat)), ...]`` by node kind."""
        kind = rule.kind
        if kind == "sum":
            v = sum((w * s[0] for w, s in weighted), ZERO)
            r = sum((w * s[1] for w, s in weighted), ZERO)
            return v, r
        if kind == "cut":
            return weighted[0][1]
        return max(s[0] for _, s in weighted), max(s[1] for _, s in weighted)

    def evaluate(self, root, depth, memo=True, budget=None):
        """``(value, rankhat)`` of ``root`` with the tree cut off at ``depth``."""
        self.ensure_roots([root])
        if memo:
            tree = LayeredTree(self, root)
            tree.grow(depth, budget or default_node_budget())
            return tree.stats(depth)
        return self._evaluate_plain(root, depth)

    def _evaluate_plain(self, label, depth):
        # plain recursion over the tree, no sharing; for differential testing
        if depth == 0:
            return self.leaf_stats(label)
        rule, kids = self.expand(label)
        if not kids:
            return self.leaf_stats(label)
        return self.combine(rule, [(w, self._evaluate_plain(y, depth - 1)) for w, y in kids])

    def tree(self, root, depth):
        """Materialize the tree prefix of the given depth with statistics."""
        self.ensure_roots([root])

        def build(label, d, remaining):
            rule, kids = self.expand(label)
            node = UnfoldNode(label, rule, d)
            if remaining == 0 or not kids:
                node.truncated = bool(kids)
                node.value, node.rankhat = self.leaf_stats(label)
                return node
            for w, y in kids:
                node.children.append((w, build(y, d + 1, remaining - 1)))
            node.value, node.rankhat = self.combine(
                rule, [(w, (c.value, c.rankhat)) for w, c in node.children]
            )
            if rule.kind == "max":
                # witness: best value, ties to the smallest label
                order = sorted(range(len(node.children)), key=lambda j: label_key(node.children[j][1].label))
                node.best = max(order, key=lambda j: node.children[j][1].value)
            return node

        return build(root, 0, depth)


class LayeredTree:
    """Breadth-first layers of distinct labels below a root.

    Layer ``k`` holds every label occurring at tree depth ``k``. Statistics at
    depth ``n`` are computed bottom-up over the layers, which is the same as
    memoizing on ``(label, remaining depth)``.
    """

    def __init__(self, unfolder, root):
        self.unfolder = unfolder
        self.root = root
        self.layers = [[root]]
        self.closed = False
        self.count = 1

    @property
    def height(self):
        return len(self.layers) - 1

    def grow(self, depth, budget):
        unf = self.unfolder
        while self.height < depth and not self.closed:
            nxt = {}
            for x in self.layers[-1]:
                for _, y in unf.expand(x)[1]:
                    nxt[y] = None
            if not nxt:
                self.closed = True
                break
            if self.count + len(nxt) > budget:
                raise NodeBudgetExceeded(f"unfolding exceeded the node budget of {budget}")
            self.layers.append(list(nxt))
            self.count += len(nxt)

    def stats(self, depth):
        unf = self.unfolder
        top = min(depth, self.height)
        below = {}
        for k in range(top, -1, -1):
            cur = {}
            for x in self.layers[k]:
                if k == depth:
                    cur[x] = unf.leaf_stats(x)
                    continue
                rule, kids = unf.expand(x)
                if not kids:
                    cur[x] = unf.leaf_stats(x)
                else:
                    cur[x] = unf.combine(rule, [(w, below[y]) for w, y in kids])
            below = cur
        return below[self.root]


def _bounds(v, r, b, params):
    upper = v + r + len(b) * params.eta
    # the value never exceeds the mass of the belief
    return v, min(upper, b.mass)


def approximate(m, b, epsilon, mode="anytime", node_budget=None, memo=True, name="model", timing=False):
    """Certified bounds ``lower <= Val(b) <= upper`` with ``upper - lower <= epsilon``.

    ``mode="anytime"`` deepens by ``N`` levels until the bounds are tight
    enough. ``mode="certified"`` evaluates at the depth given by
    :func:`certified_depth` and refuses when that is out of reach.
    On :class:`NodeBudgetExceeded` the best bounds so far are attached as
    ``partial``.
    """
    require_ready(m)
    epsilon = to_fraction(epsilon)
    if b.mass != 1:
        raise ValueError("the initial belief must have total mass 1")
    if mode not in ("anytime", "certified"):
        raise ValueError(f"unknown mode {mode!r}")
    budget = node_budget or default_node_budget()
    params = ApproxParams.for_model(m, epsilon)
    started = time.perf_counter()
    unf = Unfolder(m, params.eta, Analysis(m, [b.support]))

    def document(v, r, depth, nodes, status, extra=None):
        lower, upper = _bounds(v, r, b, params)
        doc = ResultDocument(
            model=name,
            epsilon=epsilon,
            eta=params.eta,
            lower=lower,
            upper=upper,
            rankhat=r,
            nodes_expanded=nodes,
            max_depth=depth,
            mode=mode,
            status=status,
            extra=extra or {},
        )
        if timing:
            doc.wall_time_ms = round((time.perf_counter() - started) * 1000)
        return doc

    if not memo:
        return _approximate_plain(unf, b, params, mode, budget, document)

    tree = LayeredTree(unf, b)
    if mode == "certified":
        n = certified_depth(params)
        probe = min(n, params.big_n)
        tree.grow(probe, budget)
        if not tree.closed and tree.height < n:
            width = max(len(layer) for layer in tree.layers)
            estimate = tree.count + width * (n - tree.height)
            if estimate > budget:
                # the probe depth still gives valid bounds
                v, r = tree.stats(tree.height)
                partial = document(v, r, tree.height, tree.count, "budget_exceeded", {"n_eps": n})
                raise NodeBudgetExceeded(
                    f"certified depth n_eps={n} needs about {estimate} nodes, budget is {budget}",
                    partial=partial,
                )
            tree.grow(n, budget)
        v, r = tree.stats(n)
        status = "converged" if _bounds(v, r, b, params)[1] - v <= epsilon else "certified"
        return document(v, r, min(n, tree.height), tree.count, status, {"n_eps": n})

    depth = 0
    best = None
    while True:
        try:
            tree.grow(depth, budget)
        except NodeBudgetExceeded as exc:
            if best is not None:
                best.status = "budget_exceeded"
            raise NodeBudgetExceeded(str(exc), partial=best) from None
        v, r = tree.stats(depth)
        best = document(v, r, min(depth, tree.height), tree.count, "running")
        width = best.upper - best.lower
        log.info("depth %d width %.6g nodes %d", depth, float(width), tree.count)
        if r <= epsilon / 2 or width <= epsilon:
            best.status = "converged"
            return best
        if tree.closed and depth >= tree.height:
            # nothing left to expand yet still too wide: cannot happen with rank-0 leaves
            best.status = "exhausted"
            return best
        depth += params.big_n


def _approximate_plain(unf, b, params, mode, budget, document):
    depth = 0
    while True:
        v, r = unf.evaluate(b, depth, memo=False)
        doc = document(v, r, depth, None, "running")
        if r <= params.epsilon / 2 or doc.upper - doc.lower <= params.epsilon:
            doc.status = "converged"
            return doc
        depth += 1
        if depth > budget:
            raise NodeBudgetExceeded("plain evaluation exceeded the depth budget", partial=doc)


@dataclass(frozen=True)
class Decision:
    case: str
    threshold: Fraction
    epsilon: Fraction
    lower: Fraction
    upper: Fraction

    def as_json(self):
        from .modelio import rational_json

        return {
            "case": self.case,
            "threshold": rational_json(self.threshold),
            "epsilon": rational_json(self.epsilon),
            "lower": rational_json(self.lower),
            "upper": rational_json(self.upper),
        }


def decide(m, b, threshold, epsilon, **kwargs):
    """``CaseI`` (value at least ``threshold``) or ``CaseII`` (value below ``threshold + epsilon``)."""
    threshold = to_fraction(threshold)
    epsilon = to_fraction(epsilon)
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    res = approximate(m, b, epsilon, **kwargs)
    case = "CaseII" if res.upper < threshold + epsilon else "CaseI"
    return Decision(case, threshold, epsilon, res.lower, res.upper)
