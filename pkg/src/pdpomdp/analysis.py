"""Per-model cache of the support graph, ranks and SEC decomposition."""

from .errors import NotNormalized, NotPosteriorDeterministic
from .model import check_posterior_deterministic
from .sec import (
    enumerate_exit_frontier,
    indistinguishability_partition,
    indistinguishable_pairs,
    is_distinguishing,
    maximal_secs,
    relation_is_transitive,
    report,
)
from .supports import DEFAULT_BUDGET, SupportGraph, rank_table, subsets

__all__ = ["Analysis", "require_ready"]


def require_ready(m):
    """Refuse models that are not normalized or not posterior-deterministic."""
    if m.normalized is None:
        raise NotNormalized("normalize the model before analysing it")
    witness = check_posterior_deterministic(m)
    if witness is not True:
        raise NotPosteriorDeterministic(witness)


class Analysis:
    """Support graph, rank table and maximal SECs over a subset-closed universe.

    The universe is the forward closure of every non-empty subset of the
    registered root supports. It is closed under the support step and under
    taking subsets, so cut and split children always have a rank.
    ``check`` turns on the runtime assertions (transitivity of the
    indistinguishability relation, agreement of the distinguishing flag).
    """

    def __init__(self, m, roots=(), budget=DEFAULT_BUDGET, check=False):
        require_ready(m)
        self.model = m
        self.check = check
        self.graph = SupportGraph(m, budget)
        self.ranks = None
        self.secs = []
        self._sec_of = {}
        self._pairs = {}
        self._dist = {}
        self._partitions = {}
        self._frontiers = {}
        self.extend(roots)

    def extend(self, roots):
        roots = [frozenset(R) for R in roots]
        fresh = [S for R in roots for S in subsets(R) if S not in self.graph.nodes]
        if not fresh and self.ranks is not None:
            return
        self.graph.extend(fresh)
        self.ranks = rank_table(self.graph)
        self.secs = maximal_secs(self.graph)
        self._sec_of = {S: i for i, f in enumerate(self.secs) for S in f.domain}
        self._pairs.clear()
        self._dist.clear()
        self._partitions.clear()
        self._frontiers.clear()

    def rank(self, S):
        return self.ranks.rank(S)

    def rank_of_belief(self, b):
        return self.ranks.rank_of_belief(b)

    def sec_index(self, S):
        """Index of the maximal SEC containing ``S``, or ``None``."""
        return self._sec_of.get(frozenset(S))

    def pairs(self, i):
        if i not in self._pairs:
            self._pairs[i] = indistinguishable_pairs(self.model, self.secs[i])
        return self._pairs[i]

    def distinguishing(self, i):
        if i not in self._dist:
            self._dist[i] = is_distinguishing(
                self.model, self.secs[i], check_all=self.check, pairs=self.pairs(i)
            )
        return self._dist[i]

    def partition(self, i, S):
        key = (i, frozenset(S))
        if key not in self._partitions:
            p = indistinguishability_partition(self.model, self.secs[i], S, self.pairs(i))
            if self.check and not relation_is_transitive(p):
                raise AssertionError(f"indistinguishability is not transitive on {sorted(S)}")
            self._partitions[key] = p
        return self._partitions[key]

    def frontier(self, i, b, cap=100_000):
        key = (i, b)
        if key not in self._frontiers:
            self._frontiers[key] = tuple(enumerate_exit_frontier(self.model, self.secs[i], b, cap))
        return self._frontiers[key]

    def reports(self):
        return [report(self.model, f) for f in self.secs]
