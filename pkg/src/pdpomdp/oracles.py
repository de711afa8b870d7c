"""Independent validators for the unfolder.

* :func:`naive_lower_bound` optimal reachability within ``n`` steps (exact).
* :func:`exact_finite_belief_value` value iteration on the reachable belief
  MDP when it is finite (floating point, converges from below).
* :func:`simulate` Monte Carlo runs of a finite-memory controller.
* :func:`generate_random_pd` seeded random posterior-deterministic models.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .errors import ModelSyntaxError, NodeBudgetExceeded, NotFinite, NotNormalized
from .model import SubBelief, belief_update, obs_probability, validate
from .supports import support_step

__all__ = [
    "naive_lower_bound",
    "exact_finite_belief_value",
    "StrategySpec",
    "uniform_in_sec",
    "wait_k_then_switch",
    "SimulationReport",
    "simulate",
    "wilson_interval",
    "generate_random_pd",
    "random_instance",
    "mutate_collision",
]

log = logging.getLogger(__name__)


def _need_normalized(m):
    if m.normalized is None:
        raise NotNormalized("oracles need a normalized model")


def naive_lower_bound(m, b, n, budget=1_000_000):
    """Maximal probability of reaching the target within ``n`` actions, exactly."""
    _need_normalized(m)
    top, bot = frozenset([m.top]), frozenset([m.bot])
    memo = {}

    def value(c, k):
        S = c.support
        if S == top:
            return c.mass
        if S == bot or not S:
            return Fraction(0)
        if k == 0:
            return c.get(m.top)
        key = (c, k)
        if key in memo:
            return memo[key]
        if len(memo) >= budget:
            raise NodeBudgetExceeded(f"naive unfolding exceeded {budget} nodes")
        best = Fraction(0)
        for a in m.actions:
            total = Fraction(0)
            for o in m.observations:
                p = obs_probability(m, c, a, o)
                if p:
                    total += p * value(belief_update(m, c, a, o), k - 1)
            best = max(best, total)
        memo[key] = best
        return best

    return value(b, n)


def exact_finite_belief_value(m, b, cap=100_000, tol=1e-12, max_iter=1_000_000):
    """Maximal reachability value of ``b`` when its reachable belief set is finite.

    Raises :class:`NotFinite` once more than ``cap`` beliefs have been found.
    The answer is a float accurate to roughly ``tol``.
    """
    _need_normalized(m)
    if b.is_empty():
        return 0.0
    mass = b.mass
    start = b.scaled(1 / mass)
    top, bot = frozenset([m.top]), frozenset([m.bot])

    index = {start: 0}
    beliefs = [start]
    rows = []  # (belief index, action, [(prob, successor index)])
    queue = deque([start])
    while queue:
        c = queue.popleft()
        i = index[c]
        if c.support in (top, bot):
            continue
        for a in m.actions:
            out = []
            for o in m.observations:
                p = obs_probability(m, c, a, o)
                if not p:
                    continue
                d = belief_update(m, c, a, o)
                if d not in index:
                    if len(beliefs) >= cap:
                        raise NotFinite(f"more than {cap} reachable beliefs")
                    index[d] = len(beliefs)
                    beliefs.append(d)
                    queue.append(d)
                out.append((float(p), index[d]))
            rows.append((i, out))

    n = len(beliefs)
    fixed = np.zeros(n, dtype=bool)
    x = np.zeros(n)
    for c, i in index.items():
        if c.support == top:
            fixed[i], x[i] = True, 1.0
        elif c.support == bot:
            fixed[i] = True
    rows.sort(key=lambda r: r[0])
    owner = np.array([i for i, _ in rows], dtype=np.int64)
    data, cols, rptr = [], [], [0]
    for _, out in rows:
        for p, j in out:
            data.append(p)
            cols.append(j)
        rptr.append(len(data))
    P = sp.csr_matrix((data, cols, rptr), shape=(len(rows), n))
    starts = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]]) if len(rows) else np.array([], int)
    targets = owner[starts] if len(rows) else np.array([], int)

    for it in range(max_iter):
        if not len(rows):
            break
        q = P @ x
        best = np.maximum.reduceat(q, starts)
        new = x.copy()
        new[targets] = best
        delta = np.max(np.abs(new - x))
        x = new
        if delta < tol:
            break
    else:
        log.warning("value iteration stopped after %d iterations", max_iter)
    return float(mass) * float(x[0])


# -- strategies ---------------------------------------------------------


@dataclass
class StrategySpec:
    """Finite-memory controller.

    ``choose[mem]`` is a tuple of ``(action, probability)``; ``update`` maps
    ``(mem, action, observation)`` to the next memory state, where the
    observation may be ``"*"`` as a wildcard. Missing updates keep the memory.
    """

    memory: tuple
    choose: dict
    update: dict = field(default_factory=dict)
    start: str = None

    def __post_init__(self):
        self.memory = tuple(self.memory)
        if self.start is None:
            self.start = self.memory[0]
        for mem, dist in self.choose.items():
            if mem not in self.memory:
                raise ValueError(f"choice for unknown memory state {mem!r}")
            if sum(p for _, p in dist) != 1:
                raise ValueError(f"action distribution of {mem!r} does not sum to 1")
        for mem in self.memory:
            if mem not in self.choose:
                raise ValueError(f"memory state {mem!r} has no action choice")

    def next_memory(self, mem, a, o):
        hit = self.update.get((mem, a, o))
        if hit is None:
            hit = self.update.get((mem, a, "*"), mem)
        return hit

    def check_against(self, m):
        for dist in self.choose.values():
            for a, _ in dist:
                if a not in m.actions:
                    raise ValueError(f"strategy plays unknown action {a!r}")

    @classmethod
    def parse(cls, text):
        from .modelio import _lines

        memory = None
        choose, update = {}, {}
        for ln in _lines(text):
            key = ln.take("ident", what="'memory', 'choose' or 'update'")
            ln.take("punct", ":", what="':'")
            if key[1] == "memory":
                memory = ln.idents()
            elif key[1] == "choose":
                mem = ln.take("ident", what="memory state")[1]
                a = ln.take("ident", what="action")[1]
                choose.setdefault(mem, []).append((a, ln.number()))
            elif key[1] == "update":
                mem = ln.take("ident", what="memory state")[1]
                a = ln.take("ident", what="action")[1]
                tok = ln.peek()
                if tok and tok[1] == "*":
                    o = "*"
                    ln.i += 1
                else:
                    o = ln.take("ident", what="observation or '*'")[1]
                ln.take("arrow", what="'->'")
                update[(mem, a, o)] = ln.take("ident", what="memory state")[1]
            else:
                ln.fail(f"unknown strategy section {key[1]!r}", key)
            if not ln.at_end():
                ln.fail("unexpected trailing text", ln.peek())
        if not memory:
            raise ModelSyntaxError("strategy declares no memory states", 1)
        try:
            return cls(memory, {k: tuple(v) for k, v in choose.items()}, update)
        except ValueError as exc:
            raise ModelSyntaxError(str(exc), 1) from exc

    def emit(self):
        from .modelio import render_fraction

        out = ["memory: " + " ".join(self.memory)]
        for mem in self.memory:
            for a, p in self.choose[mem]:
                out.append(f"choose: {mem} {a} {render_fraction(p)}")
        for (mem, a, o), nxt in sorted(self.update.items()):
            out.append(f"update: {mem} {a} {o} -> {nxt}")
        return "\n".join(out) + "\n"


def uniform_in_sec(m, f, start):
    """Play uniformly among ``f(S)`` where ``S`` is the current belief support."""
    dom = f.sorted_domain(m)
    names = {S: f"S{i}" for i, S in enumerate(dom)}
    choose, update = {}, {}
    for S in dom:
        acts = [a for a in m.actions if a in f[S]]
        choose[names[S]] = tuple((a, Fraction(1, len(acts))) for a in acts)
        for a in acts:
            for o in m.observations:
                T = support_step(m, S, a, o)
                if T in names:
                    update[(names[S], a, o)] = names[T]
    return StrategySpec(tuple(names[S] for S in dom), choose, update, names[frozenset(start)])


def wait_k_then_switch(k, wait, switch, triggers=None):
    """Play ``wait`` ``k`` times, then ``switch`` forever.

    ``triggers`` maps an observation seen while waiting to an action that is
    played from then on.
    """
    triggers = dict(triggers or {})
    memory = [f"w{i}" for i in range(k + 1)]
    choose = {f"w{i}": ((wait, Fraction(1)),) for i in range(k)}
    choose[f"w{k}"] = ((switch, Fraction(1)),)
    update = {}
    for i in range(k):
        update[(f"w{i}", wait, "*")] = f"w{i + 1}"
    for o, act in sorted(triggers.items()):
        name = f"t_{act}"
        if name not in memory:
            memory.append(name)
            choose[name] = ((act, Fraction(1)),)
        for i in range(k):
            update[(f"w{i}", wait, o)] = name
    return StrategySpec(tuple(memory), choose, update, "w0")


@dataclass(frozen=True)
class SimulationReport:
    runs: int
    horizon: int
    hits: int
    estimate: float
    interval: tuple
    seed: int

    def as_json(self):
        return {
            "runs": self.runs,
            "horizon": self.horizon,
            "hits": self.hits,
            "estimate": self.estimate,
            "interval": list(self.interval),
            "seed": self.seed,
        }


def wilson_interval(hits, runs, z=1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if runs == 0:
        return (0.0, 1.0)
    p = hits / runs
    denom = 1 + z * z / runs
    centre = (p + z * z / (2 * runs)) / denom
    half = z * math.sqrt(p * (1 - p) / runs + z * z / (4 * runs * runs)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


def _sampler(pairs):
    items = [x for x, _ in pairs]
    cum = np.cumsum([float(p) for _, p in pairs])
    cum[-1] = 1.0
    return items, cum


def simulate(m, b, strategy, runs, horizon, seed):
    """Fraction of runs that reach the target within ``horizon`` steps."""
    _need_normalized(m)
    strategy.check_against(m)
    rng = np.random.default_rng(seed)
    init = _sampler(b.scaled(1 / b.mass).items())
    moves = {k: _sampler([((o, q2), p) for o, q2, p in v]) for k, v in m.trans.items()}
    choice = {mem: _sampler(dist) for mem, dist in strategy.choose.items()}

    def draw(sampler, u):
        items, cum = sampler
        return items[min(int(np.searchsorted(cum, u, side="right")), len(items) - 1)]

    hits = 0
    for _ in range(runs):
        u = rng.random(2 * horizon + 1)
        q = draw(init, u[0])
        mem = strategy.start
        for t in range(horizon):
            if q == m.top or q == m.bot:
                break
            a = draw(choice[mem], u[2 * t + 1])
            o, q = draw(moves[(q, a)], u[2 * t + 2])
            mem = strategy.next_memory(mem, a, o)
        if q == m.top:
            hits += 1
    return SimulationReport(runs, horizon, hits, hits / runs if runs else 0.0, wilson_interval(hits, runs), seed)


# -- random models ------------------------------------------------------


def _weights(rng, k):
    """``k`` positive rationals with a common denominator at most 16, summing to 1."""
    d = int(rng.integers(k, 17))
    cuts = sorted(rng.choice(np.arange(1, d), size=k - 1, replace=False).tolist()) if k > 1 else []
    bounds = [0] + cuts + [d]
    return [Fraction(bounds[i + 1] - bounds[i], d) for i in range(k)]


def generate_random_pd(n_states, n_actions, n_obs, seed, branching=2, fully_observable=False):
    """Seeded random posterior-deterministic model.

    Each (state, action) gets up to ``branching`` outcomes, each with its own
    observation, so the successor is determined by the observation. With
    ``fully_observable`` the observation names the successor state.
    """
    if n_states < 2 or n_actions < 1 or n_obs < 1:
        raise ValueError("need at least 2 states, 1 action and 1 observation")
    rng = np.random.default_rng(seed)
    states = [f"s{i}" for i in range(n_states)]
    actions = [f"a{i}" for i in range(n_actions)]
    if fully_observable:
        observations = [f"o_{q}" for q in states]
    else:
        observations = [f"o{i}" for i in range(n_obs)]
    trans = {}
    for q in states:
        for a in actions:
            if fully_observable:
                k = int(rng.integers(1, min(branching, n_states) + 1))
                succ = rng.choice(n_states, size=k, replace=False).tolist()
                obs = [f"o_{states[j]}" for j in succ]
            else:
                k = int(rng.integers(1, min(branching, n_obs) + 1))
                obs = [observations[j] for j in rng.choice(n_obs, size=k, replace=False).tolist()]
                succ = rng.integers(0, n_states, size=k).tolist()
            trans[(q, a)] = [(o, states[j], p) for o, j, p in zip(obs, succ, _weights(rng, k))]
    return validate({"states": states, "actions": actions, "observations": observations, "trans": trans})


def random_instance(n_states, n_actions, n_obs, seed, **kwargs):
    """Random model with initial belief on ``s0`` and target ``{s<n-1>}``."""
    m = generate_random_pd(n_states, n_actions, n_obs, seed, **kwargs)
    return m, SubBelief.dirac("s0"), frozenset([f"s{n_states - 1}"])


def mutate_collision(m, seed=0):
    """Copy of ``m`` where one outcome reuses a sibling's observation.

    The two outcomes lead to different states, so the copy is not
    posterior-deterministic. Returns ``None`` when no such pair exists.
    """
    rng = np.random.default_rng(seed)
    keys = sorted(m.trans)
    for idx in rng.permutation(len(keys)).tolist():
        triples = list(m.trans[keys[idx]])
        for i in range(len(triples)):
            for j in range(len(triples)):
                oi, qi, pi = triples[i]
                oj, qj, _ = triples[j]
                if i != j and qi != qj and oi != oj:
                    triples[i] = (oj, qi, pi)
                    trans = dict(m.trans)
                    trans[keys[idx]] = triples
                    return validate(
                        {"states": m.states, "actions": m.actions, "observations": m.observations, "trans": trans}
                    )
    return None
