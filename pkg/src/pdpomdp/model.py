"""POMDP representation, validation and the belief calculus.

Everything here works on exact rationals (:class:`fractions.Fraction`).
Models and sub-beliefs are immutable once built.
"""

from collections import defaultdict, deque
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    EmptyResult,
    EmptyTargets,
    ValidationError,
    ZeroObservationProbability,
)

__all__ = [
    "Issue",
    "Normalization",
    "Pomdp",
    "SubBelief",
    "DeterminismWitness",
    "to_fraction",
    "validate",
    "check_posterior_deterministic",
    "normalize",
    "redirect_belief",
    "belief_update",
    "obs_probability",
    "cut",
    "restrict",
]


def to_fraction(value):
    """Exact conversion of ``int``, ``Fraction`` or a ``"p/q"``/decimal string.

    Floats are refused: they would smuggle binary rounding into the model.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not probabilities")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational")


@dataclass(frozen=True)
class Issue:
    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


@dataclass(frozen=True)
class Normalization:
    """Names of the absorbing observable target/sink and what was merged into them."""

    top: str
    bot: str
    obs_top: str
    obs_bot: str
    into_top: frozenset = frozenset()
    into_bot: frozenset = frozenset()


class Pomdp:
    """A finite POMDP with a sparse exact transition kernel.

    ``trans[(q, a)]`` is a tuple of ``(observation, successor, probability)``
    triples sorted by observation then successor. Build instances through
    :func:`validate` rather than directly.
    """

    def __init__(self, states, actions, observations, trans, normalized=None):
        self.states = tuple(states)
        self.actions = tuple(actions)
        self.observations = tuple(observations)
        self.trans = dict(trans)
        self.normalized = normalized

        self._state_index = {q: i for i, q in enumerate(self.states)}
        self._obs_index = {o: i for i, o in enumerate(self.observations)}
        edges = defaultdict(list)
        marg = defaultdict(dict)
        for (q, a), triples in self.trans.items():
            for o, q2, p in triples:
                edges[(q, a, o)].append((q2, p))
                marg[(q, a)][o] = marg[(q, a)].get(o, 0) + p
        self._edges = {k: tuple(v) for k, v in edges.items()}
        self._marginal = {k: dict(v) for k, v in marg.items()}

    # structural equality; the derived tables follow from these fields
    def __eq__(self, other):
        if not isinstance(other, Pomdp):
            return NotImplemented
        return (
            self.states == other.states
            and self.actions == other.actions
            and self.observations == other.observations
            and self.trans == other.trans
            and self.normalized == other.normalized
        )

    __hash__ = object.__hash__

    def __repr__(self):
        return (
            f"Pomdp(|Q|={len(self.states)}, |A|={len(self.actions)}, "
            f"|O|={len(self.observations)}, normalized={self.normalized is not None})"
        )

    def state_index(self, q):
        return self._state_index[q]

    def obs_index(self, o):
        return self._obs_index[o]

    def successors(self, q, a, o):
        """All ``(q', p)`` with ``T(o, q' | q, a) = p > 0``."""
        return self._edges.get((q, a, o), ())

    def successor(self, q, a, o):
        """The unique successor under ``(a, o)`` or ``None`` (posterior-deterministic models)."""
        succ = self._edges.get((q, a, o))
        if not succ:
            return None
        return succ[0][0]

    def obs_prob(self, q, a, o):
        """Marginal ``T(o | q, a)``."""
        return self._marginal.get((q, a), {}).get(o, Fraction(0))

    def emitted(self, q, a):
        """Observations with positive probability from ``q`` under ``a``."""
        return self._marginal.get((q, a), {})

    def p_min(self):
        return min(p for triples in self.trans.values() for _, _, p in triples)

    @property
    def top(self):
        return self.normalized.top if self.normalized else None

    @property
    def bot(self):
        return self.normalized.bot if self.normalized else None


class SubBelief:
    """Map from states to positive exact masses with total mass at most 1.

    Entries are kept sorted by state name, so two sub-beliefs compare equal
    exactly when they carry identical rationals. The empty sub-belief is
    allowed (it arises from restrictions) but has no support.
    """

    __slots__ = ("_items", "_hash", "_mass")

    def __init__(self, entries=()):
        if isinstance(entries, dict):
            entries = entries.items()
        items = []
        for q, p in entries:
            p = to_fraction(p)
            if p < 0:
                raise ValueError(f"negative mass {p} on {q!r}")
            if p > 0:
                items.append((q, p))
        items.sort(key=lambda kv: kv[0])
        for i in range(1, len(items)):
            if items[i][0] == items[i - 1][0]:
                raise ValueError(f"duplicate state {items[i][0]!r}")
        self._items = tuple(items)
        self._mass = sum((p for _, p in items), Fraction(0))
        if self._mass > 1:
            raise ValueError(f"total mass {self._mass} exceeds 1")
        self._hash = hash(self._items)

    @classmethod
    def dirac(cls, q, mass=1):
        return cls([(q, mass)])

    def items(self):
        return self._items

    def states(self):
        return tuple(q for q, _ in self._items)

    @property
    def support(self):
        return frozenset(q for q, _ in self._items)

    @property
    def mass(self):
        return self._mass

    def is_empty(self):
        return not self._items

    def min_mass(self):
        return min(p for _, p in self._items)

    def get(self, q, default=Fraction(0)):
        for k, p in self._items:
            if k == q:
                return p
        return default

    def __getitem__(self, q):
        for k, p in self._items:
            if k == q:
                return p
        raise KeyError(q)

    def __contains__(self, q):
        return any(k == q for k, _ in self._items)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(q for q, _ in self._items)

    def __eq__(self, other):
        if not isinstance(other, SubBelief):
            return NotImplemented
        return self._items == other._items

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def __hash__(self):
        return self._hash

    def sort_key(self):
        return tuple((q, p) for q, p in self._items)

    def scaled(self, factor):
        factor = to_fraction(factor)
        return SubBelief([(q, p * factor) for q, p in self._items])

    def as_dict(self):
        return dict(self._items)

    def __repr__(self):
        inner = ", ".join(f"{q}: {p}" for q, p in self._items)
        return "{" + inner + "}"


@dataclass(frozen=True)
class DeterminismWitness:
    """Two distinct successors reachable under the same (state, action, observation).

    Witnesses are falsy, so ``if check_posterior_deterministic(m):`` reads naturally.
    """

    state: str
    action: str
    observation: str
    successors: tuple

    def __bool__(self):
        return False

    def as_json(self):
        return {
            "state": self.state,
            "action": self.action,
            "observation": self.observation,
            "successors": list(self.successors),
        }


def validate(raw):
    """Build a :class:`Pomdp` from a raw description, or raise :class:`ValidationError`.

    ``raw`` is a mapping with keys ``states``, ``actions``, ``observations``,
    ``trans`` (``{(q, a): [(o, q', p), ...]}``) and optionally ``normalized``
    (a :class:`Normalization`). Every violated constraint is reported.
    State, action and observation orders are canonicalized by sorting.
    """
    issues = []

    def unique_names(kind, names):
        names = list(names)
        seen = set()
        for n in names:
            if n in seen:
                issues.append(Issue("DuplicateIdentifier", f"{kind} {n!r} declared twice"))
            seen.add(n)
        return tuple(sorted(seen))

    states = unique_names("state", raw.get("states", ()))
    actions = unique_names("action", raw.get("actions", ()))
    observations = unique_names("observation", raw.get("observations", ()))
    if not states:
        issues.append(Issue("EmptyStates", "no states declared"))
    if not actions:
        issues.append(Issue("EmptyActions", "no actions declared"))
    sset, aset, oset = set(states), set(actions), set(observations)

    trans = {}
    for key, triples in raw.get("trans", {}).items():
        q, a = key
        ok = True
        if q not in sset:
            issues.append(Issue("UnknownIdentifier", f"unknown state {q!r} in transition source"))
            ok = False
        if a not in aset:
            issues.append(Issue("UnknownIdentifier", f"unknown action {a!r} in transitions of {q!r}"))
            ok = False
        clean = {}
        total = Fraction(0)
        for o, q2, p in triples:
            if o not in oset:
                issues.append(Issue("UnknownIdentifier", f"unknown observation {o!r} in ({q}, {a})"))
                ok = False
            if q2 not in sset:
                issues.append(Issue("UnknownIdentifier", f"unknown successor {q2!r} in ({q}, {a})"))
                ok = False
            try:
                p = to_fraction(p)
            except (TypeError, ValueError, ZeroDivisionError):
                issues.append(Issue("BadProbability", f"unparsable probability {p!r} in ({q}, {a})"))
                ok = False
                continue
            if p <= 0 or p > 1:
                issues.append(Issue("NonPositive" if p <= 0 else "DistributionSum",
                                    f"probability {p} out of (0, 1] in ({q}, {a})"))
                ok = False
            if (o, q2) in clean:
                issues.append(Issue("DuplicateEdge", f"edge ({o}, {q2}) repeated under ({q}, {a})"))
                ok = False
                continue
            clean[(o, q2)] = p
            total += p
        if total != 1:
            issues.append(Issue("DistributionSum", f"({q}, {a}) sums to {total}, not 1"))
            ok = False
        if ok:
            trans[(q, a)] = tuple(sorted((o, q2, p) for (o, q2), p in clean.items()))

    for q in states:
        for a in actions:
            if (q, a) not in raw.get("trans", {}):
                issues.append(Issue("MissingTransition", f"no distribution for ({q}, {a})"))

    norm = raw.get("normalized")
    if norm is not None and not issues:
        issues.extend(_normalization_issues(states, actions, trans, norm))

    if issues:
        raise ValidationError(issues)
    return Pomdp(states, actions, observations, trans, norm)


def _normalization_issues(states, actions, trans, norm):
    issues = []
    for special, obs in ((norm.top, norm.obs_top), (norm.bot, norm.obs_bot)):
        if special not in states:
            issues.append(Issue("UnknownIdentifier", f"normalized state {special!r} undeclared"))
            continue
        for a in actions:
            if trans.get((special, a)) != ((obs, special, Fraction(1)),):
                issues.append(Issue("NotAbsorbing", f"{special} must loop on {a} emitting {obs}"))
    for (q, a), triples in trans.items():
        for o, q2, _ in triples:
            if q2 == norm.top and o != norm.obs_top or q2 == norm.bot and o != norm.obs_bot:
                issues.append(Issue("NotObservable", f"({q}, {a}) enters {q2} emitting {o}"))
            if o == norm.obs_top and q2 != norm.top or o == norm.obs_bot and q2 != norm.bot:
                issues.append(Issue("NotObservable", f"({q}, {a}) emits {o} into {q2}"))
    return issues


def check_posterior_deterministic(m):
    """``True`` if every (state, action, observation) has at most one successor.

    Otherwise returns the first :class:`DeterminismWitness` in canonical order.
    """
    for q in m.states:
        for a in m.actions:
            for o in m.observations:
                succ = m.successors(q, a, o)
                if len(succ) > 1:
                    return DeterminismWitness(q, a, o, tuple(sorted(s for s, _ in succ)))
    return True


def _fresh(base, taken):
    name = base
    k = 1
    while name in taken:
        name = f"{base}_{k}"
        k += 1
    return name


def normalize(m, targets):
    """Collapse targets into an absorbing observable ``TOP`` and value-0 states into ``BOT``.

    Value-0 states are those with no path to a target in the transition graph.
    The fresh ``BOT`` is added even when nothing merges into it.
    """
    targets = frozenset(targets)
    if not targets:
        raise EmptyTargets("target set is empty")
    unknown = targets - set(m.states)
    if unknown:
        raise ValidationError([Issue("UnknownIdentifier", f"unknown target {sorted(unknown)}")])

    preds = defaultdict(set)
    for (q, a), triples in m.trans.items():
        for _, q2, _ in triples:
            preds[q2].add(q)
    can_reach = set(targets)
    queue = deque(targets)
    while queue:
        q = queue.popleft()
        for p in preds[q]:
            if p not in can_reach:
                can_reach.add(p)
                queue.append(p)
    dead = frozenset(q for q in m.states if q not in can_reach)
    kept = [q for q in m.states if q not in targets and q not in dead]

    # fresh names only need to avoid what survives, so re-normalizing is stable
    live_obs = {
        o
        for q in kept
        for a in m.actions
        for o, q2, _ in m.trans[(q, a)]
        if q2 not in targets and q2 not in dead
    }
    top = _fresh("TOP", set(kept))
    bot = _fresh("BOT", set(kept) | {top})
    obs_top = _fresh("o_TOP", live_obs)
    obs_bot = _fresh("o_BOT", live_obs | {obs_top})

    trans = {}
    for q in kept:
        for a in m.actions:
            acc = defaultdict(Fraction)
            for o, q2, p in m.trans[(q, a)]:
                if q2 in targets:
                    acc[(obs_top, top)] += p
                elif q2 in dead:
                    acc[(obs_bot, bot)] += p
                else:
                    acc[(o, q2)] += p
            trans[(q, a)] = [(o, q2, p) for (o, q2), p in acc.items()]
    for special, obs in ((top, obs_top), (bot, obs_bot)):
        for a in m.actions:
            trans[(special, a)] = [(obs, special, Fraction(1))]

    info = Normalization(top, bot, obs_top, obs_bot, targets, dead)
    result = validate(
        {
            "states": kept + [top, bot],
            "actions": m.actions,
            "observations": sorted(set(m.observations) | {obs_top, obs_bot}),
            "trans": trans,
            "normalized": info,
        }
    )
    if check_posterior_deterministic(m) is True:
        witness = check_posterior_deterministic(result)
        if witness is not True:
            raise AssertionError(f"normalization broke posterior-determinism: {witness}")
    return result


def redirect_belief(nm, b):
    """Map a belief of the original model onto the normalized model ``nm``."""
    info = nm.normalized
    acc = defaultdict(Fraction)
    for q, p in b.items():
        if q in info.into_top:
            acc[info.top] += p
        elif q in info.into_bot:
            acc[info.bot] += p
        else:
            acc[q] += p
    return SubBelief(acc)


def obs_probability(m, b, a, o):
    """Probability of observing ``o`` after ``a`` from ``b`` rescaled to a full belief."""
    if b.is_empty():
        return Fraction(0)
    total = sum((p * m.obs_prob(q, a, o) for q, p in b.items()), Fraction(0))
    return total / b.mass


def belief_update(m, b, a, o):
    """Bayesian update after ``(a, o)``, rescaled so the total mass of ``b`` is kept."""
    acc = defaultdict(Fraction)
    for q, p in b.items():
        for q2, t in m.successors(q, a, o):
            acc[q2] += p * t
    norm = sum(acc.values(), Fraction(0))
    if norm == 0:
        raise ZeroObservationProbability(f"observation {o} impossible after {a} from {b}")
    scale = b.mass / norm
    return SubBelief({q: v * scale for q, v in acc.items()})


def cut(b, eta):
    eta = to_fraction(eta)
    if eta <= 0:
        raise ValueError("threshold must be positive")
    kept = [(q, p) for q, p in b.items() if p >= eta]
    if not kept:
        raise EmptyResult(f"every entry of {b} is below {eta}")
    return SubBelief(kept)


def restrict(b, states):
    states = set(states)
    return SubBelief([(q, p) for q, p in b.items() if q in states])
