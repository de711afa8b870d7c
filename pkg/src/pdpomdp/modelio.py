"""Text format for models, JSON rendering of results and DOT exports.

Model files (``.pdp``) look like::

    pomdp coin
    states: s goal
    actions: a
    observations: heads tails
    init: s 1
    target: goal
    trans: s a -> heads s 1/2 ; tails goal 1/2
    trans: goal a -> heads goal 1

Sections appear once each in this order; ``trans`` lines repeat, one per
(state, action). ``#`` starts a comment.
"""

import re
from dataclasses import dataclass, field
from decimal import Context, Decimal
from fractions import Fraction

from .errors import ModelSemanticError, ModelSyntaxError, ValidationError
from .model import SubBelief, validate
from .supports import fmt_support, support_key

__all__ = [
    "ModelDocument",
    "ResultDocument",
    "parse_document",
    "parse_model",
    "emit_model",
    "render_fraction",
    "rational_json",
    "support_graph_dot",
    "sec_dot",
    "tree_dot",
]

_TOKEN = re.compile(
    r"(?P<arrow>->)"
    r"|(?P<num>\d+/\d+|\d+\.\d*|\.\d+|\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[:;,*])"
)

SECTIONS = ("states", "actions", "observations", "init", "target", "trans")


@dataclass
class ModelDocument:
    name: str
    model: object
    init: SubBelief
    targets: frozenset

    def triple(self):
        return self.model, self.init, self.targets


class _Line:
    """Token cursor over one source line."""

    def __init__(self, text, lineno):
        self.lineno = lineno
        self.tokens = []
        self.end_col = len(text) + 1
        pos = 0
        while pos < len(text):
            if text[pos].isspace():
                pos += 1
                continue
            mt = _TOKEN.match(text, pos)
            if not mt:
                raise ModelSyntaxError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
            self.tokens.append((mt.lastgroup, mt.group(), pos + 1))
            pos = mt.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def at_end(self):
        return self.i >= len(self.tokens)

    def fail(self, message, tok=None):
        col = tok[2] if tok else self.end_col
        raise ModelSyntaxError(message, self.lineno, col)

    def take(self, kind, text=None, what=None):
        tok = self.peek()
        if tok is None or tok[0] != kind or (text is not None and tok[1] != text):
            want = what or (repr(text) if text else kind)
            found = repr(tok[1]) if tok else "end of line"
            self.fail(f"expected {want}, found {found}", tok)
        self.i += 1
        return tok

    def idents(self):
        out = []
        while not self.at_end():
            out.append(self.take("ident", what="identifier")[1])
        return out

    def number(self):
        tok = self.take("num", what="probability")
        try:
            return Fraction(tok[1])
        except ZeroDivisionError:
            self.fail(f"zero denominator in {tok[1]!r}", tok)


def _lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip("\r")
        if body.strip():
            yield _Line(body, lineno)


def parse_document(text):
    """Parse ``.pdp`` text into a :class:`ModelDocument`.

    Raises :class:`ModelSyntaxError` for grammar errors and
    :class:`ModelSemanticError` for well-formed files describing an invalid model.
    """
    lines = list(_lines(text))
    if not lines:
        raise ModelSyntaxError("empty model file", 1)
    head = lines[0]
    head.take("ident", "pomdp", what="'pomdp <name>'")
    name = head.take("ident", what="model name")[1]
    if not head.at_end():
        head.fail("unexpected text after model name", head.peek())

    found = {}
    trans_lines = []
    expect = 0
    for ln in lines[1:]:
        tok = ln.take("ident", what="section keyword")
        key = tok[1]
        if key not in SECTIONS:
            ln.fail(f"unknown section {key!r}", tok)
        idx = SECTIONS.index(key)
        if key == "trans" and expect >= idx:
            expect = idx
        elif idx != expect:
            want = SECTIONS[expect] if expect < len(SECTIONS) else "end of file"
            ln.fail(f"expected section {want!r}, found {key!r}", tok)
        ln.take("punct", ":", what="':'")
        if key in ("states", "actions", "observations", "target"):
            found[key] = (ln.idents(), ln.lineno)
        elif key == "init":
            found[key] = (_init_entries(ln), ln.lineno)
        else:
            trans_lines.append((_trans_body(ln), ln.lineno))
        expect = idx if key == "trans" else idx + 1
    if expect < SECTIONS.index("trans"):
        raise ModelSyntaxError(f"missing section {SECTIONS[expect]!r}", lines[-1].lineno + 1)
    return _build(name, found, trans_lines)


def _init_entries(ln):
    entries = []
    if ln.at_end():
        return entries
    while True:
        q = ln.take("ident", what="state")[1]
        entries.append((q, ln.number()))
        if ln.at_end():
            return entries
        ln.take("punct", ",", what="','")


def _trans_body(ln):
    q = ln.take("ident", what="state")[1]
    a = ln.take("ident", what="action")[1]
    ln.take("arrow", what="'->'")
    triples = []
    while True:
        o = ln.take("ident", what="observation")[1]
        q2 = ln.take("ident", what="successor state")[1]
        triples.append((o, q2, ln.number()))
        if ln.at_end():
            return (q, a, triples)
        ln.take("punct", ";", what="';'")


def _build(name, found, trans_lines):
    trans = {}
    for (q, a, triples), lineno in trans_lines:
        if (q, a) in trans:
            raise ModelSemanticError(f"line {lineno}: second transition line for ({q}, {a})")
        trans[(q, a)] = triples
    raw = {
        "states": found["states"][0],
        "actions": found["actions"][0],
        "observations": found["observations"][0],
        "trans": trans,
    }
    try:
        m = validate(raw)
    except ValidationError as exc:
        raise ModelSemanticError(str(exc), cause=exc) from exc

    states = set(m.states)
    seen = set()
    for q, _ in found["init"][0]:
        if q not in states:
            raise ModelSemanticError(f"init mentions unknown state {q!r}")
        if q in seen:
            raise ModelSemanticError(f"init lists {q!r} twice")
        seen.add(q)
    total = sum((p for _, p in found["init"][0]), Fraction(0))
    if total != 1:
        raise ModelSemanticError(f"init masses sum to {total}, not 1")
    init = SubBelief(found["init"][0])
    targets = found["target"][0]
    for t in targets:
        if t not in states:
            raise ModelSemanticError(f"target mentions unknown state {t!r}")
    return ModelDocument(name, m, init, frozenset(targets))


def parse_model(text):
    """``(model, initial belief, target set)`` from ``.pdp`` text."""
    return parse_document(text).triple()


def render_fraction(p):
    p = Fraction(p)
    if p.denominator == 1:
        return str(p.numerator)
    return f"{p.numerator}/{p.denominator}"


def emit_model(m, b, targets, name="model"):
    """Canonical ``.pdp`` text: sorted identifiers, probabilities in lowest terms."""
    out = [f"pomdp {name}"]
    out.append("states: " + " ".join(sorted(m.states)))
    out.append("actions: " + " ".join(sorted(m.actions)))
    out.append("observations: " + " ".join(sorted(m.observations)))
    out.append("init: " + ", ".join(f"{q} {render_fraction(p)}" for q, p in b.items()))
    out.append(("target: " + " ".join(sorted(targets))).rstrip())
    for q in sorted(m.states):
        for a in sorted(m.actions):
            body = " ; ".join(
                f"{o} {q2} {render_fraction(p)}" for o, q2, p in sorted(m.trans[(q, a)])
            )
            out.append(f"trans: {q} {a} -> {body}")
    return "\n".join(out) + "\n"


# -- results -------------------------------------------------------------

_DEC = Context(prec=12)


def rational_json(p):
    p = Fraction(p)
    d = _DEC.divide(Decimal(p.numerator), Decimal(p.denominator))
    return {"exact": render_fraction(p), "decimal": format(d, "g")}


@dataclass
class ResultDocument:
    model: str
    epsilon: Fraction
    eta: Fraction
    lower: Fraction
    upper: Fraction
    rankhat: Fraction
    nodes_expanded: object
    max_depth: int
    mode: str
    status: str
    extra: dict = field(default_factory=dict)
    wall_time_ms: object = None

    @property
    def width(self):
        return self.upper - self.lower

    def as_json(self):
        doc = {
            "model": self.model,
            "mode": self.mode,
            "status": self.status,
            "epsilon": rational_json(self.epsilon),
            "eta": rational_json(self.eta),
            "lower": rational_json(self.lower),
            "upper": rational_json(self.upper),
            "width": rational_json(self.width),
            "rankhat": rational_json(self.rankhat),
            "nodes_expanded": self.nodes_expanded,
            "max_depth": self.max_depth,
        }
        for k, v in sorted(self.extra.items()):
            doc[k] = str(v) if isinstance(v, int) and v.bit_length() > 53 else v
        if self.wall_time_ms is not None:
            doc["wall_time_ms"] = self.wall_time_ms
        return doc


# -- DOT -----------------------------------------------------------------

PALETTE = (
    "#a6cee3", "#b2df8a", "#fb9a99", "#fdbf6f", "#cab2d6",
    "#ffff99", "#1f78b4", "#33a02c", "#e31a1c", "#ff7f00",
)


def _q(text):
    return '"' + str(text).replace('"', '\\"').replace("\n", "\\n") + '"'


def support_graph_dot(g, secs=None, distinguishing=None, name="supports"):
    """DOT digraph of a support graph.

    When ``secs`` is given, supports of one maximal SEC share a fill color and
    supports of distinguishing SECs get a double border.
    """
    m = g.model
    nodes = g.sorted_nodes()
    ids = {S: f"n{i}" for i, S in enumerate(nodes)}
    owner = {}
    for i, f in enumerate(secs or ()):
        for S in f.domain:
            owner[S] = i
    out = [f"digraph {name} {{", "  node [shape=box];"]
    for S in nodes:
        attrs = [f"label={_q(fmt_support(m, S))}"]
        if S in owner:
            i = owner[S]
            attrs.append(f'style=filled fillcolor="{PALETTE[i % len(PALETTE)]}"')
            if distinguishing and distinguishing[i]:
                attrs.append("peripheries=2")
        out.append(f"  {ids[S]} [{' '.join(attrs)}];")
    for S in nodes:
        merged = {}
        for a in m.actions:
            for o, T in g.moves.get(S, {}).get(a, ()):
                merged.setdefault(T, []).append(f"{a}/{o}")
        for T in sorted(merged, key=lambda T: support_key(m, T)):
            out.append(f"  {ids[S]} -> {ids[T]} [label={_q(', '.join(merged[T]))}];")
    out.append("}")
    return "\n".join(out) + "\n"


def sec_dot(analysis, name="secs"):
    dist = [analysis.distinguishing(i) for i in range(len(analysis.secs))]
    return support_graph_dot(analysis.graph, analysis.secs, dist, name)


def _label_text(label):
    if isinstance(label, tuple):
        return f"{label[0]!r}, {label[1]}"
    return repr(label)


def tree_dot(root, name="unfolding"):
    """DOT digraph of a materialized tree prefix (see ``Unfolder.tree``)."""
    out = [f"digraph {name} {{", "  node [shape=box];"]
    counter = [0]

    def walk(node):
        nid = f"t{counter[0]}"
        counter[0] += 1
        text = (
            f"{_label_text(node.label)}\n{node.kind}"
            f" V={render_fraction(node.value)} R={render_fraction(node.rankhat)}"
        )
        shape = "ellipse" if node.kind == "leaf" else "box"
        out.append(f"  {nid} [label={_q(text)} shape={shape}];")
        for j, (w, child) in enumerate(node.children):
            cid = walk(child)
            style = " style=bold" if j == node.best else ""
            out.append(f"  {nid} -> {cid} [label={_q(render_fraction(w))}{style}];")
        return nid

    walk(root)
    out.append("}")
    return "\n".join(out) + "\n"
