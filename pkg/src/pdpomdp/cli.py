"""Command-line entry point: ``pdpomdp <subcommand> ...``.

stdout carries JSON only; diagnostics go to stderr. Exit codes: 0 success,
1 usage, 2 parse error, 3 semantic or validation error, 4 budget exceeded.
"""

import argparse
import json
import logging
import os
import sys
from fractions import Fraction

from . import oracles
from .analysis import Analysis
from .errors import (
    EmptyTargets,
    ModelSemanticError,
    ModelSyntaxError,
    NodeBudgetExceeded,
    NotFinite,
    NotInAnySec,
    NotNormalized,
    NotPosteriorDeterministic,
    PdpError,
    ValidationError,
)
from .model import check_posterior_deterministic, normalize, redirect_belief
from .modelio import emit_model, parse_document, rational_json, sec_dot, tree_dot
from .supports import fmt_support, support_key
from .unfold import Unfolder, approximate, decide, default_node_budget

log = logging.getLogger("pdpomdp")

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_SEMANTIC, EXIT_BUDGET = range(5)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _rational(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}")


def _positive(text):
    value = _rational(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def emit(obj):
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def load(path):
    with open(path, encoding="utf-8") as fh:
        return parse_document(fh.read())


def load_normalized(path):
    """Parse, gate on posterior-determinism, normalize and redirect the initial belief."""
    doc = load(path)
    witness = check_posterior_deterministic(doc.model)
    if witness is not True:
        raise NotPosteriorDeterministic(witness)
    nm = normalize(doc.model, doc.targets)
    return doc, nm, redirect_belief(nm, doc.init)


def cmd_check(args):
    doc = load(args.model)
    witness = check_posterior_deterministic(doc.model)
    if witness is True:
        emit({"posterior_deterministic": True})
        return EXIT_OK
    emit({"posterior_deterministic": False, "witness": witness.as_json()})
    return EXIT_SEMANTIC


def cmd_normalize(args):
    doc = load(args.model)
    nm = normalize(doc.model, doc.targets)
    b = redirect_belief(nm, doc.init)
    text = emit_model(nm, b, [nm.top], doc.name)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(text)
    info = nm.normalized
    emit(
        {
            "model": doc.name,
            "output": args.output,
            "states": len(nm.states),
            "top": info.top,
            "bot": info.bot,
            "merged_into_top": sorted(info.into_top),
            "merged_into_bot": sorted(info.into_bot),
        }
    )
    return EXIT_OK


def info_json(doc, nm, b, an):
    m = nm
    nodes = an.graph.sorted_nodes()
    secs = []
    for i, f in enumerate(an.secs):
        dom = f.sorted_domain(m)
        secs.append(
            {
                "domain": [fmt_support(m, S) for S in dom],
                "actions": {fmt_support(m, S): [a for a in m.actions if a in f[S]] for S in dom},
                "distinguishing": an.distinguishing(i),
                "trivial": len(dom) == 1 and dom[0] in (frozenset([m.top]), frozenset([m.bot])),
                "bottom": all(f[S] == frozenset(m.actions) for S in dom),
                "partition": [sorted(blk) for blk in an.partition(i, dom[0]).blocks],
            }
        )
    ranks = an.ranks
    classes = []
    for i, cls in enumerate(ranks.classes):
        members = sorted(cls, key=lambda S: support_key(m, S))
        classes.append({"supports": [fmt_support(m, S) for S in members], "rank": ranks.ranks[i]})
    classes.sort(key=lambda c: (c["rank"], c["supports"]))
    return {
        "model": doc.name,
        "states": list(m.states),
        "initial_support": fmt_support(m, b.support),
        "support_graph": {
            "nodes": [fmt_support(m, S) for S in nodes],
            "edges": len(an.graph.edges),
        },
        "maximal_secs": secs,
        "rank_classes": classes,
    }


def cmd_info(args):
    doc, nm, b = load_normalized(args.model)
    an = Analysis(nm, [b.support], check=True)
    emit(info_json(doc, nm, b, an))
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(sec_dot(an))
    return EXIT_OK


def cmd_approx(args):
    doc, nm, b = load_normalized(args.model)
    budget = args.node_budget or default_node_budget()
    try:
        res = approximate(
            nm,
            b,
            args.epsilon,
            mode=args.mode,
            node_budget=budget,
            memo=args.memo == "on",
            name=doc.name,
            timing=args.timing,
        )
    except NodeBudgetExceeded as exc:
        log.error("%s", exc)
        partial = exc.partial
        out = {"status": "budget_exceeded", "message": str(exc)}
        if hasattr(partial, "as_json"):
            out.update(partial.as_json())
            out["status"] = "budget_exceeded"
        elif isinstance(partial, dict):
            out.update({k: str(v) for k, v in partial.items()})
        emit(out)
        return EXIT_BUDGET
    emit(res.as_json())
    if args.tree_dot:
        unf = Unfolder(nm, res.eta)
        root = unf.tree(b, args.tree_depth)
        with open(args.tree_dot, "w", encoding="utf-8") as fh:
            fh.write(tree_dot(root))
    return EXIT_OK


def cmd_decide(args):
    doc, nm, b = load_normalized(args.model)
    if not 0 <= args.threshold <= 1:
        raise UsageError("threshold must lie in [0, 1]")
    res = decide(nm, b, args.threshold, args.epsilon, name=doc.name)
    out = {"model": doc.name}
    out.update(res.as_json())
    emit(out)
    return EXIT_OK


def cmd_oracle(args):
    doc, nm, b = load_normalized(args.model)
    out = {"model": doc.name, "which": args.which}
    if args.which == "naive":
        out["horizon"] = args.horizon
        out["value"] = rational_json(oracles.naive_lower_bound(nm, b, args.horizon))
    else:
        try:
            out["value"] = oracles.exact_finite_belief_value(nm, b, cap=args.cap)
        except NotFinite as exc:
            emit({"model": doc.name, "which": args.which, "error": "NotFinite", "message": str(exc)})
            return EXIT_BUDGET
    emit(out)
    return EXIT_OK


def _strategy(spec, nm, b):
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            return oracles.StrategySpec.parse(fh.read())
    parts = spec.split(":")
    if parts[0] == "wait" and len(parts) >= 4:
        triggers = dict(p.split("=", 1) for p in parts[4:])
        return oracles.wait_k_then_switch(int(parts[1]), parts[2], parts[3], triggers)
    if parts[0] == "uniform-sec":
        an = Analysis(nm, [b.support])
        i = an.sec_index(b.support)
        if i is None:
            raise NotInAnySec(f"{fmt_support(nm, b.support)} belongs to no SEC")
        return oracles.uniform_in_sec(nm, an.secs[i], b.support)
    raise UsageError(f"strategy {spec!r} is neither a file nor a builtin")


def cmd_simulate(args):
    doc, nm, b = load_normalized(args.model)
    strat = _strategy(args.strategy, nm, b)
    rep = oracles.simulate(nm, b, strat, args.runs, args.horizon, args.seed)
    out = {"model": doc.name}
    out.update(rep.as_json())
    emit(out)
    return EXIT_OK


def cmd_gen(args):
    m, b, targets = oracles.random_instance(
        args.states,
        args.actions,
        args.obs,
        args.seed,
        branching=args.branching,
        fully_observable=args.fully_observable,
    )
    name = f"random_{args.seed}"
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(emit_model(m, b, targets, name))
    emit({"model": name, "output": args.output, "states": len(m.states)})
    return EXIT_OK


def build_parser():
    p = _Parser(prog="pdpomdp", description="Reachability bounds for posterior-deterministic POMDPs.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("check", help="posterior-determinism verdict")
    s.add_argument("model")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("normalize", help="collapse targets and value-0 states")
    s.add_argument("model")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_normalize)

    s = sub.add_parser("info", help="support graph, maximal SECs and ranks")
    s.add_argument("model")
    s.add_argument("--dot")
    s.set_defaults(func=cmd_info)

    s = sub.add_parser("approx", help="certified value bounds")
    s.add_argument("model")
    s.add_argument("--epsilon", type=_positive, required=True)
    s.add_argument("--mode", choices=("anytime", "certified"), default="anytime")
    s.add_argument("--node-budget", type=int)
    s.add_argument("--memo", choices=("on", "off"), default="on")
    s.add_argument("--tree-dot")
    s.add_argument("--tree-depth", type=int, default=4)
    s.add_argument("--timing", action="store_true", help="include wall_time_ms in the output")
    s.set_defaults(func=cmd_approx)

    s = sub.add_parser("decide", help="threshold decision")
    s.add_argument("model")
    s.add_argument("--threshold", type=_rational, required=True)
    s.add_argument("--epsilon", type=_positive, required=True)
    s.set_defaults(func=cmd_decide)

    s = sub.add_parser("oracle", help="naive or exact reference values")
    s.add_argument("model")
    s.add_argument("--which", choices=("naive", "exact"), default="exact")
    s.add_argument("--horizon", type=int, default=10)
    s.add_argument("--cap", type=int, default=100_000)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("simulate", help="Monte Carlo estimate for a strategy")
    s.add_argument("model")
    s.add_argument("--strategy", required=True, help="strategy file, 'wait:K:WAIT:SWITCH[:OBS=ACT...]' or 'uniform-sec'")
    s.add_argument("--runs", type=int, default=10_000)
    s.add_argument("--horizon", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("gen", help="random posterior-deterministic model")
    s.add_argument("--states", type=int, required=True)
    s.add_argument("--actions", type=int, required=True)
    s.add_argument("--obs", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--branching", type=int, default=2)
    s.add_argument("--fully-observable", action="store_true")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_gen)
    return p


def _error(kind, exc, code, **extra):
    log.error("%s", exc)
    out = {"error": kind, "message": str(exc)}
    out.update(extra)
    emit(out)
    return code


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except ModelSyntaxError as exc:
        return _error("SyntaxError", exc, EXIT_PARSE, line=exc.line, column=exc.column)
    except NotPosteriorDeterministic as exc:
        return _error("NotPosteriorDeterministic", exc, EXIT_SEMANTIC, witness=exc.witness.as_json())
    except (ModelSemanticError, ValidationError, EmptyTargets, NotNormalized) as exc:
        return _error(type(exc).__name__, exc, EXIT_SEMANTIC)
    except NodeBudgetExceeded as exc:
        return _error("NodeBudgetExceeded", exc, EXIT_BUDGET)
    except PdpError as exc:
        return _error(type(exc).__name__, exc, EXIT_SEMANTIC)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
