"""Walk through the support graph, maximal SECs and ranks of the scenario1 model.

Run from the repository root:  python demos/01_supports_and_secs.py
"""
# %%
from pathlib import Path

from pdpomdp import Analysis, normalize, parse_document, redirect_belief
from pdpomdp.supports import fmt_support

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

doc = parse_document((CORPUS / "scenario1.pdp").read_text())
nm = normalize(doc.model, doc.targets)
b = redirect_belief(nm, doc.init)
print("normalized states:", nm.states)
print("initial belief:", b)

# %% The support graph is explored from every subset of the initial support.
an = Analysis(nm, [b.support])
print(len(an.graph.nodes), "supports,", len(an.graph.edges), "labelled edges")

# %% Maximal SECs, with the indistinguishability partition of their first support.
for i, f in enumerate(an.secs):
    dom = f.sorted_domain(nm)
    blocks = [sorted(blk) for blk in an.partition(i, dom[0]).blocks]
    print(
        [fmt_support(nm, S) for S in dom],
        "distinguishing" if an.distinguishing(i) else "not distinguishing",
        blocks,
    )

# %% Ranks: {TOP} and {BOT} sit at 0, everything else above.
for S in an.graph.sorted_nodes():
    print(f"{fmt_support(nm, S):>12}  rank {an.rank(S)}")
