"""How the lower bound and the error statistic evolve with unfolding depth.

Run from the repository root:  python demos/02_bounds_by_depth.py
"""
# %%
from fractions import Fraction
from pathlib import Path

import numpy as np

from pdpomdp import Analysis, ApproxParams, Unfolder, approximate, normalize, parse_document, redirect_belief

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def load(name):
    doc = parse_document((CORPUS / f"{name}.pdp").read_text())
    nm = normalize(doc.model, doc.targets)
    return nm, redirect_belief(nm, doc.init)


# %% Depth sweep on g1: the lower bound climbs towards 1, rankhat shrinks.
nm, b = load("g1")
params = ApproxParams.for_model(nm, Fraction(1, 20))
unf = Unfolder(nm, params.eta, Analysis(nm, [b.support]))
rows = np.array([[d, *map(float, unf.evaluate(b, d))] for d in range(0, 33, 4)])
print("depth  lower     rankhat")
for d, v, r in rows:
    print(f"{int(d):5d}  {v:.6f}  {r:.6f}")

# %% Anytime mode stops as soon as the certificate is tight enough.
for name in ["g1", "scenario1", "ndist_swap", "tiger"]:
    nm, b = load(name)
    res = approximate(nm, b, Fraction(1, 50), name=name)
    print(f"{name:>12}: [{float(res.lower):.6f}, {float(res.upper):.6f}]  nodes={res.nodes_expanded}")

# %% The certified depth is astronomically large even for tiny models.
for n in (2, 3, 4):
    print(n, "states:", ApproxParams.build(n, Fraction(1, 2), Fraction(1, 20)).n_eps)
