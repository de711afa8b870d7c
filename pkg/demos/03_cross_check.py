"""Compare the unfolder against the exact oracle and Monte Carlo simulation.

Run from the repository root:  python demos/03_cross_check.py
"""
# %%
from fractions import Fraction
from pathlib import Path

import numpy as np

from pdpomdp import approximate, normalize, parse_document, redirect_belief
from pdpomdp.oracles import exact_finite_belief_value, random_instance, simulate, wait_k_then_switch

# %% Fully observable random instances: the exact value must lie in the bounds.
gaps = []
for seed in range(20):
    m, b, targets = random_instance(6, 2, 1, seed, fully_observable=True, branching=3)
    nm = normalize(m, targets)
    rb = redirect_belief(nm, b)
    res = approximate(nm, rb, Fraction(1, 100))
    exact = exact_finite_belief_value(nm, rb)
    assert float(res.lower) - 1e-9 <= exact <= float(res.upper) + 1e-9
    gaps.append(float(res.upper - res.lower))
print("bound widths: mean %.4g, max %.4g" % (np.mean(gaps), np.max(gaps)))

# %% A simple finite-memory strategy on a partially observable model.
doc = parse_document((Path(__file__).resolve().parent.parent / "corpus" / "g1.pdp").read_text())
nm = normalize(doc.model, doc.targets)
b = redirect_belief(nm, doc.init)
for k in (1, 3, 10):
    rep = simulate(nm, b, wait_k_then_switch(k, "a", "b", {"o2": "c"}), runs=20_000, horizon=40, seed=k)
    print(f"wait {k:2d}: estimate {rep.estimate:.4f}  analytic {1 - 2.0 ** -(k + 1):.4f}  interval {rep.interval}")
