"""SRMP against CMP and MPLP on a Potts grid at an equal update budget.

Bounds and energies are normalized with one affine map shared by all runs:
the zero-message bound goes to -1 and the best bound seen by any run to 0.

Run: python demos/02_potts_comparison.py [budget]
"""
import sys

import numpy as np

from srmp import instances, solve
from srmp.cli import normalize_traces

budget = int(sys.argv[1]) if len(sys.argv) > 1 else 8000
g = instances.potts_grid(np.random.default_rng(0), 10, 10, labels=4)
traces = {alg: solve(g, alg, max_iterations=10_000, max_updates=budget, eps=0, gap_tol=None)
          for alg in ("srmp", "cmp", "mplp")}
initial, best = normalize_traces(traces)
span = best - initial

print(f"10x10 Potts grid, 4 labels, {budget} min-marginal updates per solver")
print(f"initial bound {initial:.4f}, best bound {best:.4f}\n")
print("iter " + "".join(f"{alg:>12s}" for alg in traces))
longest = max(len(t.lower_bounds) for t in traces.values())
for k in list(range(0, min(longest, 6))) + list(range(8, longest, 4)):
    cells = []
    for t in traces.values():
        cells.append(f"{(t.lower_bounds[k] - best) / span:12.5f}" if k < len(t.lower_bounds) else " " * 12)
    print(f"{k:4d} " + "".join(cells))

print("\nbest energies (normalized):")
for alg, t in traces.items():
    print(f"  {alg:5s} {(t.best_energy - best) / span:+.5f}  gap {t.gap:.4f}")
