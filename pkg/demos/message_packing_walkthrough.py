"""Walk through content packing: budget split plus distance-based selection.

No plots, just printed tables. First the budget split for a shrinking
message size with a fixed candidate pool, then the inclusion-probability
law the selector applies to whatever the split admits.
"""

import numpy as np

from csamsim import (PackPlan, Rng, SelectionPolicy, pack_counts,
                     select_objects, selection_probability)

L_K, L_H, L_U = 60, 40, 32
KNOWN, UNKNOWN = 24, 6

print("budget split for 24 known / 6 unknown candidates"
      f" (record sizes {L_K}/{L_H}/{L_U} B)")
print(f"{'budget':>7} {'known':>6} {'hist':>5} {'unk':>4} {'cubes':>6} {'used':>5}")
for budget in (5400, 3000, 1500, 900, 500, 250, 90):
    p = pack_counts(budget, KNOWN, UNKNOWN, L_K, L_H, L_U)
    used = p.k_r * L_K + p.k_rh * L_H + p.n_opt * p.u_r * L_U
    print(f"{budget:>7} {p.k_r:>6} {p.k_rh:>5} {p.u_r:>4} {p.n_opt:>6} {used:>5}")

print()
policy = SelectionPolicy()     # certain within 100 m, e-folding every 100 m
print("inclusion probability over distance (shifted exponential)")
for r in (50, 100, 150, 200, 300, 500):
    print(f"  {r:>4} m  p = {selection_probability(float(r), policy):.4f}")

# one concrete draw: 12 candidates spread over the road, 6 slots to fill
rng = Rng(5, "packing-demo")
dists = np.array([30, 60, 90, 120, 160, 200, 240, 300, 380, 460, 550, 700.0])
ids = np.arange(len(dists))
plan = PackPlan(k_r=6, k_rh=2, u_r=0, n_opt=0)
sel = select_objects(ids, dists, (), (), plan, policy, rng)
print()
print(f"drawn content for a 6-slot plan: ids {list(sel.known_ids)}")
print(f"  (nearest first; the first {sel.history_count} also carry history)")
