# How strongly does a pulse remember its predecessors, and how far back do we
# have to keep track before the rest can be thrown away?

import numpy as np

from corrqkd import LtiModel, required_lc, trace_distance_bound, xi_at, xi_total
from corrqkd.corrmodel import random_delta_table
from corrqkd.states import truncated_overlap

model = LtiModel(xi1=1e-6, C=12.7, delta_spf=0.068)

# strength of the dependence on the pulse l rounds back
for l in range(1, 6):
    print(f"xi_{l} = {xi_at(model, l):.3e}")

# cumulative strength up to a cutoff, and the infinite tail
print("xi_total(l_c=3)   =", xi_total(model, 3))
print("xi_total(infinite)=", xi_total(model, float("inf")))

# price of cutting the chain: trace-distance bound over a 1e12 round block
N = 10**12
for l_c in (1, 3, 5, 7, 9):
    print(f"l_c={l_c}: d <= {trace_distance_bound(model, N, l_c):.3e}")

# smallest cutoff that meets a target distance
for target in (1e-6, 1e-12, 1e-20):
    print(f"d_target={target:g} -> l_c={required_lc(model, N, target)}")

# For a handful of rounds the exact distance is cheap to compute, so compare.
# A residual-phase table saturating the allowed spread is close to worst case.
small = LtiModel(xi1=0.05, C=1.0, delta_spf=0.068)
rng = np.random.default_rng(7)
small = small.with_table(random_delta_table(small, 5, rng, saturate=True))
for l_c in (0, 1, 2):
    overlap, dist = truncated_overlap(small, 6, l_c)
    print(f"N=6 l_c={l_c}: exact d={dist:.4f}  bound {trace_distance_bound(small, 6, l_c):.4f}")
