# Rounds closer than l_c apart share a memory, so the phase-error estimate is
# run separately on rounds spaced l_c + 1 apart and the results are merged.

import numpy as np

from corrqkd import PartitionScheme, RoundLog, combine_bounds, restrict_data, sampling_estimator
from corrqkd.partition import KEY_BASIS, NO_BASIS, TEST_BASIS

scheme = PartitionScheme(N=20, l_c=3)
print("sizes:", scheme.sizes)
for w, members in enumerate(scheme.sets):
    print(f"I_{w} =", members.tolist())

# a fake round log: bases chosen 90/10, 40% of rounds lost, about 3% errors
rng = np.random.default_rng(11)
N = 200_000
alice = rng.random(N) < 0.9
bob = rng.random(N) < 0.9
basis = np.where(alice & bob, KEY_BASIS, np.where(~alice & ~bob, TEST_BASIS, NO_BASIS))
log = RoundLog(
    detected=rng.random(N) < 0.6,
    basis=basis,
    test=rng.random(N) < 0.01,
    error=rng.random(N) < 0.03,
)
scheme = PartitionScheme(N, l_c=3)
data = restrict_data(log, scheme)
for w, t in enumerate(data.partitions):
    print(w, t.as_dict())

# per-partition bounds, each with its own share of the failure budget
eps_part = 1e-10
per_w = []
for t in data.partitions:
    n_K = t.n_K
    E = sampling_estimator(n_K, t.n_X, t.k_X, eps_part) if n_K else 1.0
    per_w.append((n_K, E))
    print(f"n_K={n_K:6d}  E_w={E:.4f}")

E_ph, eps_fail = combine_bounds(per_w, eps_part, l_c=3)
print("combined E_ph =", E_ph, " failure prob =", eps_fail)

# for comparison, the same data as one block
tot = data.total
print("single block    =", sampling_estimator(tot.n_K, tot.n_X, tot.k_X, eps_part))
