"""
Sector pairs across an entanglement cut
=======================================

Splitting a chain into a left and a right half turns a fixed-symmetry sector
into a list of (q_left, q_right) pairs. Each pair owns one dense block of the
wavefunction.
"""

import numpy as np

from entwave.models import ModelSpec, default_target
from entwave.pipeline import default_cut
from entwave.symmetry import build_sector_pair_table

# A 10-site Heisenberg chain at Sz = 0, cut in the middle.
spec = ModelSpec("heisenberg", 10)
cut = default_cut(spec)
table = build_sector_pair_table(cut, default_target(spec), spec)
print(f"Heisenberg S=10: {len(table)} pairs, dimension {table.dimension}")
for p in table.pairs:
    print(f"  2Sz_L={p.q_left[0]:+d}  2Sz_R={p.q_right[0]:+d}  block {p.d_right} x {p.d_left}")

# The Hubbard chain carries two charges (N_up, N_dn), so the pair list
# fragments much more: many small blocks and a few big ones.
spec = ModelSpec("hubbard", 8, U=2.0)
table = build_sector_pair_table(default_cut(spec), default_target(spec), spec)
sizes = np.array([p.size for p in table.pairs])
print(f"\nHubbard S=8 half filling: {len(table)} pairs, dimension {table.dimension}")
print("  largest blocks:", np.sort(sizes)[::-1][:6].tolist())
print("  blocks with a single element:", int(np.sum(sizes == 1)))

# The impurity model is cut in spin space: every up mode on the left, every
# down mode on the right.
spec = ModelSpec("impurity", 5, U=2.0)
table = build_sector_pair_table(default_cut(spec), default_target(spec), spec)
print(f"\nImpurity S=5, spin cut: {len(table)} pair(s), dimension {table.dimension}")
