"""
Fragmentation and the communication ratio
=========================================

Sector sizes chi_q decay roughly exponentially with their rank. A steeper
decay concentrates the work in a few sectors. Truncating the Schmidt spectrum
at growing thresholds emulates larger kept ranks; the modeled ratio of
exchanged elements to flops then falls.
"""

from entwave.entanglement import schmidt_decompose, truncated_ranks
from entwave.fragmentation import communication_ratio, fit_exponential, modeled_census, rank_ordered
from entwave.lanczos import lanczos_ground_state
from entwave.models import ModelSpec
from entwave.pipeline import build_system

# Exponential decay of the rank-ordered sector sizes.
for spec in (ModelSpec("heisenberg", 10), ModelSpec("hubbard", 8, U=2.0),
             ModelSpec("attractive_hubbard", 8, U=-20.0)):
    system = build_system(spec)
    state = lanczos_ground_state(system.hamiltonian(1)).state
    chi = schmidt_decompose(state).schmidt_ranks
    fit = fit_exponential(rank_ordered(chi))
    print(f"{spec.model:>18} U={spec.U:+.0f}: alpha = {fit.alpha:.3f} over {fit.points} sectors")

# Communication over computation for a 12-site Heisenberg chain on 4 ranks.
system = build_system(ModelSpec("heisenberg", 12))
H = system.hamiltonian(1)
report = schmidt_decompose(lanczos_ground_state(H).state)
print("\ncutoff   chi   R")
for cutoff in (1e-6, 1e-8, 1e-10, 1e-12, 1e-14):
    point = modeled_census(H.plan, truncated_ranks(report, cutoff=cutoff), P=4)
    print(f"{cutoff:.0e}  {point.chi:4.0f}  {communication_ratio(point.elements, point.flops):.4f}")
