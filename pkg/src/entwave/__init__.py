"""Symmetry-resolved bipartite wavefunctions with a distributed Hamiltonian kernel."""

__version__ = "0.1.0"
