"""Dense reference constructions used to check the block engine.

Everything here is built straight from the model definitions with Kronecker
products of 2x2 matrices over the global mode order (left modes first), with
no use of the term lists or partition machinery of the block engine.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .exceptions import OracleCapExceeded
from .models import ModelSpec
from .state import DEFAULT_ORACLE_CAP
from .symmetry import DN, UP, EntanglementCut, SectorPairTable, global_modes

_I = sp.identity(2, format="csr")
_Z = sp.csr_matrix(np.diag([1.0, -1.0]))
_A = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))  # |0><1|: annihilates bit 1
_SX = sp.csr_matrix(np.array([[0.0, 0.5], [0.5, 0.0]]))
_SY = sp.csr_matrix(np.array([[0.0, 0.5j], [-0.5j, 0.0]]))  # basis (|dn>, |up>)
_SZ = sp.csr_matrix(np.diag([-0.5, 0.5]))


def _embed(n, ops):
    """Kronecker product with ``ops[j]`` on mode ``j`` (mode 0 = lowest bit)."""
    out = sp.identity(1, format="csr")
    for j in reversed(range(n)):
        out = sp.kron(out, ops.get(j, _I), format="csr")
    return out


def annihilator(n, j):
    ops = {i: _Z for i in range(j)}
    ops[j] = _A
    return _embed(n, ops)


def full_hamiltonian(spec: ModelSpec, cut: EntanglementCut) -> sp.csr_matrix:
    modes = global_modes(cut, spec.is_fermionic)
    n = len(modes)
    idx = {m: j for j, m in enumerate(modes)}
    H = sp.csr_matrix((2**n, 2**n), dtype=complex)
    S = spec.sites
    if spec.model == "heisenberg":
        for i in range(S - 1):
            a, b = idx[(i, None)], idx[(i + 1, None)]
            for s in (_SX, _SY, _SZ):
                H = H + spec.J * _embed(n, {a: s, b: s})
        return sp.csr_matrix(H.real)
    c = {m: annihilator(n, j) for m, j in idx.items()}
    num = {m: c[m].T @ c[m] for m in idx}
    if spec.model in ("hubbard", "attractive_hubbard"):
        for i in range(S - 1):
            for s in (UP, DN):
                hop = c[(i, s)].T @ c[(i + 1, s)]
                H = H - spec.t * (hop + hop.T)
            ni = num[(i, UP)] + num[(i, DN)]
            nj = num[(i + 1, UP)] + num[(i + 1, DN)]
            H = H + spec.V * (ni @ nj)
        for i in range(S):
            H = H + spec.U * (num[(i, UP)] @ num[(i, DN)])
    else:
        H = H + spec.U * (num[(0, UP)] @ num[(0, DN)])
        for s in (UP, DN):
            H = H + spec.eps_d * num[(0, s)]
            for b in range(1, S):
                H = H + spec.bath_energies[b - 1] * num[(b, s)]
                hop = c[(0, s)].T @ c[(b, s)]
                H = H + spec.hybridizations[b - 1] * (hop + hop.T)
    return sp.csr_matrix(H.real)


def sector_indices(table: SectorPairTable, n_left_modes: int) -> np.ndarray:
    """Full-space bit index of every gathered coefficient, in gather order."""
    out = []
    for pair in table.pairs:
        ls = table.left_bases[pair.q_left].states
        rs = table.right_bases[pair.q_right].states
        out.append((ls[:, None] | (rs[None, :] << n_left_modes)).ravel())
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def n_left_modes(cut: EntanglementCut, fermionic: bool) -> int:
    if not fermionic:
        return len(cut.left_sites)
    return len(cut.left_sites) * (1 if cut.kind == "spin" else 2)


def dense_sector_hamiltonian(spec: ModelSpec, cut: EntanglementCut, table: SectorPairTable,
                             cap: int = DEFAULT_ORACLE_CAP) -> np.ndarray:
    if table.dimension > cap:
        raise OracleCapExceeded(table.dimension, cap)
    H = full_hamiltonian(spec, cut)
    idx = sector_indices(table, n_left_modes(cut, spec.is_fermionic))
    return H[idx][:, idx].toarray()


def dense_ground_energy(spec, cut, table, cap=DEFAULT_ORACLE_CAP) -> float:
    return float(np.linalg.eigvalsh(dense_sector_hamiltonian(spec, cut, table, cap))[0])


def dense_entropy(vec, table: SectorPairTable, nl: int) -> float:
    """Von Neumann entropy of ``rho_L = Tr_R |psi><psi|`` by eigendecomposition."""
    nr_bits = 0
    for b in table.right_bases.values():
        nr_bits = max(nr_bits, int(b.states.max()).bit_length())
    idx = sector_indices(table, nl)
    M = np.zeros((2**nl, 2**max(nr_bits, 1)), dtype=np.asarray(vec).dtype)
    M[idx & ((1 << nl) - 1), idx >> nl] = vec
    lam = np.linalg.eigvalsh(M @ M.conj().T)
    lam = lam[lam > 1e-300]
    return float(-np.sum(lam * np.log(lam)))
