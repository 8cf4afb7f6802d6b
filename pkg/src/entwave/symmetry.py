"""Abelian quantum numbers, partition sectors and sector-pair tables.

Quantum numbers are plain tuples of ints. Spin models use ``(2*Sz,)`` so that
all arithmetic stays integral; fermionic models use ``(N_up, N_dn)``.

A partition basis state is an integer bit pattern over the partition's ordered
mode list: bit ``j`` is the occupation of mode ``j`` (spin up for spin models).
For fermions on a spatial cut the mode list holds all spin-up modes of the
partition's sites followed by all spin-down modes, so up bits sit in the low half.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import StructuralError

UP, DN = "up", "dn"


def compose(a: tuple, b: tuple) -> tuple:
    """Compose two Abelian quantum numbers (component-wise addition)."""
    if len(a) != len(b):
        raise StructuralError(f"quantum numbers {a} and {b} have different component counts")
    return tuple(x + y for x, y in zip(a, b))


def subtract(a: tuple, b: tuple) -> tuple:
    if len(a) != len(b):
        raise StructuralError(f"quantum numbers {a} and {b} have different component counts")
    return tuple(x - y for x, y in zip(a, b))


@dataclass(frozen=True)
class EntanglementCut:
    """Bipartition of the lattice degrees of freedom.

    ``kind`` is ``"spatial"`` (sites split between L and R) or ``"spin"``
    (every site on both sides; L keeps the spin-up modes, R the spin-down ones).
    """

    kind: str
    left_sites: tuple
    right_sites: tuple

    def __post_init__(self):
        if self.kind not in ("spatial", "spin"):
            raise StructuralError(f"unknown cut kind {self.kind!r}")
        if self.kind == "spatial" and set(self.left_sites) & set(self.right_sites):
            raise StructuralError("spatial cut sides overlap")

    @property
    def sites(self) -> int:
        return len(set(self.left_sites) | set(self.right_sites))


def spatial_cut(sites: int, position: int | None = None) -> EntanglementCut:
    """Cut an open chain of ``sites`` sites between ``position-1`` and ``position``.

    Defaults to the centre of the chain.
    """
    if position is None:
        position = sites // 2
    if not 0 < position < sites:
        raise StructuralError(f"cut position {position} outside 1..{sites - 1}")
    return EntanglementCut("spatial", tuple(range(position)), tuple(range(position, sites)))


def spin_cut(sites: int) -> EntanglementCut:
    """Cut in spin space: all up modes on the left, all down modes on the right."""
    allsites = tuple(range(sites))
    return EntanglementCut("spin", allsites, allsites)


def partition_modes(cut: EntanglementCut, side: str, fermionic: bool) -> tuple:
    """Ordered modes ``(site, spin)`` of one side; bit ``j`` of a state is mode ``j``."""
    if side not in ("L", "R"):
        raise StructuralError(f"side must be 'L' or 'R', got {side!r}")
    sites = cut.left_sites if side == "L" else cut.right_sites
    if not fermionic:
        if cut.kind != "spatial":
            raise StructuralError("spin-space cuts need a fermionic model")
        return tuple((s, None) for s in sites)
    if cut.kind == "spin":
        return tuple((s, UP if side == "L" else DN) for s in sites)
    return tuple((s, UP) for s in sites) + tuple((s, DN) for s in sites)


def global_modes(cut: EntanglementCut, fermionic: bool) -> tuple:
    """Global mode order used for Jordan-Wigner strings: L modes then R modes."""
    return partition_modes(cut, "L", fermionic) + partition_modes(cut, "R", fermionic)


def state_quantum_number(state: int, modes: Sequence, fermionic: bool) -> tuple:
    if not fermionic:
        nup = bin(state).count("1")
        return (2 * nup - len(modes),)
    nup = ndn = 0
    for j, (_, spin) in enumerate(modes):
        if state >> j & 1:
            if spin == UP:
                nup += 1
            else:
                ndn += 1
    return (nup, ndn)


@dataclass(frozen=True)
class PartitionBasis:
    """Ascending bit patterns of one partition with a fixed quantum number."""

    sector_q: tuple
    states: np.ndarray
    index: dict = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.states)


def enumerate_partition_sectors(cut: EntanglementCut, side: str, model) -> list:
    """All ``(q, PartitionBasis)`` of one side, ordered lexicographically by ``q``."""
    if cut.sites != model.sites:
        raise StructuralError(f"cut covers {cut.sites} sites, model has {model.sites}")
    modes = partition_modes(cut, side, model.is_fermionic)
    buckets: dict = {}
    for state in range(1 << len(modes)):
        q = state_quantum_number(state, modes, model.is_fermionic)
        buckets.setdefault(q, []).append(state)
    out = []
    for q in sorted(buckets):
        states = np.array(buckets[q], dtype=np.int64)
        out.append((q, PartitionBasis(q, states, {int(s): i for i, s in enumerate(states)})))
    return out


@dataclass(frozen=True)
class SectorPair:
    q_left: tuple
    q_right: tuple
    d_left: int
    d_right: int

    @property
    def size(self) -> int:
        return self.d_left * self.d_right


@dataclass(frozen=True)
class SectorPairTable:
    """Admissible ``(q_l, q_r)`` pairs with ``q_l + q_r = target_q`` and their bases."""

    target_q: tuple
    pairs: tuple
    left_bases: dict = field(repr=False, compare=False)
    right_bases: dict = field(repr=False, compare=False)

    def __len__(self):
        return len(self.pairs)

    @property
    def dimension(self) -> int:
        return sum(p.size for p in self.pairs)

    def find(self, q_left: tuple, q_right: tuple) -> int | None:
        for i, p in enumerate(self.pairs):
            if p.q_left == q_left and p.q_right == q_right:
                return i
        return None

    def offsets(self) -> np.ndarray:
        """Start of each pair's block in the gathered (Vec-ordered) vector."""
        sizes = [p.size for p in self.pairs]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    def describe(self) -> dict:
        return {
            "target_q": list(self.target_q),
            "pairs": [[list(p.q_left), list(p.q_right), p.d_left, p.d_right] for p in self.pairs],
        }


def build_sector_pair_table(cut: EntanglementCut, target_q: tuple, model) -> SectorPairTable:
    """Enumerate the sector pairs realising ``target_q`` across ``cut``.

    An unrealisable target gives an empty table.
    """
    target_q = tuple(int(x) for x in target_q)
    left = enumerate_partition_sectors(cut, "L", model)
    right = dict(enumerate_partition_sectors(cut, "R", model))
    if left and len(left[0][0]) != len(target_q):
        raise StructuralError(f"target {target_q} has the wrong number of components")
    pairs, lb, rb = [], {}, {}
    for ql, basis_l in left:
        qr = subtract(target_q, ql)
        basis_r = right.get(qr)
        if basis_r is None or basis_l.dim == 0 or basis_r.dim == 0:
            continue
        pairs.append(SectorPair(ql, qr, basis_l.dim, basis_r.dim))
        lb[ql] = basis_l
        rb[qr] = basis_r
    return SectorPairTable(target_q, tuple(pairs), lb, rb)
