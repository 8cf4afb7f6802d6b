"""Lattice models, their 2-local term lists, and the block operator across a cut.

Fermionic signs follow a Jordan-Wigner ordering in which all left modes precede
all right modes. Inside a partition, modes are ordered as in
:func:`entwave.symmetry.partition_modes`. A product state ``|l>|r>`` is
``(prod_L c^dag)(prod_R c^dag)|0>`` with creators in ascending mode order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import StructuralError
from .symmetry import (
    DN,
    UP,
    EntanglementCut,
    SectorPairTable,
    compose,
    partition_modes,
)

MODELS = ("heisenberg", "hubbard", "attractive_hubbard", "impurity")
FERMIONIC_TAGS = frozenset({"cdag", "c"})
TAGS = frozenset({"S+", "S-", "Sz", "n", "cdag", "c", "Z"})


@dataclass(frozen=True)
class ModelSpec:
    """Model tag, chain length and couplings (units of J or t).

    The impurity model has a correlated site 0 hybridised with ``sites - 1``
    bath levels (star geometry). ``eps_d`` defaults to ``-U/2``.
    """

    model: str
    sites: int
    J: float = 1.0
    t: float = 1.0
    U: float = 0.0
    V: float = 0.0
    bath_energies: tuple | None = None
    hybridizations: tuple | None = None
    eps_d: float | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise StructuralError(f"unsupported model {self.model!r}; expected one of {MODELS}")
        if self.sites < 2:
            raise StructuralError(f"model needs at least 2 sites, got {self.sites}")
        if self.model == "impurity":
            nb = self.sites - 1
            if self.bath_energies is None:
                object.__setattr__(self, "bath_energies", tuple(np.linspace(-1.0, 1.0, nb).tolist()))
            if self.hybridizations is None:
                object.__setattr__(self, "hybridizations", (0.5,) * nb)
            if len(self.bath_energies) != nb or len(self.hybridizations) != nb:
                raise StructuralError(f"impurity model with {self.sites} sites needs {nb} bath energies and hybridizations")
            if self.eps_d is None:
                object.__setattr__(self, "eps_d", -self.U / 2)

    @property
    def is_fermionic(self) -> bool:
        return self.model != "heisenberg"

    def describe(self) -> dict:
        d = {"model": self.model, "sites": self.sites}
        if self.model == "heisenberg":
            d["J"] = self.J
        elif self.model == "impurity":
            d.update(U=self.U, eps_d=self.eps_d, bath_energies=list(self.bath_energies),
                     hybridizations=list(self.hybridizations))
        else:
            d.update(t=self.t, U=self.U, V=self.V)
        return d


@dataclass(frozen=True)
class HamiltonianTerm:
    """``coefficient * prod(factors)``; the rightmost factor acts first."""

    coefficient: float
    factors: tuple

    def __post_init__(self):
        for _, tag in self.factors:
            if tag not in TAGS:
                raise StructuralError(f"unknown local operator {tag!r}")


def build_terms(spec: ModelSpec) -> list:
    S = spec.sites
    terms = []

    def add(coef, *factors):
        if coef != 0:
            terms.append(HamiltonianTerm(float(coef), tuple(factors)))

    if spec.model == "heisenberg":
        for i in range(S - 1):
            a, b = (i, None), (i + 1, None)
            add(spec.J / 2, (a, "S+"), (b, "S-"))
            add(spec.J / 2, (a, "S-"), (b, "S+"))
            add(spec.J, (a, "Sz"), (b, "Sz"))
    elif spec.model in ("hubbard", "attractive_hubbard"):
        for i in range(S - 1):
            for s in (UP, DN):
                add(-spec.t, ((i, s), "cdag"), ((i + 1, s), "c"))
                add(-spec.t, ((i + 1, s), "cdag"), ((i, s), "c"))
        for i in range(S):
            add(spec.U, ((i, UP), "n"), ((i, DN), "n"))
        for i in range(S - 1):
            for s in (UP, DN):
                for s2 in (UP, DN):
                    add(spec.V, ((i, s), "n"), ((i + 1, s2), "n"))
    else:
        add(spec.U, ((0, UP), "n"), ((0, DN), "n"))
        for s in (UP, DN):
            add(spec.eps_d, ((0, s), "n"))
        for b, (eb, vb) in enumerate(zip(spec.bath_energies, spec.hybridizations), start=1):
            for s in (UP, DN):
                add(eb, ((b, s), "n"))
                add(vb, ((0, s), "cdag"), ((b, s), "c"))
                add(vb, ((b, s), "cdag"), ((0, s), "c"))
    return terms


@dataclass(frozen=True)
class LocalTerm:
    """Operator acting inside one partition; factors use local mode indices.

    With ``parity`` set, ``(-1)^N`` of the partition acts before the factors.
    """

    coefficient: float
    factors: tuple
    parity: bool = False


@dataclass(frozen=True)
class BoundaryPair:
    coefficient: float
    left: LocalTerm
    right: LocalTerm
    label: str = ""


@dataclass
class SplitTerms:
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    boundary: list = field(default_factory=list)


def _label(term) -> str:
    parts = []
    for (site, spin), tag in term.factors:
        parts.append(f"{tag}[{site}{'' if spin is None else spin}]")
    return f"{term.coefficient:+g} " + " ".join(parts)


def split_terms(terms, cut: EntanglementCut, fermionic: bool) -> SplitTerms:
    """Sort terms into L-only, R-only and cut-crossing ``L (x) R`` pairs.

    Crossing terms are reordered so every left factor stands left of every right
    factor (one sign per fermionic transposition). An odd number of fermionic
    right factors attaches the left partition's parity to the left factor.
    """
    where = {}
    for side in ("L", "R"):
        for j, mode in enumerate(partition_modes(cut, side, fermionic)):
            where[mode] = (side, j)
    out = SplitTerms()
    for term in terms:
        located = []
        for mode, tag in term.factors:
            if mode not in where:
                raise StructuralError(f"mode {mode} of term {_label(term)} is not covered by the cut")
            located.append((*where[mode], tag))
        sides = {s for s, _, _ in located}
        if sides == {"L"}:
            out.left.append(LocalTerm(term.coefficient, tuple((j, t) for _, j, t in located)))
        elif sides == {"R"}:
            out.right.append(LocalTerm(term.coefficient, tuple((j, t) for _, j, t in located)))
        else:
            sign = 1
            n_right_fermions = 0
            for side, _, tag in located:
                if tag not in FERMIONIC_TAGS:
                    continue
                if side == "R":
                    n_right_fermions += 1
                elif n_right_fermions % 2:
                    sign = -sign
            lf = tuple((j, t) for s, j, t in located if s == "L")
            rf = tuple((j, t) for s, j, t in located if s == "R")
            out.boundary.append(BoundaryPair(
                sign * term.coefficient,
                LocalTerm(1.0, lf, parity=bool(n_right_fermions % 2)),
                LocalTerm(1.0, rf),
                _label(term),
            ))
    return out


def apply_local(term: LocalTerm, states: np.ndarray):
    """Act with ``term`` (without its coefficient) on an array of bit patterns.

    Returns ``(amplitudes, new_states)``; annihilated states get amplitude 0.
    """
    states = np.asarray(states, dtype=np.int64).copy()

    def parity(x):
        return 1 - 2 * (np.bitwise_count(x).astype(np.int64) & 1)

    amp = np.ones(len(states))
    if term.parity:
        amp *= parity(states)
    for j, tag in reversed(term.factors):
        bit = (states >> j) & 1
        mask = np.int64(1) << j
        if tag == "Sz":
            amp *= bit - 0.5
        elif tag == "n":
            amp *= bit
        elif tag == "Z":
            amp *= 1 - 2 * bit
        elif tag in ("S+", "cdag"):
            amp *= 1 - bit
            if tag == "cdag":
                amp *= parity(states & (mask - 1))
            states = states | mask
        else:
            amp *= bit
            if tag == "c":
                amp *= parity(states & (mask - 1))
            states = states & ~mask
    return amp, states


def quantum_number_shift(term: LocalTerm, modes, fermionic: bool) -> tuple:
    """Change of the partition quantum number produced by ``term``."""
    if not fermionic:
        d = 0
        for _, tag in term.factors:
            d += {"S+": 2, "S-": -2}.get(tag, 0)
        return (d,)
    d = [0, 0]
    for j, tag in term.factors:
        if tag in FERMIONIC_TAGS:
            d[0 if modes[j][1] == UP else 1] += 1 if tag == "cdag" else -1
    return tuple(d)


def _local_matrix(terms, source, target, coefficient=None):
    rows, cols, vals = [], [], []
    cols_all = np.arange(source.dim)
    for term in terms:
        amp, new = apply_local(term, source.states)
        keep = amp != 0
        if not keep.any():
            continue
        new = new[keep]
        pos = np.searchsorted(target.states, new)
        pos = np.minimum(pos, target.dim - 1)
        if not np.all(target.states[pos] == new):
            raise StructuralError("operator leaves its target sector")
        rows.append(pos)
        cols.append(cols_all[keep])
        c = term.coefficient if coefficient is None else coefficient
        vals.append(c * amp[keep])
    shape = (target.dim, source.dim)
    if not rows:
        return sp.csr_matrix(shape)
    m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    return m


@dataclass
class BoundaryBlocks:
    """One cut-crossing term: ``coefficient * L_m (x) R_m`` split by source sector.

    ``left[k_l] = (q_l, matrix)`` maps left sector ``k_l`` into ``q_l``;
    ``right`` likewise for the right partition.
    """

    coefficient: float
    left: dict
    right: dict
    label: str = ""


@dataclass
class BlockOperator:
    table: SectorPairTable
    diagonal_L: dict
    diagonal_R: dict
    boundary: list


def assemble_block_operator(split: SplitTerms, table: SectorPairTable, cut: EntanglementCut,
                            fermionic: bool) -> BlockOperator:
    """Sparse diagonal and boundary blocks against the table's partition bases.

    All-zero blocks are dropped.
    """
    lmodes = partition_modes(cut, "L", fermionic)
    rmodes = partition_modes(cut, "R", fermionic)
    diag_l = {}
    for q, basis in table.left_bases.items():
        m = _local_matrix(split.left, basis, basis)
        if m.nnz:
            diag_l[q] = m
    diag_r = {}
    for q, basis in table.right_bases.items():
        m = _local_matrix(split.right, basis, basis)
        if m.nnz:
            diag_r[q] = m

    def side_blocks(term, bases, modes):
        shift = quantum_number_shift(term, modes, fermionic)
        blocks = {}
        for k, basis in bases.items():
            q = compose(k, shift)
            if q not in bases:
                continue
            m = _local_matrix([term], basis, bases[q], coefficient=1.0)
            if m.nnz:
                blocks[k] = (q, m)
        return blocks

    boundary = []
    for pair in split.boundary:
        left = side_blocks(pair.left, table.left_bases, lmodes)
        right = side_blocks(pair.right, table.right_bases, rmodes)
        if left and right:
            boundary.append(BoundaryBlocks(pair.coefficient, left, right, pair.label))
    return BlockOperator(table, diag_l, diag_r, boundary)


def build_block_operator(spec: ModelSpec, cut: EntanglementCut, table: SectorPairTable) -> BlockOperator:
    split = split_terms(build_terms(spec), cut, spec.is_fermionic)
    return assemble_block_operator(split, table, cut, spec.is_fermionic)


def default_target(spec: ModelSpec) -> tuple:
    """Sz=0 (or its closest value) for spins, half filling for fermions."""
    if spec.model == "heisenberg":
        return (spec.sites % 2,)
    return (spec.sites // 2, spec.sites // 2)
