"""Convenience wiring: model + cut + target sector -> distributed Hamiltonian."""

from __future__ import annotations

from dataclasses import dataclass

from .matvec import BlockHamiltonian
from .models import BlockOperator, ModelSpec, build_block_operator, default_target
from .state import DistributionLayout, make_layout, model_hash
from .symmetry import EntanglementCut, SectorPairTable, build_sector_pair_table, spatial_cut, spin_cut
from .transport import SimComm


@dataclass
class System:
    spec: ModelSpec
    cut: EntanglementCut
    table: SectorPairTable
    op: BlockOperator

    def hamiltonian(self, P: int = 1, schedule: str = "serial") -> BlockHamiltonian:
        return BlockHamiltonian(self.op, self.layout(P), SimComm(P, schedule))

    def layout(self, P: int) -> DistributionLayout:
        return make_layout(self.table, P)

    @property
    def hash(self) -> str:
        return model_hash({"model": self.spec.describe(), "cut": [self.cut.kind, list(self.cut.left_sites),
                                                                  list(self.cut.right_sites)],
                           "target": list(self.table.target_q)})


def default_cut(spec: ModelSpec, kind: str | None = None, position: int | None = None) -> EntanglementCut:
    kind = kind or ("spin" if spec.model == "impurity" else "spatial")
    return spin_cut(spec.sites) if kind == "spin" else spatial_cut(spec.sites, position)


def build_system(spec: ModelSpec, cut: EntanglementCut | None = None, target=None) -> System:
    cut = cut or default_cut(spec)
    target = default_target(spec) if target is None else tuple(target)
    table = build_sector_pair_table(cut, target, spec)
    return System(spec, cut, table, build_block_operator(spec, cut, table))
