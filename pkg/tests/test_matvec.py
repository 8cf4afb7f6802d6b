import json

import numpy as np
import pytest
import scipy.sparse as sp

from entwave.matvec import (
    BlockHamiltonian,
    apply_boundary,
    apply_left_diagonal,
    apply_right_diagonal,
    build_plan,
    plan_json,
)
from entwave.models import BlockOperator
from entwave.oracle import dense_sector_hamiltonian
from entwave.state import dot, gather_full, random_state, scatter
from entwave.symmetry import PartitionBasis, SectorPair, SectorPairTable
from entwave.transport import SimComm, padded_transpose_volume, real_transpose_volume

from conftest import cached_system

ORACLE_CASES = [
    ("heisenberg", 4, 0.0, 0.0, None),
    ("heisenberg", 8, 0.0, 0.0, None),
    ("heisenberg", 10, 0.0, 0.0, None),
    ("hubbard", 4, 2.0, 0.0, None),
    ("hubbard", 6, 2.0, 0.0, None),
    ("hubbard", 6, 2.0, 0.5, None),
    ("attractive_hubbard", 6, -8.0, 0.0, None),
    ("impurity", 5, 2.0, 0.0, "spin"),
]


def piece_dense(op, kind):
    """Dense matrix of one operation class, from the operator blocks."""
    table = op.table
    off = table.offsets()
    H = np.zeros((table.dimension, table.dimension))
    index = {(p.q_left, p.q_right): k for k, p in enumerate(table.pairs)}
    for k, p in enumerate(table.pairs):
        sl = slice(off[k], off[k + 1])
        if kind == "L" and p.q_left in op.diagonal_L:
            H[sl, sl] += np.kron(op.diagonal_L[p.q_left].toarray(), np.eye(p.d_right))
        if kind == "R" and p.q_right in op.diagonal_R:
            H[sl, sl] += np.kron(np.eye(p.d_left), op.diagonal_R[p.q_right].toarray())
    if kind == "B":
        for bb in op.boundary:
            for kl, (ql, L) in bb.left.items():
                for kr, (qr, R) in bb.right.items():
                    s, d = index.get((kl, kr)), index.get((ql, qr))
                    if s is not None and d is not None:
                        H[off[d]:off[d + 1], off[s]:off[s + 1]] += bb.coefficient * np.kron(L.toarray(), R.toarray())
    return H


@pytest.mark.parametrize("model,sites,U,V,cut", ORACLE_CASES)
def test_matvec_matches_dense_oracle(model, sites, U, V, cut):
    sysm = cached_system(model, sites, U, V, None, cut)
    Hd = dense_sector_hamiltonian(sysm.spec, sysm.cut, sysm.table)
    rng = np.random.default_rng(sites)
    vecs = rng.standard_normal((5, sysm.table.dimension))
    for P in (1, 2, 3, 4, 8):
        H = sysm.hamiltonian(P)
        for v in vecs:
            got = gather_full(H.apply(scatter(v, sysm.table, H.layout)))
            assert np.max(np.abs(got - Hd @ v)) <= 1e-12


@pytest.mark.parametrize("kind,fn", [("R", apply_right_diagonal), ("L", apply_left_diagonal), ("B", apply_boundary)])
@pytest.mark.parametrize("P", [1, 2, 4])
def test_operation_classes_match_kronecker_oracle(kind, fn, P):
    sysm = cached_system("heisenberg", 8)
    H = sysm.hamiltonian(P)
    v = np.random.default_rng(1).standard_normal(sysm.table.dimension)
    got = gather_full(fn(H, scatter(v, sysm.table, H.layout)))
    assert np.max(np.abs(got - piece_dense(sysm.op, kind) @ v)) <= 1e-12


@pytest.mark.parametrize("P", [1, 2, 3])
def test_fermionic_boundary_matches_jordan_wigner_oracle(P):
    sysm = cached_system("hubbard", 6, 2.0)
    H = sysm.hamiltonian(P)
    Hd = dense_sector_hamiltonian(sysm.spec, sysm.cut, sysm.table)
    R, L = piece_dense(sysm.op, "R"), piece_dense(sysm.op, "L")
    v = np.random.default_rng(2).standard_normal(sysm.table.dimension)
    got = gather_full(apply_boundary(H, scatter(v, sysm.table, H.layout)))
    assert np.max(np.abs(got - (Hd - R - L) @ v)) <= 1e-12


def toy_operator(L, R, diag_l=None, diag_r=None):
    """One square pair with dense 2x2 partition operators."""
    basis = PartitionBasis((0,), np.arange(2), {0: 0, 1: 1})
    table = SectorPairTable((0,), (SectorPair((0,), (0,), 2, 2),), {(0,): basis}, {(0,): basis})
    from entwave.models import BoundaryBlocks

    bnd = [] if L is None else [BoundaryBlocks(1.0, {(0,): ((0,), sp.csr_matrix(L))}, {(0,): ((0,), sp.csr_matrix(R))})]
    dl = {} if diag_l is None else {(0,): sp.csr_matrix(diag_l)}
    dr = {} if diag_r is None else {(0,): sp.csr_matrix(diag_r)}
    return BlockOperator(table, dl, dr, bnd)


@pytest.mark.parametrize("P", [1, 2, 3])
def test_two_by_two_vec_identity(P):
    L = np.array([[0.0, 1.0], [1.0, 0.0]])
    R = np.array([[1.0, 0.0], [0.0, -1.0]])
    Psi = np.array([[1.0, 0.0], [0.0, 0.0]])
    op = toy_operator(L, R)
    from entwave.state import make_layout

    H = BlockHamiltonian(op, make_layout(op.table, P))
    out = gather_full(H.apply(scatter(Psi.flatten(order="F"), op.table, H.layout)))
    expected = R @ Psi @ L.T
    assert np.array_equal(out, expected.flatten(order="F"))
    assert np.array_equal(out, np.kron(L, R) @ Psi.flatten(order="F"))
    assert expected.tolist() == [[0.0, 1.0], [0.0, 0.0]]


@pytest.mark.parametrize("P", [1, 2, 3])
def test_identity_blocks_leave_state_unchanged(P):
    from entwave.state import make_layout

    v = np.random.default_rng(0).standard_normal(4)
    eye = np.eye(2)
    for op in (toy_operator(eye, eye), toy_operator(None, None, diag_l=eye), toy_operator(None, None, diag_r=eye)):
        H = BlockHamiltonian(op, make_layout(op.table, P))
        assert np.array_equal(gather_full(H.apply(scatter(v, op.table, H.layout))), v)


def test_two_site_heisenberg_matrix_elements():
    sysm = cached_system("heisenberg", 2)
    H = sysm.hamiltonian(1)
    # pairs are ordered by q_left: (-1|+1) is |dn,up>, (+1|-1) is |up,dn>
    labels = [(p.q_left, p.q_right) for p in sysm.table.pairs]
    assert labels == [((-1,), (1,)), ((1,), (-1,))]
    updn = np.array([0.0, 1.0])
    out = gather_full(H.apply(scatter(updn, sysm.table, H.layout)))
    assert np.allclose(out, [0.5, -0.25], atol=1e-15)


def test_zero_state_maps_to_zero():
    sysm = cached_system("hubbard", 4, 2.0)
    H = sysm.hamiltonian(3)
    zero = random_state(sysm.table, H.layout, 0).zeros_like()
    assert not np.any(gather_full(H.apply(zero)))


@pytest.mark.parametrize("model,sites,U,V,cut", ORACLE_CASES[:6])
def test_hermiticity(model, sites, U, V, cut):
    sysm = cached_system(model, sites, U, V, None, cut)
    H = sysm.hamiltonian(3)
    a = random_state(sysm.table, H.layout, 1)
    b = random_state(sysm.table, H.layout, 2)
    assert abs(dot(a, H.apply(b)) - np.conj(dot(b, H.apply(a)))) <= 1e-12


def test_complex_states_are_supported():
    sysm = cached_system("heisenberg", 6)
    H = sysm.hamiltonian(2)
    Hd = dense_sector_hamiltonian(sysm.spec, sysm.cut, sysm.table)
    psi = random_state(sysm.table, H.layout, 4, dtype=complex)
    assert np.max(np.abs(gather_full(H.apply(psi)) - Hd @ gather_full(psi))) <= 1e-12


@pytest.mark.parametrize("model,sites,U,V,cut", ORACLE_CASES)
@pytest.mark.parametrize("P", [1, 3, 4])
def test_transpose_census_matches_plan(model, sites, U, V, cut, P):
    sysm = cached_system(model, sites, U, V, None, cut)
    H = sysm.hamiltonian(P)
    dump = json.loads(plan_json(H))
    H.apply(random_state(sysm.table, H.layout, 0))
    rec = {r["phase"]: r for r in json.loads(H.comm.counter.to_json())}
    calls = sum(rec.get(ph, {"calls": 0})["calls"] for ph in ("diagonal_L", "boundary"))
    assert calls == 2 * dump["census"]["L_tasks"] + 2 * dump["census"]["B_tasks"] == dump["census"]["transposes"]
    assert rec.get("diagonal_R", {"elements_padded": 0})["elements_padded"] == 0
    padded = sum(r["elements_padded"] for r in rec.values())
    assert padded == sum(p["elements_padded"] for p in dump["pairs"])
    real = sum(r["elements_real"] for r in rec.values())
    assert real == sum(p["elements_real"] for p in dump["pairs"])


def test_counter_volume_matches_analytic_formula():
    sysm = cached_system("heisenberg", 10)
    P = 4
    H = sysm.hamiltonian(P)
    H.apply(random_state(sysm.table, H.layout, 0))
    expected = 0
    for t in H.plan.tasks:
        for r, c in t.transposes:
            tmax, b = -(-c // P), -(-r // P)
            expected += P * tmax * P * b * (P - 1) // P
    assert H.comm.counter.totals().elements_padded == expected
    assert expected > 0


def test_serial_boundary_exchanges_nothing():
    sysm = cached_system("heisenberg", 8)
    H = sysm.hamiltonian(1)
    apply_boundary(H, random_state(sysm.table, H.layout, 0))
    t = H.comm.counter.totals()
    assert t.elements_real == 0 and t.elements_padded == 0 and t.calls > 0


def test_results_bitwise_identical_across_rank_counts_and_schedules():
    sysm = cached_system("hubbard", 6, 2.0, 0.5)
    v = np.random.default_rng(5).standard_normal(sysm.table.dimension)
    outs = []
    for P in (1, 2, 3, 8):
        for schedule in ("serial", "reversed", "threads"):
            H = sysm.hamiltonian(P, schedule)
            outs.append(gather_full(H.apply(scatter(v, sysm.table, H.layout))))
    for o in outs[1:]:
        assert np.array_equal(o, outs[0])


def test_plan_is_rank_independent_and_covers_blocks():
    sysm = cached_system("hubbard", 6, 2.0)
    plans = [build_plan(sysm.op) for _ in range(2)]
    assert [(t.kind, t.dest, t.source, t.m) for t in plans[0].tasks] == [(t.kind, t.dest, t.source, t.m) for t in plans[1].tasks]
    keys = [(t.kind, t.dest, t.source, t.m) for t in plans[0].tasks]
    assert len(keys) == len(set(keys))
    # every pair with a nonzero H_L block has exactly one L task
    for k, p in enumerate(sysm.table.pairs):
        assert sum(1 for t in plans[0].tasks if t.kind == "L" and t.dest == k) == int(p.q_left in sysm.op.diagonal_L)


def test_flop_counts_recorded_per_phase():
    sysm = cached_system("heisenberg", 8)
    H = sysm.hamiltonian(2)
    H.apply(random_state(sysm.table, H.layout, 0))
    recorded = sum(r["flops"] for r in json.loads(H.comm.counter.to_json()))
    assert recorded == int(H.plan.flops(H.layout, sysm.table).sum())


def test_layout_mismatch_rejected():
    from entwave.exceptions import StructuralError

    sysm = cached_system("heisenberg", 4)
    H = sysm.hamiltonian(2)
    with pytest.raises(StructuralError):
        H.apply(random_state(sysm.table, sysm.layout(3), 0))
    with pytest.raises(StructuralError):
        BlockHamiltonian(sysm.op, sysm.layout(2), SimComm(3))
