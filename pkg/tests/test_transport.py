import numpy as np
import pytest

from entwave.exceptions import StructuralError
from entwave.transport import (
    SimComm,
    balanced_counts,
    padded_transpose_volume,
    real_transpose_volume,
)


def distribute(A, P):
    cols = balanced_counts(A.shape[1], P)
    edges = np.concatenate([[0], np.cumsum(cols)])
    return [np.asfortranarray(A[:, edges[p]:edges[p + 1]]) for p in range(P)]


def collect(blocks):
    return np.concatenate(blocks, axis=1)


def test_serial_transpose_is_plain_transpose():
    comm = SimComm(1)
    A = np.arange(12.0).reshape(3, 4)
    (out,) = comm.parallel_transpose([A], 3, 4)
    assert np.array_equal(out, A.T)
    assert comm.counter.totals().elements_real == 0
    assert comm.counter.totals().elements_padded == 0


def test_two_rank_two_by_two_trace():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    comm = SimComm(2)
    out = comm.parallel_transpose([np.array([[a], [c]]), np.array([[b], [d]])], 2, 2)
    assert out[0].ravel().tolist() == [a, b]
    assert out[1].ravel().tolist() == [c, d]
    t = comm.counter.totals()
    assert t.elements_real == 2 == 4 * (1 - 1 / 2)
    assert t.elements_padded == 2


def test_two_rank_four_by_four_volume():
    comm = SimComm(2)
    A = np.arange(16.0).reshape(4, 4)
    comm.parallel_transpose(distribute(A, 2), 4, 4)
    assert comm.counter.totals().elements_padded == 8 == 16 * (1 - 1 / 2)


def test_involution_on_randomized_geometries():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        P = int(rng.integers(1, 9))
        nrows = int(rng.integers(0, 13))
        ncols = int(rng.integers(0, 13))
        A = rng.standard_normal((nrows, ncols))
        comm = SimComm(P)
        t = comm.parallel_transpose(distribute(A, P), nrows, ncols)
        assert np.array_equal(collect(t), A.T)
        back = comm.parallel_transpose(t, ncols, nrows)
        for got, want in zip(back, distribute(A, P)):
            assert np.array_equal(got, want)
        c = comm.counter.totals()
        assert c.calls == 2
        tmax, b = -(-ncols // P), -(-nrows // P)
        v_pad = P * tmax * P * b
        assert padded_transpose_volume(nrows, ncols, P) * P == v_pad * (P - 1)
        assert c.elements_padded == 2 * v_pad * (P - 1) // P
        assert c.elements_real == real_transpose_volume(nrows, ncols, P) + real_transpose_volume(ncols, nrows, P)
        if P == 1:
            assert c.elements_real == 0 and c.elements_padded == 0


def test_geometry_mismatch_aborts():
    comm = SimComm(2)
    with pytest.raises(StructuralError):
        comm.parallel_transpose([np.zeros((3, 2)), np.zeros((3, 2))], 3, 3)


def test_counter_additivity():
    comm = SimComm(3)
    A = np.ones((5, 7))
    per_call = padded_transpose_volume(5, 7, 3)
    for k in range(1, 5):
        comm.parallel_transpose(distribute(A, 3), 5, 7)
        assert comm.counter.totals().elements_padded == k * per_call
        assert comm.counter.totals().calls == k


def test_allreduce_examples():
    comm = SimComm(4)
    assert comm.allreduce_sum([1, 2, 3, 4]) == [10] * 4
    assert SimComm(1).allreduce_sum([7.5]) == [7.5]
    # rank-order accumulation reproduces the serial left-to-right sum
    serial = 0.0
    for _ in range(10):
        serial += 0.1
    assert SimComm(10).allreduce_sum([0.1] * 10)[0] == serial
    with pytest.raises(StructuralError):
        comm.allreduce_sum([np.zeros(2), np.zeros(2), np.zeros(3), np.zeros(2)])


@pytest.mark.parametrize("schedule", ["serial", "reversed", "threads"])
def test_schedules_agree(schedule):
    rng = np.random.default_rng(3)
    A = rng.standard_normal((9, 11))
    ref = SimComm(4).parallel_transpose(distribute(A, 4), 9, 11)
    got = SimComm(4, schedule).parallel_transpose(distribute(A, 4), 9, 11)
    for a, b in zip(ref, got):
        assert np.array_equal(a, b)


def test_messages_do_not_alias():
    comm = SimComm(2)
    blocks = [np.ones((2, 1)), np.ones((2, 1))]
    out = comm.parallel_transpose(blocks, 2, 2)
    blocks[0][:] = 5.0
    assert np.all(out[0] == 1.0) and np.all(out[1] == 1.0)


def test_counter_json_fields():
    import json

    comm = SimComm(2)
    comm.parallel_transpose([np.ones((2, 1)), np.ones((2, 1))], 2, 2, phase="boundary")
    (rec,) = json.loads(comm.counter.to_json())
    assert set(rec) == {"phase", "calls", "elements_real", "elements_padded", "flops"}
    assert rec["phase"] == "boundary" and rec["calls"] == 1
