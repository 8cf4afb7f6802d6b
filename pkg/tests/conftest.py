import functools

import numpy as np
import pytest

from entwave.models import ModelSpec
from entwave.pipeline import build_system


@functools.lru_cache(maxsize=None)
def cached_system(model, sites, U=0.0, V=0.0, target=None, cut_kind=None):
    spec = ModelSpec(model, sites, U=U, V=V)
    from entwave.pipeline import default_cut

    return build_system(spec, default_cut(spec, cut_kind), target)


@pytest.fixture
def system():
    return cached_system


def block_operator_dense(op):
    """Sector matrix rebuilt from the operator blocks with Kronecker products."""
    table = op.table
    off = table.offsets()
    H = np.zeros((table.dimension, table.dimension))
    index = {(p.q_left, p.q_right): k for k, p in enumerate(table.pairs)}
    for k, p in enumerate(table.pairs):
        sl = slice(off[k], off[k + 1])
        if p.q_left in op.diagonal_L:
            H[sl, sl] += np.kron(op.diagonal_L[p.q_left].toarray(), np.eye(p.d_right))
        if p.q_right in op.diagonal_R:
            H[sl, sl] += np.kron(np.eye(p.d_left), op.diagonal_R[p.q_right].toarray())
    for bb in op.boundary:
        for kl, (ql, L) in bb.left.items():
            for kr, (qr, R) in bb.right.items():
                src, dst = index.get((kl, kr)), index.get((ql, qr))
                if src is None or dst is None:
                    continue
                H[off[dst]:off[dst + 1], off[src]:off[src + 1]] += bb.coefficient * np.kron(L.toarray(), R.toarray())
    return H


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
