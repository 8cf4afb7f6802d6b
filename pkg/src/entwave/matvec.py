"""Distributed application of the block Hamiltonian.

Three task classes act on a column-distributed block ``Psi`` (``d_R x d_L``):

* right diagonal ``(1 (x) H_R)``: ``Psi <- H_R Psi`` on local columns, no traffic;
* left diagonal ``(H_L (x) 1)``: ``T*(H_L T*(Psi))``;
* boundary ``(L_m (x) R_m)``: ``C = R_m Psi`` locally, then ``T*(L_m T*(C))``.

The last two use ``vec(R Psi L^T) = (L (x) R) vec(Psi)`` with column-stacking ``vec``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import StructuralError
from .models import BlockOperator
from .state import BlockWavefunction, DistributionLayout, check_compatible
from .transport import SimComm, balanced_counts, padded_transpose_volume, real_transpose_volume

DENSE_THRESHOLD = 0.25


class DenseKernel:
    """Dense block whose products sum the inner index in ascending order.

    BLAS picks its blocking from the operand shapes, so the rounding of a column
    would depend on how many columns a rank owns. Accumulating rank-1 updates
    keeps every output element's summation order fixed, which makes matvec
    results bitwise independent of the rank count.
    """

    def __init__(self, a):
        self.a = np.asarray(a)
        self.shape = self.a.shape

    def __matmul__(self, x):
        out = np.zeros((self.shape[0], x.shape[1]), dtype=np.result_type(self.a, x))
        for k in range(self.shape[1]):
            out += self.a[:, k:k + 1] * x[k:k + 1, :]
        return out

    def toarray(self):
        return self.a.copy()


def _kernel(m, threshold):
    if m is None:
        return None
    density = m.nnz / max(1, m.shape[0] * m.shape[1])
    return DenseKernel(m.toarray()) if density > threshold else m.tocsr()


def product_flops(m, ncols: int) -> int:
    if sp.issparse(m):
        return 2 * m.nnz * ncols
    return 2 * m.shape[0] * m.shape[1] * ncols


@dataclass
class Task:
    kind: str  # "R", "L" or "B"
    dest: int
    source: int
    left: object = None
    right: object = None
    coefficient: float = 1.0
    m: int = -1
    transposes: list = field(default_factory=list)  # (nrows, ncols) of each T*

    @property
    def n_transposes(self) -> int:
        return len(self.transposes)


@dataclass
class ApplyPlan:
    tasks: list
    npairs: int

    def census(self) -> dict:
        n_l = sum(t.kind == "L" for t in self.tasks)
        n_b = sum(t.kind == "B" for t in self.tasks)
        return {"L_tasks": n_l, "B_tasks": n_b, "R_tasks": sum(t.kind == "R" for t in self.tasks),
                "transposes": sum(t.n_transposes for t in self.tasks)}

    def flops(self, layout: DistributionLayout, table) -> np.ndarray:
        """Flops per rank of one application."""
        P = layout.P
        out = np.zeros(P, dtype=np.int64)
        for t in self.tasks:
            dst = table.pairs[t.dest]
            if t.kind == "R":
                out += [product_flops(t.right, c) for c in layout.counts[t.dest]]
            elif t.kind == "L":
                out += [product_flops(t.left, c) for c in balanced_counts(dst.d_right, P)]
            else:
                out += [product_flops(t.right, c) for c in layout.counts[t.source]]
                out += [product_flops(t.left, c) for c in balanced_counts(dst.d_right, P)]
        return out

    def dump(self, table, P: int) -> dict:
        per_pair = []
        for k, pair in enumerate(table.pairs):
            tasks = [t for t in self.tasks if t.dest == k]
            geos = [g for t in tasks for g in t.transposes]
            per_pair.append({
                "pair": [list(pair.q_left), list(pair.q_right)],
                "R_tasks": sum(t.kind == "R" for t in tasks),
                "L_tasks": sum(t.kind == "L" for t in tasks),
                "B_tasks": sum(t.kind == "B" for t in tasks),
                "transposes": len(geos),
                "elements_padded": int(sum(padded_transpose_volume(r, c, P) for r, c in geos)),
                "elements_real": int(sum(real_transpose_volume(r, c, P) for r, c in geos)),
            })
        return {"P": P, "census": self.census(), "pairs": per_pair}


def build_plan(op: BlockOperator, dense_threshold: float = DENSE_THRESHOLD) -> ApplyPlan:
    """Tasks ordered by destination pair, then R, L, boundary (ascending ``m``)."""
    table = op.table
    index = {(p.q_left, p.q_right): k for k, p in enumerate(table.pairs)}
    inverse = []
    for bb in op.boundary:
        li = {q: (k, m) for k, (q, m) in bb.left.items()}
        ri = {q: (k, m) for k, (q, m) in bb.right.items()}
        inverse.append((li, ri))
    tasks = []
    for k, pair in enumerate(table.pairs):
        if pair.q_right in op.diagonal_R:
            tasks.append(Task("R", k, k, right=_kernel(op.diagonal_R[pair.q_right], dense_threshold)))
        if pair.q_left in op.diagonal_L:
            tasks.append(Task("L", k, k, left=_kernel(op.diagonal_L[pair.q_left], dense_threshold),
                              transposes=[(pair.d_right, pair.d_left), (pair.d_left, pair.d_right)]))
        for m, (li, ri) in enumerate(inverse):
            if pair.q_left not in li or pair.q_right not in ri:
                continue
            kl, lmat = li[pair.q_left]
            kr, rmat = ri[pair.q_right]
            j = index.get((kl, kr))
            if j is None:
                continue
            src = table.pairs[j]
            tasks.append(Task("B", k, j, left=_kernel(lmat, dense_threshold), right=_kernel(rmat, dense_threshold),
                              coefficient=op.boundary[m].coefficient, m=m,
                              transposes=[(pair.d_right, src.d_left), (pair.d_left, pair.d_right)]))
    return ApplyPlan(tasks, len(table))


class BlockHamiltonian:
    """Applies a :class:`BlockOperator` to states distributed over ``comm``."""

    def __init__(self, op: BlockOperator, layout: DistributionLayout, comm: SimComm | None = None,
                 dense_threshold: float = DENSE_THRESHOLD):
        if layout.counts.shape[0] != len(op.table):
            raise StructuralError("layout does not match the operator's sector table")
        self.op = op
        self.table = op.table
        self.layout = layout
        self.comm = comm or SimComm(layout.P)
        if self.comm.P != layout.P:
            raise StructuralError(f"communicator has {self.comm.P} ranks, layout {layout.P}")
        self.plan = build_plan(op, dense_threshold)

    @property
    def dimension(self) -> int:
        return self.table.dimension

    def apply(self, psi: BlockWavefunction) -> BlockWavefunction:
        if psi.table.pairs != self.table.pairs or psi.layout != self.layout:
            raise StructuralError("state does not match the operator's table and layout")
        dtype = np.result_type(psi.dtype, np.float64)
        out = BlockWavefunction(self.table, self.layout, dtype=dtype)
        comm = self.comm
        for task in self.plan.tasks:
            if task.kind == "R":
                self._right(task, psi, out)
            elif task.kind == "L":
                self._left(task, psi, out)
            else:
                self._boundary(task, psi, out)
        comm.barrier()
        return out

    __call__ = apply

    def _right(self, task, psi, out):
        k = task.dest

        def work(p, blk):
            out.block(p, k)[...] += task.right @ blk
            return product_flops(task.right, blk.shape[1])

        flops = self.comm.map(work, psi.local_blocks(k))
        self.comm.add_flops("diagonal_R", flops)

    def _left(self, task, psi, out):
        k = task.dest
        pair = self.table.pairs[k]
        comm = self.comm
        xt = comm.parallel_transpose(psi.local_blocks(k), pair.d_right, pair.d_left, phase="diagonal_L")
        y = comm.map(lambda p, x: task.left @ x, xt)
        comm.add_flops("diagonal_L", [product_flops(task.left, x.shape[1]) for x in xt])
        back = comm.parallel_transpose(y, pair.d_left, pair.d_right, phase="diagonal_L")

        def acc(p, b):
            out.block(p, k)[...] += b

        comm.map(acc, back)

    def _boundary(self, task, psi, out):
        k, j = task.dest, task.source
        dst, src = self.table.pairs[k], self.table.pairs[j]
        comm = self.comm
        c = comm.map(lambda p, blk: task.coefficient * (task.right @ blk), psi.local_blocks(j))
        flops = [product_flops(task.right, blk.shape[1]) for blk in psi.local_blocks(j)]
        ct = comm.parallel_transpose(c, dst.d_right, src.d_left, phase="boundary")
        y = comm.map(lambda p, x: task.left @ x, ct)
        flops = np.add(flops, [product_flops(task.left, x.shape[1]) for x in ct])
        comm.add_flops("boundary", flops)
        back = comm.parallel_transpose(y, dst.d_left, dst.d_right, phase="boundary")

        def acc(p, b):
            out.block(p, k)[...] += b

        comm.map(acc, back)


def apply_right_diagonal(H: BlockHamiltonian, psi, out=None):
    """Accumulate ``(1 (x) H_R) psi`` into ``out`` (a fresh zero state if omitted)."""
    return _apply_kind(H, psi, out, "R")


def apply_left_diagonal(H: BlockHamiltonian, psi, out=None):
    return _apply_kind(H, psi, out, "L")


def apply_boundary(H: BlockHamiltonian, psi, out=None, m: int | None = None):
    return _apply_kind(H, psi, out, "B", m)


def _apply_kind(H, psi, out, kind, m=None):
    if out is None:
        out = BlockWavefunction(H.table, H.layout, dtype=np.result_type(psi.dtype, np.float64))
    check_compatible(psi, out)
    fn = {"R": H._right, "L": H._left, "B": H._boundary}[kind]
    for task in H.plan.tasks:
        if task.kind == kind and (m is None or task.m == m):
            fn(task, psi, out)
    return out


def apply_hamiltonian(H: BlockHamiltonian, psi: BlockWavefunction) -> BlockWavefunction:
    return H.apply(psi)


def plan_json(H: BlockHamiltonian) -> str:
    return json.dumps(H.plan.dump(H.table, H.layout.P), indent=2, sort_keys=True)
