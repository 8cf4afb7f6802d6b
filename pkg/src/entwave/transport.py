"""Simulated message passing between ``P`` ranks.

Ranks are isolated: each rank's data lives in its own slot of a per-rank list
and crosses to another rank only through a collective of :class:`SimComm`,
which copies the payload (ownership moves to the receiver). Collectives are
bulk-synchronous. The schedule only changes the order in which rank-local work
runs, never the results.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import StructuralError

SCHEDULES = ("serial", "reversed", "threads")


def balanced_counts(n: int, P: int) -> np.ndarray:
    """Split ``n`` items over ``P`` ranks, remainder to the lowest ranks."""
    if P < 1:
        raise StructuralError(f"rank count must be >= 1, got {P}")
    base, extra = divmod(n, P)
    return np.array([base + (1 if p < extra else 0) for p in range(P)], dtype=np.int64)


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def padded_transpose_volume(nrows: int, ncols: int, P: int) -> int:
    """Elements moved off-rank by one padded transpose of an ``nrows x ncols`` block.

    Every rank ships ``P-1`` batches of ``ceil(ncols/P) * ceil(nrows/P)`` slots.
    """
    return P * (P - 1) * ceil_div(ncols, P) * ceil_div(nrows, P)


def real_transpose_volume(nrows: int, ncols: int, P: int) -> int:
    rc = balanced_counts(nrows, P)
    cc = balanced_counts(ncols, P)
    return int(nrows * ncols - np.dot(rc, cc))


@dataclass
class PhaseCounter:
    calls: int = 0
    elements_real: int = 0
    elements_padded: int = 0
    flops: int = 0


@dataclass
class MessageCounter:
    """Cumulative communication and flop counts, tagged by phase."""

    phases: dict = field(default_factory=dict)
    per_rank_sent: np.ndarray | None = None
    per_rank_flops: np.ndarray | None = None

    def phase(self, name: str) -> PhaseCounter:
        return self.phases.setdefault(name, PhaseCounter())

    def totals(self) -> PhaseCounter:
        t = PhaseCounter()
        for c in self.phases.values():
            t.calls += c.calls
            t.elements_real += c.elements_real
            t.elements_padded += c.elements_padded
            t.flops += c.flops
        return t

    def records(self) -> list:
        return [
            {"phase": name, "calls": c.calls, "elements_real": c.elements_real,
             "elements_padded": c.elements_padded, "flops": c.flops}
            for name, c in sorted(self.phases.items())
        ]

    def to_json(self) -> str:
        return json.dumps(self.records(), indent=2, sort_keys=True)


class SimComm:
    """Deterministic in-process communicator over ``P`` simulated ranks."""

    def __init__(self, P: int, schedule: str = "serial"):
        if P < 1:
            raise StructuralError(f"rank count must be >= 1, got {P}")
        if schedule not in SCHEDULES:
            raise StructuralError(f"unknown schedule {schedule!r}; expected one of {SCHEDULES}")
        self.P = P
        self.schedule = schedule
        self.counter = MessageCounter()
        self.reset_counters()

    def reset_counters(self):
        self.counter = MessageCounter(per_rank_sent=np.zeros(self.P, dtype=np.int64),
                                      per_rank_flops=np.zeros(self.P, dtype=np.int64))

    def counters_snapshot(self) -> MessageCounter:
        c = self.counter
        return MessageCounter(
            {k: PhaseCounter(**vars(v)) for k, v in c.phases.items()},
            c.per_rank_sent.copy(), c.per_rank_flops.copy(),
        )

    # rank-local work

    def map(self, fn, *per_rank_args):
        """Run ``fn(rank, *args[rank])`` on every rank; results indexed by rank."""
        for a in per_rank_args:
            if len(a) != self.P:
                raise StructuralError("per-rank argument list has the wrong length")
        ranks = range(self.P)
        if self.schedule == "threads" and self.P > 1:
            with ThreadPoolExecutor(max_workers=self.P) as ex:
                futures = {p: ex.submit(fn, p, *(a[p] for a in per_rank_args)) for p in ranks}
                return [futures[p].result() for p in ranks]
        order = reversed(ranks) if self.schedule == "reversed" else ranks
        out = [None] * self.P
        for p in order:
            out[p] = fn(p, *(a[p] for a in per_rank_args))
        return out

    def add_flops(self, phase: str, per_rank_flops):
        per_rank_flops = np.asarray(per_rank_flops, dtype=np.int64)
        self.counter.phase(phase).flops += int(per_rank_flops.sum())
        self.counter.per_rank_flops += per_rank_flops

    # collectives

    def barrier(self):
        pass

    def allreduce_sum(self, values, phase: str = "reduction"):
        """Sum per-rank values left to right in rank order; same result on every rank."""
        if len(values) != self.P:
            raise StructuralError("allreduce needs one value per rank")
        shapes = {np.shape(v) for v in values}
        if len(shapes) != 1:
            raise StructuralError(f"allreduce shape mismatch across ranks: {sorted(shapes)}")
        total = values[0]
        for v in values[1:]:
            total = total + v
        self._count_reduction(phase, int(np.size(values[0])))
        return [np.copy(total) if isinstance(total, np.ndarray) else total for _ in range(self.P)]

    def allgather(self, values, phase: str = "reduction"):
        """Concatenate per-rank 1-d arrays in rank order on every rank."""
        arrs = [np.atleast_1d(np.asarray(v)) for v in values]
        if len(arrs) != self.P:
            raise StructuralError("allgather needs one array per rank")
        full = np.concatenate(arrs) if arrs else np.empty(0)
        sizes = np.array([a.size for a in arrs], dtype=np.int64)
        c = self.counter.phase(phase)
        c.calls += 1
        sent = sizes * (self.P - 1)
        c.elements_real += int(sent.sum())
        c.elements_padded += int(sizes.max() * self.P * (self.P - 1)) if self.P > 1 else 0
        self.counter.per_rank_sent += sent
        return [full.copy() for _ in range(self.P)]

    def gather(self, values, root: int = 0, phase: str = "gather"):
        if len(values) != self.P:
            raise StructuralError("gather needs one value per rank")
        c = self.counter.phase(phase)
        c.calls += 1
        for p, v in enumerate(values):
            if p != root:
                n = int(np.size(v))
                c.elements_real += n
                c.elements_padded += n
                self.counter.per_rank_sent[p] += n
        return [np.copy(v) for v in values]

    def _count_reduction(self, phase, n):
        c = self.counter.phase(phase)
        c.calls += 1
        if self.P > 1:
            c.elements_real += 2 * n * (self.P - 1)
            c.elements_padded += 2 * n * (self.P - 1)
            self.counter.per_rank_sent += 2 * n

    def alltoallv(self, send, phase: str):
        """``send[p][m]`` goes from rank ``p`` to rank ``m``; returns ``recv[m][p]``.

        Self messages are copied locally and not counted.
        """
        P = self.P
        if len(send) != P or any(len(row) != P for row in send):
            raise StructuralError("alltoall needs a P x P batch matrix")
        recv = [[None] * P for _ in range(P)]
        sent = np.zeros(P, dtype=np.int64)
        for p in range(P):
            for m in range(P):
                recv[m][p] = np.array(send[p][m], copy=True)
                if p != m:
                    sent[p] += send[p][m].size
        c = self.counter.phase(phase)
        c.calls += 1
        c.elements_real += int(sent.sum())
        self.counter.per_rank_sent += sent
        return recv

    def parallel_transpose(self, local_blocks, nrows: int, ncols: int, phase: str = "transpose"):
        """Distributed transpose ``T*`` of an ``nrows x ncols`` matrix.

        ``local_blocks[p]`` holds rank ``p``'s columns (balanced split of
        ``ncols``), shape ``(nrows, n_p)``. The rows are cut into ``P``
        balanced batches; batch ``m`` of rank ``p`` is sent to rank ``m`` and
        placed there as batch ``p``. Afterwards rank ``m`` holds its columns of
        the ``ncols x nrows`` transpose, again with a balanced column split.
        Applying it again with ``(ncols, nrows)`` restores the input exactly.
        """
        P = self.P
        cc = balanced_counts(ncols, P)
        rc = balanced_counts(nrows, P)
        for p, blk in enumerate(local_blocks):
            if blk.shape != (nrows, cc[p]):
                raise StructuralError(
                    f"rank {p} block shape {blk.shape} does not match geometry ({nrows}, {cc[p]})")
        rstart = np.concatenate([[0], np.cumsum(rc)])
        send = [[local_blocks[p][rstart[m]:rstart[m + 1], :] for m in range(P)] for p in range(P)]
        recv = self.alltoallv(send, phase)
        self.counter.phase(phase).elements_padded += padded_transpose_volume(nrows, ncols, P)

        def assemble(m, batches):
            if not batches:
                return np.zeros((ncols, rc[m]))
            return np.asfortranarray(np.concatenate([b.T for b in batches], axis=0))

        return self.map(assemble, recv)
