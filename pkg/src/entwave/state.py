"""Block wavefunction distributed by columns over simulated ranks.

Each sector pair ``q`` carries a ``d_R x d_L`` matrix ``Psi^q`` (rows: right
basis states, columns: left basis states). The columns of every block are
split over the ranks with :func:`entwave.transport.balanced_counts`. The
gathered vector stacks the blocks in pair order, each block column by column,
so entry ``(r, l)`` of pair ``q`` sits at ``offset_q + l * d_R + r``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import OracleCapExceeded, StructuralError
from .symmetry import SectorPair, SectorPairTable
from .transport import SimComm, balanced_counts

DEFAULT_ORACLE_CAP = 10**6
MAGIC = b"ENTWAVE1"


@dataclass(frozen=True)
class DistributionLayout:
    """Column ownership of every sector-pair block over ``P`` ranks."""

    P: int
    counts: np.ndarray  # (npairs, P) columns owned
    starts: np.ndarray  # (npairs, P) first owned column

    @property
    def theta_max(self) -> np.ndarray:
        """Padded per-rank column count of each pair."""
        return self.counts.max(axis=1) if self.counts.size else np.zeros(0, dtype=np.int64)

    def __eq__(self, other):
        return (isinstance(other, DistributionLayout) and self.P == other.P
                and np.array_equal(self.counts, other.counts))

    def __hash__(self):
        return hash((self.P, self.counts.tobytes()))


def make_layout(table: SectorPairTable, P: int) -> DistributionLayout:
    if P < 1:
        raise StructuralError(f"rank count must be >= 1, got {P}")
    counts = np.array([balanced_counts(p.d_left, P) for p in table.pairs], dtype=np.int64).reshape(len(table), P)
    starts = np.zeros_like(counts)
    if counts.size:
        starts[:, 1:] = np.cumsum(counts, axis=1)[:, :-1]
    return DistributionLayout(P, counts, starts)


class BlockWavefunction:
    """Sector-pair blocks; rank ``p`` stores its columns in one flat buffer."""

    def __init__(self, table: SectorPairTable, layout: DistributionLayout, buffers=None, dtype=np.float64):
        if layout.counts.shape[0] != len(table):
            raise StructuralError("layout does not match the sector table")
        self.table = table
        self.layout = layout
        self.dtype = np.dtype(dtype)
        d_right = np.array([p.d_right for p in table.pairs], dtype=np.int64)
        sizes = layout.counts * d_right[:, None]
        self._offsets = np.zeros((len(table) + 1, layout.P), dtype=np.int64)
        self._offsets[1:] = np.cumsum(sizes, axis=0)
        if buffers is None:
            buffers = [np.zeros(self._offsets[-1, p], dtype=self.dtype) for p in range(layout.P)]
        else:
            buffers = list(buffers)
            for p, b in enumerate(buffers):
                if b.shape != (self._offsets[-1, p],):
                    raise StructuralError(f"rank {p} buffer has shape {b.shape}, expected ({self._offsets[-1, p]},)")
            self.dtype = np.result_type(*[b.dtype for b in buffers]) if buffers else self.dtype
        self.buffers = buffers

    @property
    def P(self) -> int:
        return self.layout.P

    def block(self, rank: int, k: int) -> np.ndarray:
        """Writable view of rank ``rank``'s columns of pair ``k``, shape ``(d_R, n)``."""
        lo, hi = self._offsets[k, rank], self._offsets[k + 1, rank]
        return self.buffers[rank][lo:hi].reshape((self.table.pairs[k].d_right, self.layout.counts[k, rank]),
                                                 order="F")

    def local_blocks(self, k: int) -> list:
        return [self.block(p, k) for p in range(self.P)]

    def zeros_like(self, dtype=None) -> "BlockWavefunction":
        return BlockWavefunction(self.table, self.layout, dtype=dtype or self.dtype)

    def copy(self) -> "BlockWavefunction":
        return BlockWavefunction(self.table, self.layout, [b.copy() for b in self.buffers])

    def _column_order(self) -> np.ndarray:
        # position in the global (pair, column) order of each rank-major column
        n = self.layout.counts
        pair_start = np.concatenate([[0], np.cumsum(n.sum(axis=1))])
        order = []
        for p in range(self.P):
            for k in range(len(self.table)):
                first = pair_start[k] + self.layout.starts[k, p]
                order.extend(range(first, first + n[k, p]))
        return np.array(order, dtype=np.int64)

    def column_partials(self, other: "BlockWavefunction") -> list:
        """Per-rank arrays of ``<self_col|other_col>`` for every owned column."""
        check_compatible(self, other)
        out = []
        for p in range(self.P):
            prod = np.conj(self.buffers[p]) * other.buffers[p]
            starts = []
            for k, pair in enumerate(self.table.pairs):
                n = self.layout.counts[k, p]
                starts.extend(self._offsets[k, p] + pair.d_right * np.arange(n))
            out.append(np.add.reduceat(prod, starts) if starts else np.zeros(0, dtype=prod.dtype))
        return out


def check_compatible(a: BlockWavefunction, b: BlockWavefunction):
    if a.table.pairs != b.table.pairs or a.table.target_q != b.table.target_q:
        raise StructuralError("states live on different sector tables")
    if a.layout != b.layout:
        raise StructuralError("states have different distribution layouts")


def dot(a: BlockWavefunction, b: BlockWavefunction, comm: SimComm | None = None):
    """Global ``<a|b>``; bitwise identical for any rank count.

    Column partials are gathered in global column order and summed there, so
    the reduction order never depends on how columns are spread over ranks.
    """
    partials = a.column_partials(b)
    if comm is None:
        comm = SimComm(a.P)
    full = comm.allgather(partials)[0]
    order = a._column_order()
    glob = np.empty_like(full)
    glob[order] = full
    s = glob.sum() if glob.size else glob.dtype.type(0)
    return s.real if not np.iscomplexobj(s) else s


def norm(a: BlockWavefunction, comm: SimComm | None = None) -> float:
    return float(np.sqrt(np.real(dot(a, a, comm))))


def axpy(alpha, x: BlockWavefunction, y: BlockWavefunction) -> BlockWavefunction:
    """Return ``alpha * x + y``."""
    check_compatible(x, y)
    return BlockWavefunction(x.table, x.layout, [alpha * bx + by for bx, by in zip(x.buffers, y.buffers)])


def scale(alpha, x: BlockWavefunction) -> BlockWavefunction:
    return BlockWavefunction(x.table, x.layout, [alpha * b for b in x.buffers])


def normalize(x: BlockWavefunction, comm: SimComm | None = None) -> BlockWavefunction:
    n = norm(x, comm)
    if n == 0:
        raise StructuralError("cannot normalize the zero state")
    return scale(1.0 / n, x)


def scatter(vec, table: SectorPairTable, layout: DistributionLayout) -> BlockWavefunction:
    """Distribute a gathered coefficient vector according to ``layout``."""
    vec = np.asarray(vec)
    if vec.shape != (table.dimension,):
        raise StructuralError(f"vector of shape {vec.shape} does not match sector dimension {table.dimension}")
    psi = BlockWavefunction(table, layout, dtype=vec.dtype)
    off = table.offsets()
    for k, pair in enumerate(table.pairs):
        full = vec[off[k]:off[k + 1]].reshape((pair.d_right, pair.d_left), order="F")
        for p in range(layout.P):
            s, n = layout.starts[k, p], layout.counts[k, p]
            psi.block(p, k)[...] = full[:, s:s + n]
    return psi


def gather_block(psi: BlockWavefunction, k: int) -> np.ndarray:
    """Full ``d_R x d_L`` matrix of pair ``k``."""
    pair = psi.table.pairs[k]
    out = np.zeros((pair.d_right, pair.d_left), dtype=psi.dtype, order="F")
    for p in range(psi.P):
        s, n = psi.layout.starts[k, p], psi.layout.counts[k, p]
        out[:, s:s + n] = psi.block(p, k)
    return out


def gather_full(psi: BlockWavefunction, cap: int = DEFAULT_ORACLE_CAP) -> np.ndarray:
    if psi.table.dimension > cap:
        raise OracleCapExceeded(psi.table.dimension, cap)
    parts = [gather_block(psi, k).ravel(order="F") for k in range(len(psi.table))]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=psi.dtype)


def random_state(table: SectorPairTable, layout: DistributionLayout, seed, dtype=np.float64) -> BlockWavefunction:
    """Seeded uniform random state, normalized; independent of the rank count."""
    rng = np.random.default_rng(seed)
    vec = rng.uniform(-1.0, 1.0, table.dimension)
    if np.issubdtype(np.dtype(dtype), np.complexfloating):
        vec = vec + 1j * rng.uniform(-1.0, 1.0, table.dimension)
    return normalize(scatter(vec, table, layout))


def redistribute(psi: BlockWavefunction, layout: DistributionLayout) -> BlockWavefunction:
    return scatter(gather_full(psi, cap=np.iinfo(np.int64).max), psi.table, layout)


# State container ---------------------------------------------------------------

def save_state(path, psi: BlockWavefunction, model_hash: str = "", config_hash: str = "") -> None:
    """Write ``psi`` to a self-describing binary file (layout in README)."""
    header = {
        "format_version": 1,
        "model_hash": model_hash,
        "config_hash": config_hash,
        "dtype": "complex128" if np.iscomplexobj(np.zeros(0, psi.dtype)) else "float64",
        "P": psi.P,
        "table": psi.table.describe(),
        "layout": psi.layout.counts.tolist(),
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    target = np.dtype("<c16") if header["dtype"] == "complex128" else np.dtype("<f8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(hb)))
        f.write(hb)
        for k in range(len(psi.table)):
            for p in range(psi.P):
                f.write(np.asarray(psi.block(p, k), dtype=target).tobytes(order="F"))


def load_state(path):
    """Read a state file; returns ``(psi, header)``.

    The returned table carries pair labels and dimensions but no partition bases.
    """
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise StructuralError(f"{path} is not a state file")
        (n,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(n).decode())
        payload = f.read()
    t = header["table"]
    pairs = tuple(SectorPair(tuple(ql), tuple(qr), dl, dr) for ql, qr, dl, dr in t["pairs"])
    table = SectorPairTable(tuple(t["target_q"]), pairs, {}, {})
    counts = np.array(header["layout"], dtype=np.int64).reshape(len(pairs), header["P"])
    layout = make_layout(table, header["P"])
    if not np.array_equal(layout.counts, counts):
        raise StructuralError("stored layout is not a balanced column split")
    src = np.dtype("<c16") if header["dtype"] == "complex128" else np.dtype("<f8")
    data = np.frombuffer(payload, dtype=src)
    psi = BlockWavefunction(table, layout, dtype=src.newbyteorder("="))
    pos = 0
    for k, pair in enumerate(pairs):
        for p in range(layout.P):
            size = pair.d_right * counts[k, p]
            psi.block(p, k)[...] = data[pos:pos + size].reshape((pair.d_right, counts[k, p]), order="F")
            pos += size
    if pos != data.size:
        raise StructuralError("state file payload has the wrong length")
    return psi, header


def model_hash(description: dict) -> str:
    return hashlib.sha256(json.dumps(description, sort_keys=True).encode()).hexdigest()[:16]
