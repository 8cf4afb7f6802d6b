"""Entanglement spectrum, sector weights and process-resolved IPR of a block state.

The singular values of each block are the Schmidt coefficients of that
symmetry sector, so ``rho_L`` has eigenvalues ``sigma**2`` and the entanglement
Hamiltonian ``-ln rho_L`` has levels ``xi = -2 ln sigma``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .exceptions import StructuralError
from .state import BlockWavefunction, gather_block, norm
from .transport import SimComm, balanced_counts

SCHMIDT_CUTOFF = 1e-14


@dataclass
class EntanglementReport:
    labels: list  # (q_l, q_r) per pair
    sigma: list  # descending singular values per pair
    column_weights: list  # |column|^2 of each block, per pair
    cutoff: float = SCHMIDT_CUTOFF

    @property
    def xi(self) -> list:
        with np.errstate(divide="ignore"):
            return [-2.0 * np.log(s) for s in self.sigma]

    @property
    def weights(self) -> np.ndarray:
        """``W_q``: share of the Schmidt weight in each sector pair."""
        w = np.array([np.sum(s**2) for s in self.sigma])
        return w / w.sum()

    @property
    def schmidt_ranks(self) -> np.ndarray:
        """``chi_q``: Schmidt values with ``sigma**2`` above the cutoff."""
        return np.array([int(np.count_nonzero(s**2 > self.cutoff)) for s in self.sigma], dtype=np.int64)

    @property
    def entropy(self) -> float:
        lam = np.concatenate(self.sigma) ** 2 if self.sigma else np.zeros(0)
        lam = lam[lam > 0]
        return float(-np.sum(lam * np.log(lam)))

    def probability_sum(self) -> float:
        """``sum exp(-xi)`` over all levels; 1 for a normalized state."""
        return float(sum(np.sum(np.exp(-x)) for x in self.xi))

    def labels_text(self) -> list:
        return [format_label(ql, qr) for ql, qr in self.labels]


def format_label(q_left, q_right) -> str:
    return ",".join(map(str, q_left)) + "|" + ",".join(map(str, q_right))


def schmidt_decompose(psi: BlockWavefunction, cutoff: float = SCHMIDT_CUTOFF, comm: SimComm | None = None,
                      norm_tolerance: float = 1e-10) -> EntanglementReport:
    """Symmetry-resolved Schmidt decomposition from the gathered blocks."""
    n = norm(psi, comm)
    if abs(n - 1.0) > norm_tolerance:
        raise StructuralError(f"state is not normalized (norm {n!r})")
    sigma, colw = [], []
    for k, pair in enumerate(psi.table.pairs):
        if comm is not None:
            comm.gather(psi.local_blocks(k), phase="analysis")
        block = gather_block(psi, k)
        sigma.append(np.linalg.svd(block, compute_uv=False))
        colw.append(np.sum(np.abs(block) ** 2, axis=0))
    labels = [(p.q_left, p.q_right) for p in psi.table.pairs]
    return EntanglementReport(labels, sigma, colw, cutoff)


def truncated_ranks(report: EntanglementReport, max_chi: int | None = None, cutoff: float | None = None) -> np.ndarray:
    """Per-pair kept Schmidt ranks under a global truncation.

    Keeps Schmidt values with ``sigma**2 > cutoff`` and, if ``max_chi`` is
    given, only the ``max_chi`` largest of them across all sectors (ties are
    broken by pair order, then level index).
    """
    cutoff = report.cutoff if cutoff is None else cutoff
    entries = []
    for k, s in enumerate(report.sigma):
        for i, v in enumerate(s):
            if v**2 > cutoff:
                entries.append((-v, k, i))
    entries.sort()
    if max_chi is not None:
        entries = entries[:max_chi]
    chi = np.zeros(len(report.sigma), dtype=np.int64)
    for _, k, _ in entries:
        chi[k] += 1
    return chi


def assign_sectors(chi, P: int) -> np.ndarray:
    """Contiguous sector-to-process map balanced by cumulative ``chi``.

    Sector ``q`` goes to ``floor(P * midpoint_q / total)`` where ``midpoint_q``
    is the centre of its slice of the cumulative ``chi``.
    """
    if P < 1:
        raise StructuralError(f"rank count must be >= 1, got {P}")
    chi = np.asarray(chi, dtype=float)
    total = chi.sum()
    if total == 0:
        return np.zeros(len(chi), dtype=np.int64)
    mid = np.cumsum(chi) - chi / 2
    return np.minimum((P * mid / total).astype(np.int64), P - 1)


@dataclass
class IPRResult:
    mode: str
    P: int
    sector_weights: np.ndarray
    process_ipr: np.ndarray  # W_P for each process
    assignment: np.ndarray | None = None

    @property
    def total(self) -> float:
        return float(self.process_ipr.sum())


def sector_weights_and_ipr(report: EntanglementReport, P: int, mode: str = "sector") -> IPRResult:
    """``W_P = sum_{q in Q_p} W_q**2`` for every process ``p``.

    ``mode="sector"`` hands whole sectors to processes (:func:`assign_sectors`
    on ``chi_q``). ``mode="column"`` splits each sector's weight over the
    processes owning its columns in the balanced column layout.
    """
    if P < 1:
        raise StructuralError(f"rank count must be >= 1, got {P}")
    W = report.weights
    total = sum(float(np.sum(c)) for c in report.column_weights)
    if mode == "sector":
        assign = assign_sectors(report.schmidt_ranks, P)
        wp = np.zeros(P)
        np.add.at(wp, assign, W**2)
        return IPRResult(mode, P, W, wp, assign)
    if mode == "column":
        wp = np.zeros(P)
        for cw in report.column_weights:
            counts = balanced_counts(len(cw), P)
            bounds = np.concatenate([[0], np.cumsum(counts)])
            for p in range(P):
                wp[p] += (np.sum(cw[bounds[p]:bounds[p + 1]]) / total) ** 2
        return IPRResult(mode, P, W, wp)
    raise StructuralError(f"unknown assignment mode {mode!r}")


def entanglement_spectrum_csv(report: EntanglementReport, header: str = "") -> str:
    buf = io.StringIO()
    if header:
        buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["q_index", "q_label", "i", "xi"])
    for k, (label, xi) in enumerate(zip(report.labels_text(), report.xi)):
        for i, x in enumerate(xi):
            w.writerow([k, label, i, repr(float(x))])
    return buf.getvalue()


def sector_weights_csv(report: EntanglementReport, header: str = "") -> str:
    buf = io.StringIO()
    if header:
        buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["q", "W_q", "chi_q"])
    for label, wq, chi in zip(report.labels_text(), report.weights, report.schmidt_ranks):
        w.writerow([label, repr(float(wq)), int(chi)])
    return buf.getvalue()
