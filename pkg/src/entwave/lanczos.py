"""Lanczos ground-state solver with full reorthogonalization."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .exceptions import ConvergenceError, StructuralError
from .state import BlockWavefunction, axpy, dot, norm, random_state, scale

DEGENERACY_GAP = 1e-10


@dataclass(frozen=True)
class LanczosConfig:
    max_iterations: int = 500
    tolerance: float = 1e-12
    seed: int = 1234
    residual_tolerance: float = 1e-8

    def __post_init__(self):
        if self.tolerance <= 0:
            raise StructuralError("tolerance must be positive")
        if self.max_iterations < 2:
            raise StructuralError("max_iterations must be at least 2")


@dataclass
class LanczosResult:
    energy: float
    state: BlockWavefunction
    iterations: int
    residual: float
    gap: float | None
    trace: list = field(default_factory=list)
    ritz_history: list = field(default_factory=list)
    basis: list | None = None  # Krylov vectors, only when requested

    @property
    def degenerate(self) -> bool:
        return self.gap is not None and self.gap < DEGENERACY_GAP

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "ritz_value", "residual_estimate"])
        for it, ritz, res in self.trace:
            w.writerow([it, repr(float(ritz)), repr(float(res))])
        return buf.getvalue()


def _ritz(alphas, betas):
    if len(alphas) == 1:
        return np.array(alphas), np.ones((1, 1))
    return eigh_tridiagonal(np.array(alphas), np.array(betas))


def lanczos_ground_state(H, table=None, layout=None, config: LanczosConfig | None = None,
                         start: BlockWavefunction | None = None, keep_basis: bool = False) -> LanczosResult:
    """Lowest eigenpair of the Hermitian operator ``H`` (a :class:`BlockHamiltonian`).

    Iterates until successive lowest Ritz values differ by less than
    ``config.tolerance`` and the true residual ``|H psi - E psi|`` is below
    ``residual_tolerance * max(1, |E|)``, or the Krylov space is exhausted.
    """
    config = config or LanczosConfig()
    table = H.table if table is None else table
    layout = H.layout if layout is None else layout
    if table.dimension == 0:
        raise StructuralError("cannot solve an empty sector")
    comm = getattr(H, "comm", None)
    v = start.copy() if start is not None else random_state(table, layout, config.seed)
    v = scale(1.0 / norm(v, comm), v)
    basis = [v]
    alphas, betas = [], []
    trace, history = [], []
    previous = None
    nmax = min(config.max_iterations, table.dimension)
    energy = residual = None
    for it in range(1, nmax + 1):
        w = H.apply(basis[-1])
        alphas.append(float(np.real(dot(basis[-1], w, comm))))
        for _ in range(2):
            for u in basis:
                w = axpy(-dot(u, w, comm), u, w)
        beta = norm(w, comm)
        theta, s = _ritz(alphas, betas)
        energy = float(theta[0])
        estimate = abs(beta * s[-1, 0])
        trace.append((it, energy, estimate))
        history.append(energy)
        exhausted = beta <= 1e-14 * max(1.0, abs(energy)) or it == table.dimension
        small_step = previous is not None and abs(energy - previous) < config.tolerance
        if exhausted or (small_step and estimate <= config.residual_tolerance * max(1.0, abs(energy))):
            psi, residual = _ground_vector(H, basis, s[:, 0], energy, comm)
            if exhausted or residual <= config.residual_tolerance * max(1.0, abs(energy)):
                gap = float(theta[1] - theta[0]) if len(theta) > 1 else None
                return LanczosResult(energy, psi, it, residual, gap, trace, history,
                                     basis if keep_basis else None)
        previous = energy
        if it < nmax:
            betas.append(beta)
            basis.append(scale(1.0 / beta, w))
    raise ConvergenceError(f"Lanczos did not converge in {nmax} iterations (last Ritz value {energy!r})",
                           last_value=energy, iterations=nmax)


def _ground_vector(H, basis, coeffs, energy, comm):
    psi = scale(coeffs[0], basis[0])
    for c, u in zip(coeffs[1:], basis[1:]):
        psi = axpy(c, u, psi)
    psi = scale(1.0 / norm(psi, comm), psi)
    r = axpy(-energy, psi, H.apply(psi))
    return psi, norm(r, comm)
