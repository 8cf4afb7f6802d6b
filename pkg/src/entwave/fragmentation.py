"""Sector-size statistics, scaling fits and the communication/computation model.

Fit conventions:

* exponential decay ``chi_q = C exp(-alpha q)``, least squares on ``ln chi``;
* complementary CDF ``P(chi > x) ~ A x**-gamma`` on a log-log window;
* Amdahl ``T(P) = T1 ((1 - f) + f / P)`` and power law ``T(P) ~ P**-k``;
* ratio model ``R(chi) = a - b chi**c``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .exceptions import StructuralError
from .matvec import ApplyPlan
from .transport import padded_transpose_volume


def _series(y, name, minimum=3):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) < minimum:
        raise StructuralError(f"{name} needs at least {minimum} data points, got {np.size(y)}")
    return y


def _increasing(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(np.diff(x) <= 0):
        raise StructuralError(f"{name} must be strictly increasing")
    return x


@dataclass
class ExponentialFit:
    C: float
    alpha: float
    residual: float
    points: int


def fit_exponential(chi, q=None) -> ExponentialFit:
    """Fit ``chi_q = C exp(-alpha q)``; ``q`` defaults to ``0, 1, ...``.

    Non-positive entries are dropped before the log-domain fit.
    """
    chi = np.asarray(chi, dtype=float)
    q = np.arange(len(chi), dtype=float) if q is None else np.asarray(q, dtype=float)
    keep = chi > 0
    chi, q = _series(chi[keep], "exponential fit"), q[keep]
    if np.all(chi == chi[0]):
        return ExponentialFit(float(chi[0]), 0.0, 0.0, len(chi))
    A = np.column_stack([np.ones_like(q), -q])
    coef, *_ = np.linalg.lstsq(A, np.log(chi), rcond=None)
    res = float(np.linalg.norm(A @ coef - np.log(chi)))
    return ExponentialFit(float(np.exp(coef[0])), float(coef[1]), res, len(chi))


def rank_ordered(chi) -> np.ndarray:
    """Positive sector sizes sorted in decreasing order (the ``q`` axis of the decay fit)."""
    chi = np.asarray(chi)
    return np.sort(chi[chi > 0])[::-1]


def ccdf(values):
    """Empirical ``P(X > x)`` at the distinct sample values ``x``."""
    v = np.sort(np.asarray(values, dtype=float))
    x = np.unique(v)
    p = 1.0 - np.searchsorted(v, x, side="right") / len(v)
    return x, p


def default_ccdf_window(values) -> tuple:
    """Two decades centred (geometrically) on the span of positive values."""
    v = np.asarray(values, dtype=float)
    v = v[v > 0]
    if v.size == 0:
        raise StructuralError("no positive values for a CCDF window")
    centre = np.sqrt(v.min() * v.max())
    return (centre / 10.0, centre * 10.0)


@dataclass
class PowerLawFit:
    A: float
    gamma: float
    residual: float
    window: tuple
    points: int


def fit_ccdf_power_law(values, window=None) -> PowerLawFit:
    """Fit ``P(X > x) = A x**-gamma`` on CCDF points with ``x`` inside ``window``."""
    values = _series(values, "CCDF fit")
    window = default_ccdf_window(values) if window is None else tuple(float(w) for w in window)
    x, p = ccdf(values)
    keep = (x >= window[0]) & (x <= window[1]) & (p > 0) & (x > 0)
    if keep.sum() < 2:
        raise StructuralError(f"CCDF window {window} holds fewer than 2 usable points")
    lx, lp = np.log(x[keep]), np.log(p[keep])
    A = np.column_stack([np.ones_like(lx), -lx])
    coef, *_ = np.linalg.lstsq(A, lp, rcond=None)
    res = float(np.linalg.norm(A @ coef - lp))
    return PowerLawFit(float(np.exp(coef[0])), float(coef[1]), res, window, int(keep.sum()))


def compute_n_eff(chi) -> float:
    """Inverse participation ratio of ``w_q = chi_q / sum chi``."""
    chi = np.asarray(chi, dtype=float)
    if chi.sum() <= 0:
        raise StructuralError("sector sizes sum to zero")
    w = chi / chi.sum()
    return float(1.0 / np.sum(w**2))


def compute_q_star(C: float, alpha: float, Pi: float, m: float = 1.0) -> float:
    """Crossover index where ``C exp(-alpha q)`` falls to ``Pi**m``.

    With ``C = chi**m`` this is ``(m / alpha) ln(chi / Pi)``.
    """
    if alpha <= 0 or Pi <= 0 or C <= 0:
        raise StructuralError("q* needs positive C, alpha and Pi")
    return float((m / alpha) * np.log(C ** (1.0 / m) / Pi))


@dataclass
class SpeedupFit:
    f: float
    T1: float
    amdahl_residual: float
    k: float
    power_prefactor: float
    power_residual: float


def fit_speedup(P, T) -> SpeedupFit:
    """Amdahl fraction ``f`` and power exponent ``k`` from run times ``T(P)``."""
    P = _increasing(_series(P, "speedup fit"), "process counts")
    T = _series(T, "speedup fit")
    A = np.column_stack([np.ones_like(P), 1.0 / P])
    (serial, parallel), *_ = np.linalg.lstsq(A, T, rcond=None)
    amdahl_res = float(np.linalg.norm(A @ [serial, parallel] - T))
    T1 = serial + parallel
    B = np.column_stack([np.ones_like(P), -np.log(P)])
    coef, *_ = np.linalg.lstsq(B, np.log(T), rcond=None)
    power_res = float(np.linalg.norm(B @ coef - np.log(T)))
    return SpeedupFit(float(parallel / T1), float(T1), amdahl_res, float(coef[1]), float(np.exp(coef[0])), power_res)


@dataclass
class RatioFit:
    a: float
    b: float
    c: float
    residual: float


def _ab_for(c, chi, R):
    A = np.column_stack([np.ones_like(chi), -chi**c])
    coef, *_ = np.linalg.lstsq(A, R, rcond=None)
    return coef, A @ coef - R


def fit_ratio_model(chi, R, c_grid=None) -> RatioFit:
    """Fit ``R = a - b chi**c``.

    ``c`` is seeded on a grid with ``(a, b)`` solved linearly at each point,
    refined by a bounded scalar search, then polished jointly.
    """
    chi = _increasing(_series(chi, "ratio fit"), "chi")
    R = _series(R, "ratio fit")
    if len(chi) != len(R):
        raise StructuralError("chi and R differ in length")
    grid = np.linspace(-3.0, 3.0, 601) if c_grid is None else np.asarray(c_grid, dtype=float)
    grid = grid[grid != 0]
    costs = [np.sum(_ab_for(c, chi, R)[1] ** 2) for c in grid]
    i = int(np.argmin(costs))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    c0 = minimize_scalar(lambda c: np.sum(_ab_for(c, chi, R)[1] ** 2), bounds=(lo, hi), method="bounded",
                         options={"xatol": 1e-12}).x
    (a0, b0), _ = _ab_for(c0, chi, R)
    scale = float(np.max(np.abs(R))) or 1.0

    def resid(x):
        a, b, c = x
        return (a - b * chi**c - R) / scale

    sol = least_squares(resid, [a0, b0, c0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    a, b, c = sol.x
    return RatioFit(float(a), float(b), float(c), float(np.linalg.norm(a - b * chi**c - R)))


def fractal_exponent(c: float, m: float = 1.0):
    """Invert ``c = 1 - D + m (D - 3)``; ``None`` at ``m = 1`` where ``c`` no longer depends on ``D``."""
    if abs(m - 1.0) < 1e-12:
        return None
    return float((c - 1.0 + 3.0 * m) / (m - 1.0))


@dataclass
class FragmentationReport:
    """Sector-size statistics of one state; fits that cannot run are ``None`` with a note."""

    chi: list
    exponential: ExponentialFit | None
    ccdf_x: list
    ccdf_p: list
    power_law: PowerLawFit | None
    n_eff: float
    q_star: float | None
    Pi: float | None
    m: float
    notes: list

    def to_dict(self) -> dict:
        return asdict(self)


def fragmentation_report(chi, window=None, Pi=None, m: float = 1.0) -> FragmentationReport:
    """Exponential decay (rank-ordered), CCDF power law, ``N_eff`` and optionally ``q*``."""
    chi = np.asarray(chi, dtype=np.int64)
    ranked = rank_ordered(chi)
    notes = []
    exp_fit = law = q_star = None
    try:
        exp_fit = fit_exponential(ranked)
    except StructuralError as err:
        notes.append(f"exponential fit skipped: {err}")
    x, p = ccdf(ranked) if ranked.size else (np.zeros(0), np.zeros(0))
    try:
        law = fit_ccdf_power_law(ranked, window)
    except StructuralError as err:
        notes.append(f"power-law fit skipped: {err}")
    if Pi is not None and exp_fit is not None:
        try:
            q_star = compute_q_star(exp_fit.C, exp_fit.alpha, Pi, m)
        except StructuralError as err:
            notes.append(f"q* skipped: {err}")
    return FragmentationReport([int(c) for c in chi], exp_fit, x.tolist(), p.tolist(), law,
                               compute_n_eff(chi), q_star, Pi, m, notes)


# Cost model ----------------------------------------------------------------------

@dataclass
class CostPoint:
    chi: float
    elements: int
    flops: int


def communication_ratio(elements, flops, tau: float = 1.0, phi: float = 1.0) -> float:
    """``R = tau * elements / (phi * flops)``."""
    if flops <= 0:
        raise StructuralError("flop count must be positive")
    return float(tau * elements / (phi * flops))


@dataclass
class CostModelReport:
    chi: list
    R: list
    tau: float
    phi: float
    m: float
    fit: RatioFit | None
    D: float | None
    notes: list

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def cost_model_report(points, tau: float = 1.0, phi: float = 1.0, m: float = 1.0) -> CostModelReport:
    """``R(chi)`` over experiment sizes, the ratio-model fit and the implied ``D``."""
    points = sorted(points, key=lambda p: p.chi)
    if len(points) < 2:
        raise StructuralError("cost model needs counters from at least 2 experiment sizes")
    chi = [float(p.chi) for p in points]
    R = [communication_ratio(p.elements, p.flops, tau, phi) for p in points]
    notes, fit, D = [], None, None
    if len(points) >= 3 and np.all(np.diff(chi) > 0):
        fit = fit_ratio_model(chi, R)
        D = fractal_exponent(fit.c, m)
        if D is None:
            notes.append("D not identifiable at m = 1")
    else:
        notes.append("ratio-model fit skipped: needs 3 distinct sizes")
    return CostModelReport(chi, R, tau, phi, m, fit, D, notes)


def modeled_census(plan: ApplyPlan, chi_by_pair, P: int) -> CostPoint:
    """Elements and flops of one matvec with every pair block truncated to ``chi_q x chi_q``.

    Keeps the task structure of ``plan`` but treats all operator blocks as
    dense ``chi x chi`` matrices, as for renormalized block operators. Tasks
    touching an empty pair are dropped.
    """
    chi = np.asarray(chi_by_pair, dtype=np.int64)
    elements = flops = 0
    for t in plan.tasks:
        d, s = int(chi[t.dest]), int(chi[t.source])
        if d == 0 or s == 0:
            continue
        if t.kind in ("R", "L"):
            flops += 2 * d**3
            if t.kind == "L":
                elements += 2 * padded_transpose_volume(d, d, P)
        else:
            flops += 2 * d * s * s + 2 * d * s * d
            elements += padded_transpose_volume(d, s, P) + padded_transpose_volume(d, d, P)
    return CostPoint(float(chi.sum()), int(elements), int(flops))


def modeled_time(per_rank_flops, per_rank_elements, messages_per_rank=0, tau=1.0, phi=1.0, latency=0.0) -> float:
    """Bulk-synchronous time: the slowest rank's flops, traffic and message latency."""
    return float(phi * np.max(per_rank_flops) + tau * np.max(per_rank_elements) + latency * messages_per_rank)
