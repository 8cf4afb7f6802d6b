"""Command-line entry point: ``entwave {solve,oracle,sweep,analyze} CONFIG``.

Exit status is 0 on success, 1 when a computation fails and 2 for
configuration errors. Results land in the configured output directory, which
the ``ENTWAVE_OUTPUT_DIR`` environment variable overrides.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .entanglement import (
    entanglement_spectrum_csv,
    schmidt_decompose,
    sector_weights_and_ipr,
    sector_weights_csv,
    truncated_ranks,
)
from .exceptions import ConvergenceError, OracleCapExceeded, StructuralError
from .fragmentation import (
    communication_ratio,
    cost_model_report,
    CostPoint,
    fit_speedup,
    fragmentation_report,
    modeled_census,
    modeled_time,
)
from .lanczos import LanczosConfig, lanczos_ground_state
from .matvec import BlockHamiltonian, plan_json
from .models import BoundaryBlocks, BlockOperator
from .oracle import dense_sector_hamiltonian
from .pipeline import System, build_system
from .state import gather_full, load_state, save_state, scatter
from .transport import SimComm

COMPUTE_ERRORS = (ConvergenceError, OracleCapExceeded, StructuralError, np.linalg.LinAlgError, MemoryError)


def _plain(x):
    """Recursively convert numpy scalars/arrays and tuples into JSON-ready values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


class Outputs:
    """Writes result files, stamping each with the config hash."""

    def __init__(self, cfg: ExperimentConfig):
        self.dir = Path(cfg.output_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = cfg.hash
        self.write_text("resolved_config.ini", cfg.to_ini())

    def path(self, name) -> Path:
        return self.dir / name

    def write_text(self, name, text):
        with open(self.path(name), "w", newline="") as f:
            f.write(text)

    def json(self, name, payload):
        body = {"config_hash": self.hash, **_plain(payload)}
        self.write_text(name, json.dumps(body, indent=2, sort_keys=True) + "\n")

    def csv(self, name, text):
        self.write_text(name, f"# config_hash={self.hash}\n" + text)


def _system(cfg: ExperimentConfig, **overrides) -> System:
    spec = cfg.model_spec(**overrides)
    return build_system(spec, cfg.cut(spec), cfg.target)


def _solver(cfg: ExperimentConfig) -> LanczosConfig:
    return LanczosConfig(cfg.max_iterations, cfg.tolerance, cfg.seed, cfg.residual_tolerance)


def _ground_state(cfg, sysm, P):
    H = sysm.hamiltonian(P, cfg.schedule)
    return H, lanczos_ground_state(H, config=_solver(cfg))


def _analysis(cfg, out, sysm_hash, psi, P_list, extra=None):
    """Entanglement files and fits.json for a normalized state."""
    rep = schmidt_decompose(psi, cfg.schmidt_cutoff)
    out.csv("entanglement_spectrum.csv", entanglement_spectrum_csv(rep))
    out.csv("sector_weights.csv", sector_weights_csv(rep))
    frag = fragmentation_report(rep.schmidt_ranks, cfg.ccdf_window, cfg.Pi, cfg.m)
    ipr = {}
    for P in P_list:
        res = sector_weights_and_ipr(rep, P, cfg.ipr_mode)
        ipr[str(P)] = {"W_P": res.process_ipr, "sum": res.total,
                       "assignment": None if res.assignment is None else res.assignment}
    fits = {"model_hash": sysm_hash, "fragmentation": frag.to_dict(), "ipr_mode": cfg.ipr_mode, "ipr": ipr,
            "entropy": rep.entropy, "probability_sum": rep.probability_sum()}
    fits.update(extra or {})
    out.json("fits.json", fits)
    return rep, frag


def cmd_solve(cfg: ExperimentConfig) -> int:
    """Ground state, convergence trace, state file and entanglement report."""
    out = Outputs(cfg)
    sysm = _system(cfg)
    runs, counters, primary = [], {}, None
    for P in cfg.P:
        H, res = _ground_state(cfg, sysm, P)
        runs.append({"P": P, "energy": res.energy, "iterations": res.iterations, "residual": res.residual})
        counters[str(P)] = H.comm.counter.records()
        if primary is None:
            primary = (H, res)
    H, res = primary
    energies = [r["energy"] for r in runs]
    report = {
        "command": "solve",
        "model": sysm.spec.describe(),
        "model_hash": sysm.hash,
        "cut": {"kind": sysm.cut.kind, "left_sites": sysm.cut.left_sites, "right_sites": sysm.cut.right_sites},
        "target": sysm.table.target_q,
        "dimension": sysm.table.dimension,
        "pairs": len(sysm.table),
        "E0": res.energy,
        "iterations": res.iterations,
        "residual": res.residual,
        "gap": res.gap,
        "degenerate": res.degenerate,
        "runs": runs,
        "max_energy_spread": max(energies) - min(energies),
    }
    out.csv("trace.csv", res.trace_csv())
    save_state(out.path("state.bwf"), res.state, sysm.hash, out.hash)
    out.json("counters.json", {"P": cfg.P, "per_P": counters})
    out.json("plan.json", json.loads(plan_json(H)))
    if cfg.entanglement:
        rep, frag = _analysis(cfg, out, sysm.hash, res.state, cfg.P)
        report["entropy"] = rep.entropy
        report["n_eff"] = frag.n_eff
        if res.degenerate:
            report["notes"] = ["ground state degenerate: entanglement data depend on the chosen vector"]
    out.json("report.json", report)
    print(f"E0 = {res.energy!r} ({res.iterations} iterations, dimension {sysm.table.dimension}) -> {out.dir}")
    return 0


def corrupt_boundary(op: BlockOperator, m: int) -> BlockOperator:
    """Test hook: flip the sign of the first left block of boundary term ``m``."""
    if not 0 <= m < len(op.boundary):
        raise StructuralError(f"corrupt_boundary = {m}: operator has {len(op.boundary)} boundary terms")
    bb = op.boundary[m]
    first = next(iter(bb.left))
    left = dict(bb.left)
    q, mat = left[first]
    left[first] = (q, -mat)
    terms = list(op.boundary)
    terms[m] = BoundaryBlocks(bb.coefficient, left, bb.right, bb.label)
    return BlockOperator(op.table, op.diagonal_L, op.diagonal_R, terms)


def cmd_oracle(cfg: ExperimentConfig) -> int:
    """Compare distributed matvec and E0 with the dense oracle for every configured P."""
    out = Outputs(cfg)
    sysm = _system(cfg)
    try:
        Hd = dense_sector_hamiltonian(sysm.spec, sysm.cut, sysm.table, cfg.oracle_cap)
    except OracleCapExceeded as err:
        out.json("oracle.json", {"command": "oracle", "passed": False, "dimension": err.dimension,
                                 "cap": err.cap, "error": str(err)})
        print(f"refused: {err}", file=sys.stderr)
        return 1
    op = sysm.op if cfg.corrupt_boundary is None else corrupt_boundary(sysm.op, cfg.corrupt_boundary)
    exact = float(np.linalg.eigvalsh(Hd)[0])
    off = sysm.table.offsets()
    rng = np.random.default_rng(cfg.seed)
    vecs = rng.uniform(-1.0, 1.0, (cfg.oracle_states, sysm.table.dimension))
    tol = 1e-12
    results, bad_pairs = [], set()
    for P in cfg.P:
        H = BlockHamiltonian(op, sysm.layout(P), SimComm(P, cfg.schedule))
        dev = 0.0
        for v in vecs:
            diff = np.abs(gather_full(H.apply(scatter(v, sysm.table, H.layout))) - Hd @ v)
            dev = max(dev, float(diff.max(initial=0.0)))
            for k in range(len(sysm.table)):
                if diff[off[k]:off[k + 1]].max(initial=0.0) > tol:
                    bad_pairs.add(k)
        energy = lanczos_ground_state(H, config=_solver(cfg)).energy
        results.append({"P": P, "matvec_max_deviation": dev, "energy": energy,
                        "energy_deviation": abs(energy - exact)})
    passed = all(r["matvec_max_deviation"] <= tol and r["energy_deviation"] <= 1e-10 for r in results)
    failing = [{"pair": k, "q_left": sysm.table.pairs[k].q_left, "q_right": sysm.table.pairs[k].q_right}
               for k in sorted(bad_pairs)]
    out.json("oracle.json", {"command": "oracle", "model_hash": sysm.hash, "dimension": sysm.table.dimension,
                             "dense_E0": exact, "tolerance": tol, "passed": passed, "results": results,
                             "failing_pairs": failing})
    for r in results:
        print(f"P={r['P']}: matvec deviation {r['matvec_max_deviation']:.3e}, "
              f"E0 deviation {r['energy_deviation']:.3e}")
    if not passed:
        ids = ", ".join(str(f["pair"]) for f in failing) or "none (energy mismatch only)"
        print(f"FAIL: deviating sector pairs: {ids}", file=sys.stderr)
        return 1
    print("PASS")
    return 0


class _Sweep:
    """Per-point runners for the three sweep axes; the ground state is solved once and reused."""

    def __init__(self, cfg: ExperimentConfig, sysm: System):
        self.cfg = cfg
        self.sysm = sysm
        self._ground = None

    def ground(self):
        if self._ground is None:
            H, res = _ground_state(self.cfg, self.sysm, 1)
            self._ground = (H, res, schmidt_decompose(res.state, self.cfg.schmidt_cutoff))
        return self._ground

    def point_P(self, value):
        cfg, sysm = self.cfg, self.sysm
        P = int(value)
        _, res, _ = self.ground()
        H = sysm.hamiltonian(P, cfg.schedule)
        H.apply(scatter(gather_full(res.state), sysm.table, H.layout))
        c = H.comm.counter
        totals = c.totals()
        calls = sum(r["calls"] for r in c.records() if r["phase"] in ("diagonal_L", "boundary"))
        t = modeled_time(c.per_rank_flops, c.per_rank_sent, calls * (P - 1), cfg.tau, cfg.phi, cfg.latency)
        return {"P": P, "elements_real": totals.elements_real, "elements_padded": totals.elements_padded,
                "flops": totals.flops, "max_rank_flops": int(c.per_rank_flops.max()),
                "max_rank_elements": int(c.per_rank_sent.max()), "modeled_time": t,
                "R": communication_ratio(totals.elements_padded, totals.flops, cfg.tau, cfg.phi)}

    def point_chi(self, value):
        cfg = self.cfg
        P = max(cfg.P)
        H, _, rep = self.ground()
        if cfg.chi_mode == "cutoff":
            chi = truncated_ranks(rep, cutoff=value)
        else:
            chi = truncated_ranks(rep, max_chi=int(value))
        pt = modeled_census(H.plan, chi, P)
        frag = fragmentation_report(chi, cfg.ccdf_window, cfg.Pi, cfg.m)
        return {"value": value, "P": P, "chi": pt.chi, "elements": pt.elements, "flops": pt.flops,
                "R": communication_ratio(pt.elements, pt.flops, cfg.tau, cfg.phi),
                "alpha": None if frag.exponential is None else frag.exponential.alpha,
                "gamma": None if frag.power_law is None else frag.power_law.gamma,
                "n_eff": frag.n_eff, "chi_q": chi}

    def point_U(self, value):
        cfg = self.cfg
        s = _system(cfg, U=float(value))
        _, res = _ground_state(cfg, s, cfg.P[0])
        rep = schmidt_decompose(res.state, cfg.schmidt_cutoff)
        frag = fragmentation_report(rep.schmidt_ranks, cfg.ccdf_window, cfg.Pi, cfg.m)
        return {"U": float(value), "energy": res.energy, "iterations": res.iterations, "entropy": rep.entropy,
                "alpha": None if frag.exponential is None else frag.exponential.alpha,
                "C": None if frag.exponential is None else frag.exponential.C,
                "gamma": None if frag.power_law is None else frag.power_law.gamma,
                "n_eff": frag.n_eff, "chi_q": rep.schmidt_ranks}


def _sweep_fits(cfg, axis, points):
    if axis == "P":
        return {"speedup": asdict(fit_speedup([p["P"] for p in points], [p["modeled_time"] for p in points]))}
    if axis == "chi":
        pts = [CostPoint(p["chi"], p["elements"], p["flops"]) for p in points]
        return {"cost_model": cost_model_report(pts, cfg.tau, cfg.phi, cfg.m).to_dict()}
    alphas = [p["alpha"] for p in points if p["alpha"] is not None]
    return {"alpha_range": [min(alphas), max(alphas)] if alphas else None}


def cmd_sweep(cfg: ExperimentConfig) -> int:
    """Scaling or fragmentation dataset over P, kept Schmidt rank, or U."""
    if cfg.sweep_axis is None:
        raise ConfigError("[sweep] axis is required for the sweep command")
    out = Outputs(cfg)
    sysm = _system(cfg)
    axis = cfg.sweep_axis
    runner = getattr(_Sweep(cfg, sysm), f"point_{axis}")
    points, failures = [], []
    for value in cfg.sweep_values:
        try:
            points.append(runner(value))
        except COMPUTE_ERRORS as err:
            failures.append({"value": value, "error": f"{type(err).__name__}: {err}"})
    if axis == "P":
        t1 = next((p["modeled_time"] for p in points if p["P"] == 1), None)
        for p in points:
            p["modeled_speedup"] = None if t1 is None else t1 / p["modeled_time"]
    notes, fits = [], {}
    needed = 2 if axis == "chi" else 3
    if len(points) < needed:
        notes.append(f"fits skipped: {len(points)} successful point(s), {needed} needed")
    else:
        try:
            fits = _sweep_fits(cfg, axis, points)
        except StructuralError as err:
            notes.append(f"fits skipped: {err}")
    columns = [k for k in points[0] if k != "chi_q"] if points else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for p in points:
        w.writerow([repr(v) if isinstance(v, float) else v for v in (_plain(p[c]) for c in columns)])
    out.csv("sweep.csv", buf.getvalue())
    out.json("sweep.json", {"command": "sweep", "axis": axis, "model_hash": sysm.hash, "points": points,
                            "failures": failures, "fits": fits, "notes": notes})
    for n in notes:
        print(n)
    print(f"sweep over {axis}: {len(points)} point(s), {len(failures)} failure(s) -> {out.dir}")
    return 1 if failures else 0


def cmd_analyze(cfg: ExperimentConfig) -> int:
    """Re-run the entanglement analysis on a saved state file."""
    sysm = _system(cfg)
    path = Path(cfg.state_file) if cfg.state_file else Path(cfg.output_dir) / "state.bwf"
    psi, header = load_state(path)
    if header["model_hash"] != sysm.hash:
        raise StructuralError(f"state file {path} belongs to model {header['model_hash']}, config gives {sysm.hash}")
    out = Outputs(cfg)
    rep, frag = _analysis(cfg, out, sysm.hash, psi, cfg.P, {"state_file": str(path)})
    out.json("analysis.json", {"command": "analyze", "state_file": str(path), "model_hash": sysm.hash,
                               "state_config_hash": header.get("config_hash", ""), "entropy": rep.entropy,
                               "n_eff": frag.n_eff, "schmidt_ranks": rep.schmidt_ranks})
    print(f"S_vN = {rep.entropy!r}, N_eff = {frag.n_eff!r} -> {out.dir}")
    return 0


COMMANDS = {"solve": cmd_solve, "oracle": cmd_oracle, "sweep": cmd_sweep, "analyze": cmd_analyze}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        p.add_argument("config", help="INI experiment configuration")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except COMPUTE_ERRORS as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
