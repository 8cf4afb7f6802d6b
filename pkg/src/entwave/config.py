"""Experiment configuration: INI text with fixed sections, validated before any compute.

Every key is optional except ``[model] name`` and ``[model] sites``; unknown
sections and keys are rejected so typos surface as configuration errors.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

from .models import MODELS, ModelSpec, default_target
from .pipeline import default_cut
from .symmetry import EntanglementCut

OUTPUT_DIR_ENV = "ENTWAVE_OUTPUT_DIR"
SCHEDULES = ("serial", "reversed", "threads")
SWEEP_AXES = ("P", "chi", "U")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


SCHEMA = {
    "model": {"name", "sites", "J", "t", "U", "V", "eps_d", "bath_energies", "hybridizations"},
    "cut": {"kind", "position"},
    "sector": {"target"},
    "run": {"P", "schedule", "seed", "output_dir", "oracle_cap", "oracle_states", "corrupt_boundary"},
    "solver": {"max_iterations", "tolerance", "residual_tolerance"},
    "analysis": {"entanglement", "schmidt_cutoff", "ipr_mode", "ccdf_window", "Pi", "m", "tau", "phi",
                 "latency", "state_file"},
    "sweep": {"axis", "values", "chi_mode"},
}


@dataclass
class ExperimentConfig:
    model: dict
    cut_kind: str
    cut_position: int | None
    target: tuple | None
    P: list
    schedule: str = "serial"
    seed: int = 1234
    output_dir: str = "entwave_out"
    oracle_cap: int = 4096
    oracle_states: int = 20
    corrupt_boundary: int | None = None
    max_iterations: int = 500
    tolerance: float = 1e-12
    residual_tolerance: float = 1e-8
    entanglement: bool = True
    schmidt_cutoff: float = 1e-14
    ipr_mode: str = "sector"
    ccdf_window: tuple | None = None
    Pi: float | None = None
    m: float = 1.0
    tau: float = 1.0
    phi: float = 1.0
    latency: float = 0.0
    state_file: str | None = None
    sweep_axis: str | None = None
    sweep_values: list = field(default_factory=list)
    chi_mode: str = "cutoff"

    def model_spec(self, **overrides) -> ModelSpec:
        kw = dict(self.model)
        kw.update(overrides)
        name = kw.pop("name")
        return ModelSpec(name, **kw)

    def cut(self, spec: ModelSpec | None = None) -> EntanglementCut:
        return default_cut(spec or self.model_spec(), self.cut_kind, self.cut_position)

    def resolved(self) -> dict:
        d = asdict(self)
        d["target"] = None if self.target is None else list(self.target)
        d["ccdf_window"] = None if self.ccdf_window is None else list(self.ccdf_window)
        return d

    @property
    def hash(self) -> str:
        """Hash of everything that affects results.

        The output directory and the rank schedule are excluded; the schedule
        never changes a result, so runs differing only in it are byte-identical.
        """
        d = self.resolved()
        d.pop("output_dir")
        d.pop("schedule")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_ini(self) -> str:
        """Resolved configuration as INI text that parses back to the same hash."""

        def fmt(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, (list, tuple)):
                return ", ".join(fmt(x) for x in v)
            return repr(v) if isinstance(v, float) else str(v)

        sections = {
            "model": {k: v for k, v in self.model.items()},
            "cut": {"kind": self.cut_kind, "position": self.cut_position},
            "sector": {"target": self.target},
            "run": {"P": self.P, "schedule": self.schedule, "seed": self.seed, "output_dir": self.output_dir,
                    "oracle_cap": self.oracle_cap, "oracle_states": self.oracle_states,
                    "corrupt_boundary": self.corrupt_boundary},
            "solver": {"max_iterations": self.max_iterations, "tolerance": self.tolerance,
                       "residual_tolerance": self.residual_tolerance},
            "analysis": {"entanglement": self.entanglement, "schmidt_cutoff": self.schmidt_cutoff,
                         "ipr_mode": self.ipr_mode, "ccdf_window": self.ccdf_window, "Pi": self.Pi, "m": self.m,
                         "tau": self.tau, "phi": self.phi, "latency": self.latency, "state_file": self.state_file},
            "sweep": {"axis": self.sweep_axis, "values": self.sweep_values or None, "chi_mode": self.chi_mode},
        }
        lines = [f"# config_hash={self.hash}"]
        for name, items in sections.items():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {fmt(v)}" for k, v in items.items() if v is not None)
            lines.append("")
        return "\n".join(lines)


def _get(cp, section, key, conv, default, what):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    try:
        return conv(raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected {what}") from err


def _floats(raw):
    return [float(x) for x in raw.replace(",", " ").split()]


def _ints(raw):
    return [int(x) for x in raw.replace(",", " ").split()]


def _bool(raw):
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def parse_config(text: str, env: dict | None = None) -> ExperimentConfig:
    env = os.environ if env is None else env
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"unparseable config: {err}") from err
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key [{section}] {key}")
    if not cp.has_option("model", "name"):
        raise ConfigError("[model] name is required")
    name = cp.get("model", "name").strip()
    if name not in MODELS:
        raise ConfigError(f"[model] name = {name!r}: expected one of {', '.join(MODELS)}")
    sites = _get(cp, "model", "sites", int, None, "an integer")
    if sites is None:
        raise ConfigError("[model] sites is required")
    if sites < 2:
        raise ConfigError(f"[model] sites = {sites}: need at least 2")
    model = {"name": name, "sites": sites}
    for key in ("J", "t", "U", "V", "eps_d"):
        v = _get(cp, "model", key, float, None, "a number")
        if v is not None:
            model[key] = v
    for key in ("bath_energies", "hybridizations"):
        v = _get(cp, "model", key, _floats, None, "a list of numbers")
        if v is not None:
            if name != "impurity":
                raise ConfigError(f"[model] {key} only applies to the impurity model")
            if len(v) != sites - 1:
                raise ConfigError(f"[model] {key}: expected {sites - 1} values, got {len(v)}")
            model[key] = tuple(v)

    kind = _get(cp, "cut", "kind", str, None, "spatial or spin")
    if kind not in (None, "spatial", "spin"):
        raise ConfigError(f"[cut] kind = {kind!r}: expected spatial or spin")
    position = _get(cp, "cut", "position", int, None, "an integer")
    if kind == "spin" and name == "heisenberg":
        raise ConfigError("[cut] kind = spin needs a fermionic model")
    if position is not None and (kind == "spin" or not 1 <= position < sites):
        raise ConfigError(f"[cut] position = {position}: expected 1 <= position < {sites} on a spatial cut")

    target = _get(cp, "sector", "target", _ints, None, "a list of integers")
    if target is not None:
        want = 1 if name == "heisenberg" else 2
        if len(target) != want:
            raise ConfigError(f"[sector] target: expected {want} integers, got {len(target)}")
        target = tuple(target)

    P = _get(cp, "run", "P", _ints, [1], "a list of integers")
    if not P or any(p < 1 for p in P):
        raise ConfigError(f"[run] P = {P}: rank counts must be >= 1")
    schedule = _get(cp, "run", "schedule", str, "serial", "a schedule name")
    if schedule not in SCHEDULES:
        raise ConfigError(f"[run] schedule = {schedule!r}: expected one of {', '.join(SCHEDULES)}")
    output_dir = env.get(OUTPUT_DIR_ENV) or _get(cp, "run", "output_dir", str, "entwave_out", "a path")

    cfg = ExperimentConfig(
        model=model, cut_kind=kind, cut_position=position, target=target, P=P, schedule=schedule,
        seed=_get(cp, "run", "seed", int, 1234, "an integer"),
        output_dir=output_dir,
        oracle_cap=_get(cp, "run", "oracle_cap", int, 4096, "an integer"),
        oracle_states=_get(cp, "run", "oracle_states", int, 20, "an integer"),
        corrupt_boundary=_get(cp, "run", "corrupt_boundary", int, None, "an integer"),
        max_iterations=_get(cp, "solver", "max_iterations", int, 500, "an integer"),
        tolerance=_get(cp, "solver", "tolerance", float, 1e-12, "a number"),
        residual_tolerance=_get(cp, "solver", "residual_tolerance", float, 1e-8, "a number"),
        entanglement=_get(cp, "analysis", "entanglement", _bool, True, "a boolean"),
        schmidt_cutoff=_get(cp, "analysis", "schmidt_cutoff", float, 1e-14, "a number"),
        ipr_mode=_get(cp, "analysis", "ipr_mode", str, "sector", "sector or column"),
        ccdf_window=_get(cp, "analysis", "ccdf_window", _floats, None, "two numbers"),
        Pi=_get(cp, "analysis", "Pi", float, None, "a number"),
        m=_get(cp, "analysis", "m", float, 1.0, "a number"),
        tau=_get(cp, "analysis", "tau", float, 1.0, "a number"),
        phi=_get(cp, "analysis", "phi", float, 1.0, "a number"),
        latency=_get(cp, "analysis", "latency", float, 0.0, "a number"),
        state_file=_get(cp, "analysis", "state_file", str, None, "a path"),
        sweep_axis=_get(cp, "sweep", "axis", str, None, "P, chi or U"),
        sweep_values=_get(cp, "sweep", "values", _floats, [], "a list of numbers"),
        chi_mode=_get(cp, "sweep", "chi_mode", str, "cutoff", "cutoff or max_chi"),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.max_iterations < 2:
        raise ConfigError("[solver] max_iterations must be at least 2")
    for key in ("tolerance", "residual_tolerance"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"[solver] {key} must be positive")
    if cfg.oracle_cap < 1 or cfg.oracle_states < 1:
        raise ConfigError("[run] oracle_cap and oracle_states must be positive")
    if cfg.schmidt_cutoff < 0:
        raise ConfigError("[analysis] schmidt_cutoff must be non-negative")
    if cfg.ipr_mode not in ("sector", "column"):
        raise ConfigError(f"[analysis] ipr_mode = {cfg.ipr_mode!r}: expected sector or column")
    if cfg.ccdf_window is not None:
        if len(cfg.ccdf_window) != 2 or not 0 < cfg.ccdf_window[0] < cfg.ccdf_window[1]:
            raise ConfigError("[analysis] ccdf_window: expected two increasing positive numbers")
        cfg.ccdf_window = tuple(cfg.ccdf_window)
    if cfg.Pi is not None and cfg.Pi <= 0:
        raise ConfigError("[analysis] Pi must be positive")
    for key in ("m", "tau", "phi"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"[analysis] {key} must be positive")
    if cfg.latency < 0:
        raise ConfigError("[analysis] latency must be non-negative")
    if cfg.sweep_axis is not None:
        if cfg.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"[sweep] axis = {cfg.sweep_axis!r}: expected one of {', '.join(SWEEP_AXES)}")
        if not cfg.sweep_values:
            raise ConfigError("[sweep] values: at least one value is required")
        if cfg.chi_mode not in ("cutoff", "max_chi"):
            raise ConfigError(f"[sweep] chi_mode = {cfg.chi_mode!r}: expected cutoff or max_chi")
        if cfg.sweep_axis == "P" and any(v < 1 or v != int(v) for v in cfg.sweep_values):
            raise ConfigError("[sweep] values: P values must be integers >= 1")
        if cfg.sweep_axis == "chi" and cfg.chi_mode == "max_chi" and any(v < 1 or v != int(v) for v in cfg.sweep_values):
            raise ConfigError("[sweep] values: max_chi values must be integers >= 1")
        if cfg.sweep_axis == "chi" and cfg.chi_mode == "cutoff" and any(v < 0 for v in cfg.sweep_values):
            raise ConfigError("[sweep] values: cutoffs must be non-negative")
        if cfg.sweep_axis == "U" and cfg.model["name"] == "heisenberg":
            raise ConfigError("[sweep] axis = U needs a fermionic model")
    try:
        spec = cfg.model_spec()
        cut = cfg.cut(spec)
    except ValueError as err:
        raise ConfigError(f"[model] {err}") from err
    # fill in defaults so the resolved config is explicit
    cfg.model = {"name": spec.model, **{k: (tuple(v) if isinstance(v, list) else v)
                                         for k, v in spec.describe().items() if k not in ("model",)}}
    cfg.cut_kind = cut.kind
    cfg.cut_position = len(cut.left_sites) if cut.kind == "spatial" else None
    if cfg.target is None:
        cfg.target = default_target(spec)


def load_config(path, env: dict | None = None) -> ExperimentConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text, env)
