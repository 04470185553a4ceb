"""
Experiment configuration files.

The format is INI (``configparser``) with the sections below; every key is
optional unless marked. Times accept ``s``, ``ms``, ``us`` or ``ns``
suffixes (bare numbers are seconds), lengths accept ``m``, ``nm`` or ``A``
(bare numbers are meters), and couplings are rad/s (``Hz`` and ``kHz``
suffixes are converted by 2 pi)::

    [system]
    preset = chain-6            ; chain-N | random-N | geometry | matrix (required)
    spacing = 5.9A              ; chain spacing
    field_axis = 0 0 1
    gamma = 2.51662e8           ; rad/(s T)
    positions = 0 0 0; 3A 0 0   ; geometry preset, one 3-vector per spin
    couplings = 0 1e3; 1e3 0    ; matrix preset, rows separated by ';'
    coupling_scale = 5e3        ; random-N preset

    [hamiltonian]
    prep = ideal                ; ideal | cycle
    dq_scale = -0.5

    [timing]
    delta = 1.3us
    pulse_width = 0.51us
    loops = 1, 3, 5             ; or: tau = 130us (ideal preparation only)
    decay_times = 2us, 22us     ; or start:stop:step, stop exclusive

    [experiment]
    kind = oned-z, oned-x       ; oned-z oned-x twod decay spin-count-sweep aht-check (required)
    mode = collapsed            ; collapsed | network

    [sampling]
    k_phi = 16
    k_beta = 16
    n_max = 8
    turns = 1

    [output]
    prefix = fig2

    [run]
    seed = 0
    max_spins = 12
"""

from __future__ import annotations

import configparser
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import spinops
from .experiments import Timing
from .hamiltonians import (
    CAF2_SPACING,
    GAMMA_19F,
    SpinSystem,
    chain_system,
    couplings_from_geometry,
    random_system,
)

SCHEMA_VERSION = "1"
KINDS = ("oned-z", "oned-x", "twod", "decay", "spin-count-sweep", "aht-check")
DESK_SPACING = 5.9e-10

_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
_LENGTH = {"m": 1.0, "nm": 1e-9, "a": 1e-10}
_FREQ = {"rad/s": 1.0, "hz": 2 * np.pi, "khz": 2e3 * np.pi}

ALLOWED = {
    "system": {"preset", "spacing", "field_axis", "gamma", "positions", "couplings", "coupling_scale"},
    "hamiltonian": {"prep", "dq_scale"},
    "timing": {"delta", "pulse_width", "loops", "tau", "decay_times"},
    "experiment": {"kind", "mode"},
    "sampling": {"k_phi", "k_beta", "n_max", "turns"},
    "output": {"prefix"},
    "run": {"seed", "max_spins"},
}

PRESET_DIR = Path(__file__).parent / "presets"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class ExperimentConfig:
    preset: str
    kinds: list[str]
    spacing: float = DESK_SPACING
    field_axis: list[float] = field(default_factory=lambda: [0.0, 0.0, 1.0])
    gamma: float = GAMMA_19F
    positions: list[list[float]] | None = None
    couplings: list[list[float]] | None = None
    coupling_scale: float = 5e3
    prep: str = "ideal"
    dq_scale: float = -0.5
    delta: float = 1.3e-6
    pulse_width: float = 0.51e-6
    loops: list[int] | None = None
    tau: float | None = None
    decay_times: list[float] = field(default_factory=list)
    mode: str = "collapsed"
    k_phi: int = 0
    k_beta: int = 0
    n_max: int | None = None
    turns: int = 1
    prefix: str = "run"
    seed: int = 0
    max_spins: int = spinops.DEFAULT_MAX_SPINS

    @property
    def timing(self) -> Timing:
        return Timing(self.delta, self.pulse_width)

    def echo(self) -> dict[str, Any]:
        """Every parameter that affects the numbers, plus the schema version."""
        d = asdict(self)
        d.pop("prefix")
        d["schema_version"] = SCHEMA_VERSION
        return d

    def system(self) -> SpinSystem:
        spinops.set_max_spins(self.max_spins)
        kind, _, n = self.preset.partition("-")
        if kind == "chain":
            return chain_system(int(n), self.spacing, self.field_axis, self.gamma)
        if kind == "random":
            return random_system(int(n), self.coupling_scale, self.seed)
        if kind == "geometry":
            return couplings_from_geometry(self.positions, self.field_axis, self.gamma)
        return SpinSystem(np.array(self.couplings, dtype=float), {"source": "matrix"})

    def preparations(self):
        """``(loops, tau)`` pairs for the configured preparation times."""
        if self.loops is not None:
            return [(L, L * self.timing.cycle_time) for L in self.loops]
        return [(None, self.tau)]


def _number(text: str, units: dict[str, float], default_unit: str) -> float:
    m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*([A-Za-z/]*)\s*", text)
    if not m:
        raise ValueError(f"cannot parse number {text!r}")
    unit = (m.group(2) or default_unit).lower()
    if unit not in units:
        raise ValueError(f"unit {m.group(2)!r} not allowed here (use one of {', '.join(units)})")
    return float(m.group(1)) * units[unit]


def _list(text: str) -> list[str]:
    return [t for t in re.split(r"[,\s]+", text.strip()) if t]


def _time_list(text: str) -> list[float]:
    if ":" in text:
        parts = [_number(p, _TIME, "s") for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"range {text!r} must be start:stop:step with positive step")
        start, stop, step = parts
        count = int(np.floor((stop - start) / step + 1e-9))
        return [start + k * step for k in range(max(count, 0))]
    return [_number(t, _TIME, "s") for t in _list(text)]


def _matrix(text: str, units: dict[str, float], default_unit: str) -> list[list[float]]:
    return [[_number(t, units, default_unit) for t in row.split()] for row in text.split(";") if row.strip()]


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text, collecting all errors."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None

    errors: list[str] = []
    for sec in cp.sections():
        if sec not in ALLOWED:
            errors.append(f"unknown section [{sec}]")
            continue
        for key in cp[sec]:
            if key not in ALLOWED[sec]:
                errors.append(f"unknown key {sec}.{key}")

    values: dict[str, Any] = {}

    def get(sec, key, conv, name=None):
        if not cp.has_option(sec, key):
            return
        raw = cp.get(sec, key)
        try:
            values[name or key] = conv(raw)
        except (ValueError, TypeError) as exc:
            errors.append(f"{sec}.{key}: {exc}")

    get("system", "preset", str.strip)
    get("system", "spacing", lambda s: _number(s, _LENGTH, "m"))
    get("system", "field_axis", lambda s: [float(t) for t in _list(s)])
    get("system", "gamma", float)
    get("system", "positions", lambda s: _matrix(s, _LENGTH, "m"))
    get("system", "couplings", lambda s: _matrix(s, _FREQ, "rad/s"))
    get("system", "coupling_scale", lambda s: _number(s, _FREQ, "rad/s"))
    get("hamiltonian", "prep", str.strip)
    get("hamiltonian", "dq_scale", float)
    get("timing", "delta", lambda s: _number(s, _TIME, "s"))
    get("timing", "pulse_width", lambda s: _number(s, _TIME, "s"))
    get("timing", "loops", lambda s: [int(t) for t in _list(s)])
    get("timing", "tau", lambda s: _number(s, _TIME, "s"))
    get("timing", "decay_times", _time_list)
    get("experiment", "kind", _list, "kinds")
    get("experiment", "mode", str.strip)
    for key in ("k_phi", "k_beta", "n_max", "turns"):
        get("sampling", key, int)
    get("output", "prefix", str.strip)
    get("run", "seed", int)
    get("run", "max_spins", int)

    if "preset" not in values:
        errors.append("system.preset is required")
    if "kinds" not in values:
        errors.append("experiment.kind is required")
    if "preset" in values and "kinds" in values:
        cfg = ExperimentConfig(**values)
        errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def _spin_count(cfg: ExperimentConfig) -> int | None:
    kind, _, n = cfg.preset.partition("-")
    if kind in ("chain", "random"):
        return int(n) if n.isdigit() else None
    if kind == "geometry":
        return len(cfg.positions or [])
    if kind == "matrix":
        return len(cfg.couplings or [])
    return None


def validate(cfg: ExperimentConfig) -> list[str]:
    errors = []
    kind, _, n = cfg.preset.partition("-")
    if kind in ("chain", "random"):
        if not n.isdigit() or int(n) < 1:
            errors.append(f"system.preset {cfg.preset!r}: expected {kind}-N with N >= 1")
    elif kind == "geometry":
        if not cfg.positions:
            errors.append("geometry preset needs system.positions")
        elif any(len(p) != 3 for p in cfg.positions):
            errors.append("system.positions: each position needs three coordinates")
    elif kind == "matrix":
        if not cfg.couplings:
            errors.append("matrix preset needs system.couplings")
        elif any(len(r) != len(cfg.couplings) for r in cfg.couplings):
            errors.append("system.couplings must be square")
    else:
        errors.append(f"unknown preset {cfg.preset!r}")

    N = _spin_count(cfg)
    if cfg.max_spins < 1:
        errors.append("run.max_spins must be positive")
    elif N is not None and N > cfg.max_spins:
        errors.append(f"{N} spins exceed run.max_spins = {cfg.max_spins}")
    if cfg.spacing <= 0:
        errors.append("system.spacing must be positive (m)")
    if len(cfg.field_axis) != 3 or not any(cfg.field_axis):
        errors.append("system.field_axis must be a nonzero 3-vector")
    if cfg.gamma <= 0:
        errors.append("system.gamma must be positive (rad/(s T))")
    if cfg.coupling_scale <= 0:
        errors.append("system.coupling_scale must be positive (rad/s)")

    if cfg.prep not in ("ideal", "cycle"):
        errors.append(f"hamiltonian.prep must be ideal or cycle, got {cfg.prep!r}")
    if cfg.delta <= 0:
        errors.append("timing.delta must be positive (s)")
    if cfg.pulse_width < 0:
        errors.append("timing.pulse_width must be non-negative (s)")
    if cfg.loops is not None and cfg.tau is not None:
        errors.append("give timing.loops or timing.tau, not both")
    if cfg.loops is not None and any(L < 0 for L in cfg.loops):
        errors.append("timing.loops must be non-negative")
    if cfg.tau is not None:
        if cfg.tau < 0:
            errors.append("timing.tau must be non-negative (s)")
        if cfg.prep == "cycle":
            errors.append("timing.tau requires hamiltonian.prep = ideal; use loops for the pulse cycle")
    if any(t < 0 for t in cfg.decay_times):
        errors.append("timing.decay_times must be non-negative (s)")

    for k in cfg.kinds:
        if k not in KINDS:
            errors.append(f"unknown experiment kind {k!r}")
    needs_prep = {"oned-z", "oned-x", "twod", "decay", "spin-count-sweep"} & set(cfg.kinds)
    if needs_prep and cfg.loops is None and cfg.tau is None:
        errors.append("timing.loops or timing.tau is required")
    if "spin-count-sweep" in cfg.kinds and (cfg.loops is None or len(set(cfg.loops)) < 2):
        errors.append("spin-count-sweep needs at least two distinct timing.loops")
    if "decay" in cfg.kinds and not cfg.decay_times:
        errors.append("decay needs timing.decay_times")
    if cfg.mode not in ("collapsed", "network"):
        errors.append(f"experiment.mode must be collapsed or network, got {cfg.mode!r}")

    if cfg.turns < 1:
        errors.append("sampling.turns must be >= 1")
    n_max = cfg.n_max if cfg.n_max is not None else N
    if cfg.n_max is not None and cfg.n_max < 0:
        errors.append("sampling.n_max must be non-negative")
    elif n_max is not None:
        if N is not None and n_max < N:
            errors.append(f"sampling.n_max = {n_max} is below the largest possible order {N}")
        for key in ("k_phi", "k_beta"):
            K = getattr(cfg, key)
            if K < 0:
                errors.append(f"sampling.{key} must be non-negative")
            elif K and K < 2 * n_max:
                errors.append(
                    f"sampling.{key} = {K} below Nyquist: orders up to {n_max} need at least {2 * n_max} phase steps"
                )
    return errors


def resolve_config_path(name: str | Path) -> Path:
    """Existing file path, or a shipped preset such as ``fig2.cfg``."""
    p = Path(name)
    if p.exists():
        return p
    for cand in (PRESET_DIR / p.name, PRESET_DIR / f"{p.name}.cfg"):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"config {name!s} not found (presets: {', '.join(list_presets())})")


def list_presets() -> list[str]:
    return sorted(p.name for p in PRESET_DIR.glob("*.cfg"))


def load_config(name: str | Path) -> ExperimentConfig:
    return parse_config(resolve_config_path(name).read_text())
