"""
CSV and JSON serialization of experiment outputs.

Every output ``<stem>.csv`` has a ``<stem>.json`` sidecar carrying the
schema version, the config echo and derived quantities. Floats are written
with 17 significant digits so that reading a file back reproduces the
in-memory values exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .config import SCHEMA_VERSION
from .experiments import AHTReport, DecayResult, ExperimentResult, SweepResult


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays for ``json.dump``."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(data: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_plain({"schema_version": SCHEMA_VERSION, **data}), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_csv(header: Sequence[str], rows: Iterable[Sequence], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _fit_dict(fit) -> dict | None:
    if fit is None:
        return None
    return {
        "sigma": fit.sigma,
        "n_eff": fit.n_eff,
        "amplitude": fit.amplitude,
        "residual": fit.residual,
        "basis": fit.basis,
        "orders_used": fit.orders_used,
    }


def write_spectrum(
    result: ExperimentResult, path: str | Path, config_echo: dict | None = None, dense: bool = True
) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (spectrum) and ``<path>.json`` (metadata).

    1D results give rows ``order,intensity``; 2D results give
    ``x_order,z_order,intensity`` triples, all ``(2 n_max + 1)^2`` of them
    when ``dense`` is true. Only orders with nonzero intensity are kept
    otherwise.
    """
    stem = Path(path)
    if stem.suffix in (".csv", ".json"):
        stem = stem.with_suffix("")
    if result.map2d is not None:
        rows = [
            (int(m), int(n), float(result.map2d[i, j]))
            for i, m in enumerate(result.x_orders)
            for j, n in enumerate(result.z_orders)
            if dense or result.map2d[i, j] != 0
        ]
        csv_path = write_csv(("x_order", "z_order", "intensity"), rows, stem.with_suffix(".csv"))
    else:
        spec = result.spectrum
        rows = [
            (int(n), float(v)) for n, v in zip(spec.orders, spec.intensities) if dense or v != 0
        ]
        csv_path = write_csv(("order", "intensity"), rows, stem.with_suffix(".csv"))
    meta = {
        "kind": result.kind,
        "tau": result.tau,
        "loops": result.loops,
        "total": result.total,
        "experiment": result.config,
        "checks": result.checks,
        "fit": _fit_dict(result.fit),
        "config": config_echo or {},
        "csv": csv_path.name,
    }
    json_path = write_json(meta, stem.with_suffix(".json"))
    return csv_path, json_path


def write_signal(result: ExperimentResult, path: str | Path) -> Path:
    """Plot-ready phase scan, ``phi,signal`` or ``phi,beta,signal``."""
    if result.map2d is not None:
        phis, betas = result.phases
        rows = [
            (float(p), float(b), float(result.signal[i, j]))
            for i, p in enumerate(phis)
            for j, b in enumerate(betas)
        ]
        return write_csv(("phi", "beta", "signal"), rows, path)
    rows = [(float(p), float(s)) for p, s in zip(result.phases, result.signal)]
    return write_csv(("phi", "signal"), rows, path)


def read_spectrum(path: str | Path) -> dict:
    """Read back a spectrum CSV (and its sidecar if present)."""
    p = Path(path)
    if p.suffix != ".csv":
        p = p.with_suffix(".csv")
    with open(p, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [r for r in reader]
    out: dict[str, Any] = {"header": header}
    if header == ["order", "intensity"]:
        out["orders"] = np.array([int(r[0]) for r in rows])
        out["intensities"] = np.array([float(r[1]) for r in rows])
    else:
        out["x_orders"] = np.array([int(r[0]) for r in rows])
        out["z_orders"] = np.array([int(r[1]) for r in rows])
        out["intensities"] = np.array([float(r[2]) for r in rows])
    side = p.with_suffix(".json")
    if side.exists():
        out["meta"] = json.loads(side.read_text())
    return out


def write_sweep(sweep: SweepResult, path: str | Path, config_echo: dict | None = None) -> tuple[Path, Path]:
    stem = Path(path)
    rows = [
        (r.loops, float(r.tau), r.z.sigma, r.x.sigma, r.z.n_eff, r.x.n_eff, r.z.residual, r.x.residual)
        for r in sweep.rows
    ]
    csv_path = write_csv(
        ("loops", "tau", "sigma_z", "sigma_x", "N_z", "N_x", "residual_z", "residual_x"),
        rows,
        stem.with_suffix(".csv"),
    )
    json_path = write_json(
        {"kind": "spin-count-sweep", "slope": sweep.slope, "experiment": sweep.config, "config": config_echo or {}},
        stem.with_suffix(".json"),
    )
    return csv_path, json_path


def write_decay(decay: DecayResult, path: str | Path, config_echo: dict | None = None) -> tuple[Path, Path]:
    stem = Path(path)
    orders = [int(m) for m in decay.x_orders]
    header = ["t", "zq", "zq_normalized"] + [f"x{m:+d}" for m in orders]
    norm = decay.zq_normalized
    rows = [
        [float(t), float(decay.zq[k]), float(norm[k])] + [float(v) for v in decay.contributions[k]]
        for k, t in enumerate(decay.times)
    ]
    csv_path = write_csv(header, rows, stem.with_suffix(".csv"))
    json_path = write_json(
        {
            "kind": "decay",
            "experiment": decay.config,
            "config": config_echo or {},
            "max_marginal_error": float(np.max(np.abs(decay.zq - decay.zq_from_map))),
            "max_autocorrelation_drift": float(np.max(decay.auto_deviation)),
            "normalized_contributions": {str(m): v for m, v in decay.contributions_normalized().items()},
        },
        stem.with_suffix(".json"),
    )
    return csv_path, json_path


def write_aht(report: AHTReport, path: str | Path, config_echo: dict | None = None) -> tuple[Path, Path]:
    stem = Path(path)
    rows = [
        ("ideal-8", report.c8, report.residual8),
        ("ideal-16", report.c16, report.residual16),
        ("ideal-16-half-coupling", float("nan"), report.residual16_half),
        ("finite-8", float("nan"), report.finite_residual8),
        ("finite-16", float("nan"), report.finite_residual16),
        ("flip-error-8", float("nan"), report.flip_residual8),
        ("flip-error-16", float("nan"), report.flip_residual16),
    ]
    csv_path = write_csv(("cycle", "scale", "relative_residual"), rows, stem.with_suffix(".csv"))
    json_path = write_json(
        {
            "kind": "aht-check",
            "cycle_time_16": report.cycle_time16,
            "halving_gain": report.halving_gain,
            "experiment": report.config,
            "config": config_echo or {},
        },
        stem.with_suffix(".json"),
    )
    return csv_path, json_path
