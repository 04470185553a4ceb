"""Command-line entry point: ``mqnmr {run,sweep,aht-check,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from . import io
from .config import ConfigError, ExperimentConfig, load_config, validate

log = logging.getLogger("mqnmr")


def _tag(loops, tau) -> str:
    return f"L{loops}" if loops is not None else f"tau{tau * 1e6:.6g}us"


def run_config(cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[Path]:
    """Run every experiment kind listed in ``cfg``; return written files in order."""
    sys_ = cfg.system()
    echo = cfg.echo()
    written: list[Path] = []
    n_max = cfg.n_max

    def prep(loops, tau):
        return ex.Preparation(
            sys_, tau, loops=loops, prep=cfg.prep, dq_scale=cfg.dq_scale, timing=cfg.timing
        )

    for kind in cfg.kinds:
        if kind in ("oned-z", "oned-x"):
            basis = kind[-1]
            for loops, tau in cfg.preparations():
                res = ex.run_1d(
                    prep(loops, tau), basis, cfg.mode, cfg.k_phi, n_max, cfg.turns, workers
                )
                try:
                    res.fit = ex.gaussian_fit(res.spectrum)
                except ValueError as exc:
                    log.info("no Gaussian fit for %s %s: %s", kind, _tag(loops, tau), exc)
                stem = out / f"{cfg.prefix}_{kind}_{_tag(loops, tau)}"
                written.extend(io.write_spectrum(res, stem, echo))
                written.append(io.write_signal(res, stem.with_name(stem.name + "_signal.csv")))
        elif kind == "twod":
            for loops, tau in cfg.preparations():
                res = ex.run_2d(prep(loops, tau), cfg.k_phi, cfg.k_beta, n_max, cfg.turns, workers)
                stem = out / f"{cfg.prefix}_twod_{_tag(loops, tau)}"
                written.extend(io.write_spectrum(res, stem, echo))
                written.append(io.write_signal(res, stem.with_name(stem.name + "_signal.csv")))
        elif kind == "decay":
            for loops, tau in cfg.preparations():
                res = ex.run_dipolar_decay(
                    prep(loops, tau), cfg.decay_times, cfg.k_phi, cfg.k_beta, n_max, workers
                )
                written.extend(io.write_decay(res, out / f"{cfg.prefix}_decay_{_tag(loops, tau)}", echo))
        elif kind == "spin-count-sweep":
            res = ex.spin_count_sweep(
                sys_, cfg.loops, cfg.k_phi, n_max, workers,
                prep=cfg.prep, dq_scale=cfg.dq_scale, timing=cfg.timing,
            )
            written.extend(io.write_sweep(res, out / f"{cfg.prefix}_sweep", echo))
            log.info("slope N_x vs N_z: %.4f", res.slope)
        elif kind == "aht-check":
            report = ex.run_aht_check(sys_, cfg.timing)
            written.extend(io.write_aht(report, out / f"{cfg.prefix}_aht", echo))
    return written


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _check(cfg: ExperimentConfig) -> ExperimentConfig:
    errors = validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    files = run_config(cfg, Path(args.out), args.workers)
    for f in files:
        print(f)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    loops = cfg.loops if cfg.loops and len(set(cfg.loops)) >= 2 else list(range(1, 7))
    cfg = _check(replace(cfg, kinds=["spin-count-sweep"], loops=loops, tau=None))
    files = run_config(cfg, Path(args.out), args.workers)
    for f in files:
        print(f)
    return 0


def cmd_aht(args) -> int:
    if args.config:
        cfg = _load(args)
    else:
        cfg = ExperimentConfig(preset="random-4", kinds=["aht-check"], seed=args.seed or 0, prefix="aht")
    cfg = _check(replace(cfg, kinds=["aht-check"]))
    files = run_config(cfg, Path(args.out), args.workers)
    for f in files:
        print(f)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    report = run_selftest(Path(args.out) if args.out else None, args.workers, args.seed or 0)
    for line in report.lines:
        print(line)
    print(f"selftest: {report.passed} passed, {report.failed} failed")
    return 0 if report.failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mqnmr", description="Multiple-quantum coherence simulations.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True, out_default="out"):
        sp.add_argument("--config", required=config_required, help="config file or shipped preset name")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--workers", type=int, default=1, help="worker threads for phase grids")
        sp.add_argument("--seed", type=int, default=None, help="override run.seed")

    common(sub.add_parser("run", help="run the experiments listed in a config"))
    common(sub.add_parser("sweep", help="spin-counting sweep over loop counts"))
    common(sub.add_parser("aht-check", help="average-Hamiltonian validation of the DQ cycles"), False)
    common(sub.add_parser("selftest", help="run the invariant suite"), False, None)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "aht-check": cmd_aht, "selftest": cmd_selftest}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
