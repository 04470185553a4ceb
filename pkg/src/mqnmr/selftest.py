"""
Invariant suite run by ``mqnmr selftest``.

Each check returns ``(ok, detail)``. Experiments run here also get a
Parseval and symmetry check, and their spectra are written to the output
directory when one is given, which makes the suite usable as a
determinism probe across worker counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import coherence as coh
from . import experiments as ex
from . import io
from .config import DESK_SPACING
from .hamiltonians import (
    CAF2_SPACING,
    chain_system,
    dq_hamiltonian,
    dq_hamiltonian_xform,
    random_system,
    secular_dipolar_hamiltonian,
)
from .sequence import build_dq_cycle_16, sequence_propagator
from .spinops import collective_op, pauli_weight_decompose, rotation

TOL = 1e-10


@dataclass
class SelftestReport:
    lines: list[str] = field(default_factory=list)
    passed: int = 0
    failed: int = 0
    files: list[Path] = field(default_factory=list)
    experiments: list[ex.ExperimentResult] = field(default_factory=list)

    def record(self, name: str, ok: bool, detail: str = ""):
        self.lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}{': ' + detail if detail else ''}")
        if ok:
            self.passed += 1
        else:
            self.failed += 1


def _random_state(N: int, rng) -> np.ndarray:
    A = rng.normal(size=(2**N, 2**N)) + 1j * rng.normal(size=(2**N, 2**N))
    A = A + A.conj().T
    return A / np.linalg.norm(A)


def parseval_symmetry(res: ex.ExperimentResult) -> tuple[bool, str]:
    if res.map2d is not None:
        inten = res.map2d
        sym = float(np.max(np.abs(inten - inten[::-1, ::-1])))
    else:
        inten = res.spectrum.intensities
        sym = res.spectrum.symmetry_error()
    pars = abs(float(inten.sum()) - res.total)
    ok = pars < TOL * max(res.total, 1.0) and sym < TOL
    return ok, f"parseval {pars:.2e}, symmetry {sym:.2e}"


def run_selftest(out: Path | None = None, workers: int = 1, seed: int = 0) -> SelftestReport:
    rep = SelftestReport()
    rng = np.random.default_rng(seed)

    def check(name: str, fn: Callable[[], tuple[bool, str]]):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rep.record(name, ok, detail)

    def experiment(name: str, res: ex.ExperimentResult):
        rep.experiments.append(res)
        check(f"parseval/symmetry {name}", lambda: parseval_symmetry(res))
        if out is not None:
            rep.files.extend(io.write_spectrum(res, out / f"selftest_{name}"))
        return res

    # operators and Hamiltonians
    def rotations_unitary():
        dev = max(
            np.max(np.abs(R @ R.conj().T - np.eye(R.shape[0])))
            for R in (rotation(4, a, t) for a in "xyz" for t in rng.uniform(-7, 7, 3))
        )
        return dev < 1e-12, f"max |U U^+ - 1| = {dev:.2e}"

    def dq_forms_agree():
        s = random_system(3, 1.0, seed)
        d = np.linalg.norm(dq_hamiltonian(s) - dq_hamiltonian_xform(s))
        return d < 1e-12, f"|H_z - H_x|_F = {d:.2e}"

    def secular_commutes():
        H = secular_dipolar_hamiltonian(random_system(3, 1.0, seed))
        cz = np.linalg.norm(H @ collective_op(3, "z") - collective_op(3, "z") @ H)
        cx = np.linalg.norm(H @ collective_op(3, "x") - collective_op(3, "x") @ H)
        return cz < 1e-12 and cx > 1e-3, f"|[H,Iz]| = {cz:.2e}, |[H,Ix]| = {cx:.2e}"

    def weight_invariance():
        rho = _random_state(4, rng)
        w0 = pauli_weight_decompose(rho)
        R = rotation(4, "x", 0.7) @ rotation(4, "y", -1.3)
        w1 = pauli_weight_decompose(R @ rho @ R.conj().T)
        dev = max(abs(w0[k] - w1[k]) for k in w0)
        return dev < TOL, f"max weight change {dev:.2e}"

    check("rotations unitary", rotations_unitary)
    check("DQ Hamiltonian z/x forms agree", dq_forms_agree)
    check("secular dipolar commutes with Iz only", secular_commutes)
    check("product-operator weight invariant under rotation", weight_invariance)

    # coherence decomposition
    def dual_method():
        dev = 0.0
        for _ in range(5):
            rho = _random_state(4, rng)
            for axis in "zx":
                a = coh.decompose_phase_ft(rho, axis, K=16, workers=workers).intensities
                b = coh.block_spectrum(rho, axis).intensities
                dev = max(dev, float(np.max(np.abs(a - b))))
        dev_t = max(coh.basis_transform_check(_random_state(4, rng)).max_deviation for _ in range(3))
        return dev < TOL and dev_t < TOL, f"block vs phase-ft {dev:.2e}, basis transform {dev_t:.2e}"

    check("block and phase-Fourier decompositions agree", dual_method)

    # 1D experiments and selection rules
    for N, spacing in ((2, DESK_SPACING), (4, DESK_SPACING), (6, DESK_SPACING)):
        sys_ = chain_system(N, spacing)
        for loops in (1, 3, 5):
            prep = ex.Preparation.from_loops(sys_, loops)
            rz = experiment(f"chain{N}_z_L{loops}", ex.run_1d(prep, "z", K=4 * N, workers=workers))
            rx = experiment(f"chain{N}_x_L{loops}", ex.run_1d(prep, "x", K=4 * N, workers=workers))
            check(
                f"selection rules chain-{N} L{loops}",
                lambda rz=rz, rx=rx: (
                    coh.selection_violation(rz.spectrum, 1) < 1e-12
                    and coh.selection_violation(rx.spectrum, 0) < 1e-12,
                    f"odd z {coh.selection_violation(rz.spectrum, 1):.1e}, even x {coh.selection_violation(rx.spectrum, 0):.1e}",
                ),
            )

    sys4 = chain_system(4, DESK_SPACING)
    for loops in (1, 3, 5):
        prep = ex.Preparation.from_loops(sys4, loops, prep="cycle")
        for basis in "zx":
            a = ex.run_1d(prep, basis, "collapsed", K=16, workers=workers)
            b = experiment(f"network_{basis}_L{loops}", ex.run_1d(prep, basis, "network", K=16, workers=workers))
            check(
                f"network = collapsed, {basis} basis L{loops}",
                lambda a=a, b=b: (
                    float(np.max(np.abs(a.signal - b.signal))) < TOL,
                    f"{float(np.max(np.abs(a.signal - b.signal))):.2e}",
                ),
            )

    # 2D experiment
    sys6 = chain_system(6, DESK_SPACING)
    prep6 = ex.Preparation.from_loops(sys6, 3)
    r2 = experiment("twod_L3", ex.run_2d(prep6, 17, 17, n_max=8, workers=workers))
    mx, mz = ex.marginals(r2)
    z1 = ex.run_1d(prep6, "z", K=17, n_max=8, workers=workers).spectrum.intensities
    x1 = ex.run_1d(prep6, "x", K=17, n_max=8, workers=workers).spectrum.intensities

    def swap():
        rho = prep6.state()
        phis, betas = coh.phase_grid(17), coh.phase_grid(17)
        g1 = ex.correlation_grid(rho, rho, phis, betas, workers=workers)
        g2 = ex.correlation_grid(rho, rho, phis, betas, swap=True, workers=workers)
        d = float(np.max(np.abs(g1 - g2)))
        return d < TOL, f"{d:.2e}"

    check(
        "2D marginals match 1D spectra",
        lambda: (
            max(np.max(np.abs(mx - x1)), np.max(np.abs(mz - z1))) < TOL,
            f"x {np.max(np.abs(mx - x1)):.2e}, z {np.max(np.abs(mz - z1)):.2e}",
        ),
    )
    check("2D phase-order swap identity", swap)

    # spin counting
    def sweep():
        sw = ex.spin_count_sweep(sys6, range(1, 7), K=16, workers=workers)
        nz = [r.z.n_eff for r in sw.rows]
        nx = [r.x.n_eff for r in sw.rows]
        ok = (
            all(r.x.sigma < r.z.sigma for r in sw.rows)
            and all(np.diff(nz) >= 0)
            and all(np.diff(nx) >= 0)
            and 0.35 <= sw.slope <= 0.65
        )
        if out is not None:
            rep.files.extend(io.write_sweep(sw, out / "selftest_sweep"))
        return ok, f"slope {sw.slope:.4f}"

    check("spin-counting trend and slope", sweep)

    # dipolar decay
    def decay():
        prep = ex.Preparation.from_loops(chain_system(6, CAF2_SPACING), 3)
        res = ex.run_dipolar_decay(prep, 2e-6 + 20e-6 * np.arange(21), 16, 16, workers=workers)
        if out is not None:
            rep.files.extend(io.write_decay(res, out / "selftest_decay"))
        marg = float(np.max(np.abs(res.zq - res.zq_from_map)))
        curves = list(res.contributions_normalized().values())
        spread = max(float(np.max(np.abs(a - b))) for a in curves for b in curves)
        final = float(res.zq_normalized[-1])
        ok = marg < TOL and float(res.auto_deviation.max()) < TOL and final < 0.9 and spread > 0.1
        return ok, f"final/initial {final:.3f}, x-order spread {spread:.2f}, marginal {marg:.1e}"

    check("zero-quantum decay under dipolar evolution", decay)

    # average Hamiltonian
    def aht():
        r = ex.run_aht_check(random_system(4, 5e3, seed))
        ok = (
            r.halving_gain >= 3
            and r.finite_residual16 <= r.finite_residual8
            and r.flip_residual16 <= r.flip_residual8
            and abs(r.c16 + 0.5) < 1e-2
        )
        if out is not None:
            rep.files.extend(io.write_aht(r, out / "selftest_aht"))
        return ok, f"c = {r.c16:.5f}, residual {r.residual16:.2e}, halving gain {r.halving_gain:.2f}"

    check("DQ cycle average Hamiltonian", aht)

    def cycle_time():
        tc = build_dq_cycle_16(1.3e-6, 0.51e-6).cycle_time
        return abs(tc - 43.4e-6) <= 0.1e-6, f"{tc * 1e6:.2f} us"

    check("16-pulse cycle time", cycle_time)

    def identity_cycle():
        V = sequence_propagator(build_dq_cycle_16(1.3e-6, 0.51e-6), 4, np.zeros((16, 16), dtype=complex))
        d = float(np.max(np.abs(V - np.eye(16))))
        return d < 1e-12, f"{d:.2e}"

    check("uncoupled cycle is the identity", identity_cycle)
    return rep
