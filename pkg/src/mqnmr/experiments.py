"""
End-to-end multiple-quantum experiments.

The prepared state is ``rho_s = U (sum_i I_z^i) U^dagger`` where ``U`` is
either ``exp(i H_eff tau)`` with ``H_eff = dq_scale * H_DQ`` (``prep="ideal"``)
or the propagator of ``loops`` repetitions of the sixteen-pulse cycle acting
under the secular dipolar Hamiltonian (``prep="cycle"``). The default
``dq_scale = -1/2`` is the zeroth-order average Hamiltonian of that cycle, so
the two preparations describe the same experiment.

Measured signals:

- 1D, basis b: ``S(phi) = Tr[R_b(-phi) rho_s R_b(phi) rho_s]``
- 2D: ``S(phi, beta) = Tr[R_z(-beta) R_x(-phi) A R_x(phi) R_z(beta) B]`` with
  ``A = B = rho_s`` for the correlation experiment. The decay experiment
  uses ``A = V rho_s V^dagger`` (``V = exp(i H_dd t)``) and ``B = rho_s``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import curve_fit

from . import coherence as coh
from .hamiltonians import SpinSystem, dq_hamiltonian, secular_dipolar_hamiltonian
from .parallel import parallel_map
from .sequence import (
    PulseEvent,
    PulseSequence,
    build_dq_cycle_8,
    build_dq_cycle_16,
    conjugate,
    effective_hamiltonian,
    fit_scale,
    phase_shifted,
    propagator,
    run_sequence,
    sequence_propagator,
)
from .spinops import Operator, collective_op, magnetic_numbers, rotation

log = logging.getLogger(__name__)

DEFAULT_DQ_SCALE = -0.5
SIGNAL_IMAG_TOL = 1e-12


@dataclass(frozen=True)
class Timing:
    """Pulse spacing ``delta`` and pi/2 pulse width ``t_p`` in seconds."""

    delta: float = 1.3e-6
    t_p: float = 0.51e-6

    @property
    def cycle_time(self) -> float:
        """Duration of the sixteen-pulse cycle, ``24 (delta + t_p)``."""
        return 24 * (self.delta + self.t_p)


DEFAULT_TIMING = Timing()


@dataclass
class Preparation:
    """How the double-quantum preparation propagator is produced."""

    sys: SpinSystem
    tau: float
    loops: int | None = None
    prep: str = "ideal"
    dq_scale: float = DEFAULT_DQ_SCALE
    timing: Timing = DEFAULT_TIMING

    def __post_init__(self):
        if self.prep not in ("ideal", "cycle"):
            raise ValueError(f"unknown preparation {self.prep!r}")
        if self.tau < 0:
            raise ValueError("preparation time must be non-negative")
        if self.prep == "cycle" and self.loops is None:
            raise ValueError("cycle preparation needs an integer loop count")
        self._H_eff = self.dq_scale * dq_hamiltonian(self.sys)
        self._H_dd = secular_dipolar_hamiltonian(self.sys)
        self._cycle = build_dq_cycle_16(self.timing.delta, self.timing.t_p, ideal=True)
        self._U = self.propagator(0.0)

    @classmethod
    def from_loops(cls, sys: SpinSystem, loops: int, **kw) -> "Preparation":
        timing = kw.get("timing", DEFAULT_TIMING)
        return cls(sys, loops * timing.cycle_time, loops=loops, **kw)

    @property
    def N(self) -> int:
        return self.sys.N

    @property
    def H_eff(self) -> Operator:
        return self._H_eff

    @property
    def H_dd(self) -> Operator:
        return self._H_dd

    @property
    def U(self) -> Operator:
        return self._U

    def propagator(self, phi: float = 0.0) -> Operator:
        """Preparation propagator with every phase advanced by ``phi``.

        For the pulse cycle this shifts each pulse phase; for the ideal
        Hamiltonian it rotates ``H_eff`` about z. Both equal
        ``R_z(-phi) U R_z(phi)``.
        """
        if self.prep == "ideal":
            return propagator(phase_shifted(self._H_eff, phi), self.tau)
        seq = self._cycle.shifted(phi).repeated(self.loops)
        return sequence_propagator(seq, self.N, self._H_dd)

    def state(self) -> Operator:
        return conjugate(self._U, collective_op(self.N, "z"))

    def echo(self) -> dict[str, Any]:
        return {
            "tau": self.tau,
            "loops": self.loops,
            "prep": self.prep,
            "dq_scale": self.dq_scale,
            "delta": self.timing.delta,
            "t_p": self.timing.t_p,
            "cycle_time": self.timing.cycle_time,
        }


@dataclass
class SpinCountFit:
    sigma: float
    amplitude: float
    residual: float
    basis: str
    orders_used: list[int] = field(default_factory=list)

    @property
    def n_eff(self) -> float:
        return 2 * self.sigma**2


@dataclass
class ExperimentResult:
    """Signal, spectrum and provenance of one experiment."""

    kind: str
    signal: NDArray
    phases: NDArray | tuple[NDArray, NDArray]
    spectrum: coh.CoherenceSpectrum | None = None
    map2d: NDArray | None = None
    x_orders: NDArray | None = None
    z_orders: NDArray | None = None
    tau: float = 0.0
    loops: int | None = None
    config: dict[str, Any] = field(default_factory=dict)
    fit: SpinCountFit | None = None
    total: float = 0.0
    checks: dict[str, float] = field(default_factory=dict)


def _check_real(signal: NDArray, scale: float) -> float:
    resid = float(np.max(np.abs(np.imag(signal)))) / max(abs(scale), 1e-300)
    if resid > SIGNAL_IMAG_TOL:
        log.warning("signal imaginary residue %.3g exceeds tolerance", resid)
    return resid


def network_sequence(prep: Preparation, basis: str, phi: float) -> tuple[PulseSequence, dict]:
    """The encoding network for one phase step.

    Order of events: phase-shifted preparation, (pi/2)_y (phase shifted by
    ``phi`` too in the x experiment), the time-suspension block taken as the
    identity, (pi/2)_{-y}, and the refocusing period ``U^dagger``.
    """
    N = prep.N
    hams: dict[str, Operator] = {"dipolar": prep.H_dd}
    events: list[PulseEvent] = []
    if prep.prep == "ideal":
        hams["dq_phi"] = phase_shifted(prep.H_eff, phi)
        # A pi/2 phase shift reverses the DQ Hamiltonian exactly.
        hams["dq_refocus"] = phase_shifted(prep.H_eff, np.pi / 2)
        events.append(PulseEvent.delay(prep.tau, "dq_phi"))
    else:
        cyc = prep._cycle.shifted(phi).repeated(prep.loops)
        events.extend(
            PulseEvent("delay", e.duration, hamiltonian="dipolar") if e.kind == "delay" else e
            for e in cyc.events
        )
    first_phase = np.pi / 2 + (phi if basis == "x" else 0.0)
    events.append(PulseEvent.pulse(first_phase, np.pi / 2, label="encode"))
    events.append(PulseEvent.block(np.eye(2**N, dtype=complex), label="time-suspension"))
    events.append(PulseEvent.pulse(3 * np.pi / 2, np.pi / 2, label="readout"))
    if prep.prep == "ideal":
        events.append(PulseEvent.delay(prep.tau, "dq_refocus"))
    else:
        events.append(PulseEvent.block(prep.U.conj().T, duration=prep.tau, label="refocus"))
    return PulseSequence(tuple(events), f"network-{basis}"), hams


def network_signal(prep: Preparation, basis: str, phi: float) -> complex:
    seq, hams = network_sequence(prep, basis, phi)
    Iz = collective_op(prep.N, "z")
    rho_f = run_sequence(seq, Iz, hams)
    return complex(np.sum(rho_f * Iz.T))


def run_1d(
    prep: Preparation,
    basis: str = "z",
    mode: str = "collapsed",
    K: int = 0,
    n_max: int | None = None,
    turns: int = 1,
    workers: int = 1,
) -> ExperimentResult:
    """One-dimensional coherence encoding in the z or x basis."""
    if basis not in ("x", "z"):
        raise ValueError(f"basis must be x or z, got {basis!r}")
    if mode not in ("collapsed", "network"):
        raise ValueError(f"unknown mode {mode!r}")
    N = prep.N
    n_max = N if n_max is None else n_max
    K = K or coh.default_samples(n_max)
    phis = coh.phase_grid(K, turns)
    rho_s = prep.state()
    total = float(np.trace(rho_s @ rho_s).real)

    if mode == "collapsed":
        def point(phi):
            return coh.correlation_signal(rho_s, rho_s, rotation(N, basis, phi))
    else:
        def point(phi):
            return network_signal(prep, basis, phi)

    signal = np.array(parallel_map(point, phis, workers))
    coeffs = coh.spectrum_from_signal(signal, K, n_max, turns)
    orders = np.arange(-n_max, n_max + 1)
    coh.check_reconstruction(coeffs, orders, total, point, K)
    spec = coh.CoherenceSpectrum(
        orders, coeffs.real, basis, total, {"method": mode, "K": K, "turns": turns}
    )
    result = ExperimentResult(
        kind=f"oned-{basis}",
        signal=signal.real,
        phases=phis,
        spectrum=spec,
        tau=prep.tau,
        loops=prep.loops,
        total=total,
        config={**prep.echo(), "basis": basis, "mode": mode, "K": K, "n_max": n_max, "turns": turns},
    )
    result.checks["signal_imag"] = _check_real(signal, total)
    result.checks["spectrum_imag"] = float(np.max(np.abs(coeffs.imag))) / total
    return result


def _rz_phases(N: int, beta: float) -> NDArray[np.complex128]:
    return np.exp(1j * beta * magnetic_numbers(N))


def correlation_grid(
    A: Operator,
    B: Operator,
    phis: NDArray,
    betas: NDArray,
    swap: bool = False,
    workers: int = 1,
) -> NDArray[np.complex128]:
    """``S[k, l] = Tr[R_z(-b_l) R_x(-p_k) A R_x(p_k) R_z(b_l) B]``.

    With ``swap=True`` the rotations are applied in the reverse order with
    negated phases to the other factor, ``Tr[R_x(p) R_z(b) B R_z(-b) R_x(-p) A]``,
    which must give the same grid.
    """
    N = A.shape[0].bit_length() - 1
    rz = [_rz_phases(N, b) for b in betas]

    def row(phi):
        rx = rotation(N, "x", phi)
        if not swap:
            X = rx.conj().T @ A @ rx
            return np.array([np.sum((z.conj()[:, None] * X * z[None, :]) * B.T) for z in rz])
        out = []
        for z in rz:
            Y = rx @ (z[:, None] * B * z.conj()[None, :]) @ rx.conj().T
            out.append(np.sum(Y * A.T))
        return np.array(out)

    return np.array(parallel_map(row, phis, workers))


def map_from_grid(
    grid: NDArray, K_phi: int, K_beta: int, n_max: int, turns: int = 1
) -> NDArray[np.complex128]:
    """2D Fourier map with rows indexed by x order and columns by z order."""
    g = coh.fold_turns(coh.fold_turns(grid, K_phi, turns, axis=0), K_beta, turns, axis=1)
    coeffs = coh.snap_roundoff(np.fft.fft2(g) / (K_phi * K_beta), np.max(np.abs(g)))
    return coh.unfold_matrix(K_phi, n_max) @ coeffs @ coh.unfold_matrix(K_beta, n_max).T


def run_2d(
    prep: Preparation,
    K_phi: int = 0,
    K_beta: int = 0,
    n_max: int | None = None,
    turns: int = 1,
    workers: int = 1,
) -> ExperimentResult:
    """Two-dimensional x/z correlation experiment."""
    N = prep.N
    n_max = N if n_max is None else n_max
    K_phi = K_phi or coh.default_samples(n_max)
    K_beta = K_beta or coh.default_samples(n_max)
    coh.unfold_matrix(K_phi, n_max), coh.unfold_matrix(K_beta, n_max)
    rho_s = prep.state()
    total = float(np.trace(rho_s @ rho_s).real)
    phis, betas = coh.phase_grid(K_phi, turns), coh.phase_grid(K_beta, turns)
    grid = correlation_grid(rho_s, rho_s, phis, betas, workers=workers)
    cmap = map_from_grid(grid, K_phi, K_beta, n_max, turns)
    orders = np.arange(-n_max, n_max + 1)
    result = ExperimentResult(
        kind="twod",
        signal=grid.real,
        phases=(phis, betas),
        map2d=cmap.real,
        x_orders=orders,
        z_orders=orders,
        tau=prep.tau,
        loops=prep.loops,
        total=total,
        config={**prep.echo(), "K_phi": K_phi, "K_beta": K_beta, "n_max": n_max, "turns": turns},
    )
    result.checks["signal_imag"] = _check_real(grid, total)
    result.checks["map_imag"] = float(np.max(np.abs(cmap.imag))) / total
    result.checks["parseval"] = abs(cmap.sum().real - total) / total
    return result


def marginals(result: ExperimentResult) -> tuple[NDArray, NDArray]:
    """``(x spectrum, z spectrum)`` obtained by summing the 2D map."""
    return result.map2d.sum(axis=1), result.map2d.sum(axis=0)


@dataclass
class DecayResult:
    times: NDArray
    zq: NDArray
    zq_from_map: NDArray
    contributions: NDArray  # (time, x order) contributions to z order 0
    x_orders: NDArray
    auto_deviation: NDArray
    maps: list[NDArray]
    config: dict[str, Any]

    @property
    def zq_normalized(self) -> NDArray:
        return self.zq / self.zq[0]

    def contributions_normalized(self, rel_floor: float = 1e-6) -> dict[int, NDArray]:
        """Each x-order contribution divided by its own first value.

        Orders whose first value is below ``rel_floor`` of the zero-quantum
        signal are skipped, since they cannot be normalized.
        """
        out = {}
        for j, m in enumerate(self.x_orders):
            c0 = self.contributions[0, j]
            if abs(c0) > rel_floor * abs(self.zq[0]):
                out[int(m)] = self.contributions[:, j] / c0
        return out


def run_dipolar_decay(
    prep: Preparation,
    decay_times: Sequence[float],
    K_phi: int = 0,
    K_beta: int = 0,
    n_max: int | None = None,
    workers: int = 1,
) -> DecayResult:
    """Zero-quantum decay under the secular dipolar Hamiltonian.

    For every ``t`` the evolved state ``rho(t) = V rho_s V^dagger`` is
    correlated with the prepared ``rho_s``. The z zero-quantum value comes
    from a 1D z-phase scan; its x-order resolution from the 2D map at z
    order 0.
    """
    times = np.asarray(list(decay_times), dtype=float)
    if times.size == 0:
        raise ValueError("decay needs at least one time point")
    if np.any(times < 0):
        raise ValueError("decay times must be non-negative")
    N = prep.N
    n_max = N if n_max is None else n_max
    K_phi = K_phi or coh.default_samples(n_max)
    K_beta = K_beta or coh.default_samples(n_max)
    phis, betas = coh.phase_grid(K_phi), coh.phase_grid(K_beta)
    rho_s = prep.state()
    ref_spec = coh.block_spectrum(rho_s, "z").intensities
    zero = n_max

    zq, zq_map, contribs, auto_dev, maps = [], [], [], [], []
    for t in times:
        V = propagator(prep.H_dd, t)
        rho_t = conjugate(V, rho_s)
        scan = np.array([np.sum((z.conj()[:, None] * rho_t * z[None, :]) * rho_s.T) for z in (_rz_phases(N, b) for b in betas)])
        zq.append(coh.spectrum_from_signal(scan, K_beta, n_max)[zero].real)
        cmap = map_from_grid(correlation_grid(rho_t, rho_s, phis, betas, workers=workers), K_phi, K_beta, n_max)
        maps.append(cmap)
        contribs.append(cmap[:, zero].real)
        zq_map.append(cmap[:, zero].sum().real)
        auto_dev.append(np.max(np.abs(coh.block_spectrum(rho_t, "z").intensities - ref_spec)))
    return DecayResult(
        times=times,
        zq=np.array(zq),
        zq_from_map=np.array(zq_map),
        contributions=np.array(contribs),
        x_orders=np.arange(-n_max, n_max + 1),
        auto_deviation=np.array(auto_dev),
        maps=maps,
        config={**prep.echo(), "K_phi": K_phi, "K_beta": K_beta, "n_max": n_max, "decay_times": times.tolist()},
    )


def _gauss(n, amplitude, sigma):
    return amplitude * np.exp(-(n**2) / (2 * sigma**2))


def gaussian_fit(spectrum: coh.CoherenceSpectrum, parity: int | None = None) -> SpinCountFit:
    """Fit ``A exp(-n^2 / (2 sigma^2))`` to the populated-parity orders.

    ``parity`` defaults to even for the z basis and odd for the x basis;
    orders of the other parity are structural zeros and are left out.
    """
    if parity is None:
        parity = {"z": 0, "x": 1}.get(spectrum.axis)
        if parity is None:
            raise ValueError(f"no default parity for axis {spectrum.axis!r}")
    sel = spectrum.orders % 2 == parity
    n = spectrum.orders[sel].astype(float)
    y = spectrum.intensities[sel]
    significant = np.abs(y) > 1e-12 * abs(spectrum.total)
    if significant.sum() < 3:
        raise ValueError(f"degenerate spectrum: {int(significant.sum())} populated orders, need at least 3")
    w = np.clip(y, 0, None)
    sigma0 = max(np.sqrt(np.sum(n**2 * w) / np.sum(w)), 0.5)
    (amp, sigma), _ = curve_fit(_gauss, n, y, p0=[y.max(), sigma0], maxfev=10000)
    resid = float(np.linalg.norm(_gauss(n, amp, sigma) - y))
    return SpinCountFit(abs(float(sigma)), float(amp), resid, spectrum.axis, [int(k) for k in n])


def slope_fit(points: Sequence[tuple[float, float]]) -> float:
    """Unweighted least-squares slope of ``N_x`` against ``N_z``."""
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[0] < 2:
        raise ValueError("need at least two (N_z, N_x) points")
    x, y = p[:, 0], p[:, 1]
    sxx = np.sum((x - x.mean()) ** 2)
    if sxx == 0:
        raise ValueError("need at least two distinct N_z values")
    return float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)


@dataclass
class SweepRow:
    loops: int
    tau: float
    z: SpinCountFit
    x: SpinCountFit


@dataclass
class SweepResult:
    rows: list[SweepRow]
    slope: float
    spectra: list[tuple[ExperimentResult, ExperimentResult]]
    config: dict[str, Any]


def spin_count_sweep(
    sys: SpinSystem,
    loops: Sequence[int],
    K: int = 0,
    n_max: int | None = None,
    workers: int = 1,
    **prep_kw,
) -> SweepResult:
    """Gaussian spin counting in both bases over a list of loop counts."""
    rows, spectra = [], []
    for L in loops:
        prep = Preparation.from_loops(sys, L, **prep_kw)
        rz = run_1d(prep, "z", K=K, n_max=n_max, workers=workers)
        rx = run_1d(prep, "x", K=K, n_max=n_max, workers=workers)
        rz.fit, rx.fit = gaussian_fit(rz.spectrum), gaussian_fit(rx.spectrum)
        rows.append(SweepRow(L, prep.tau, rz.fit, rx.fit))
        spectra.append((rz, rx))
    slope = slope_fit([(r.z.n_eff, r.x.n_eff) for r in rows])
    cfg = {**spectra[0][0].config} if spectra else {}
    cfg.pop("tau", None), cfg.pop("loops", None), cfg.pop("basis", None)
    return SweepResult(rows, slope, spectra, {**cfg, "loops": list(loops)})


@dataclass
class AHTReport:
    c8: float
    residual8: float
    c16: float
    residual16: float
    residual16_half: float
    finite_residual8: float
    finite_residual16: float
    flip_residual8: float
    flip_residual16: float
    cycle_time16: float
    config: dict[str, Any]

    @property
    def halving_gain(self) -> float:
        return self.residual16 / self.residual16_half


def cycle_aht(
    sys: SpinSystem, timing: Timing, n_cycle: int = 16, ideal: bool = True, flip: float = np.pi / 2
) -> tuple[float, float, float]:
    """``(c, relative residual, cycle time)`` of the cycle's average Hamiltonian."""
    build = build_dq_cycle_16 if n_cycle == 16 else build_dq_cycle_8
    seq = build(timing.delta, timing.t_p, ideal=ideal, flip=flip)
    U = sequence_propagator(seq, sys.N, secular_dipolar_hamiltonian(sys))
    H_bar = effective_hamiltonian(U, seq.cycle_time)
    c, r = fit_scale(H_bar, dq_hamiltonian(sys))
    return c, r, seq.cycle_time


def run_aht_check(
    sys: SpinSystem, timing: Timing = DEFAULT_TIMING, flip_error: float = 0.02
) -> AHTReport:
    """Validate the eight- and sixteen-pulse cycles against the DQ Hamiltonian.

    Ideal pulses give the scale ``c`` and the residual (and its drop when
    couplings are halved). Finite-width pulses and a relative flip-angle
    error ``flip_error`` probe the compensation of the pi-shifted second half.
    """
    c8, r8, _ = cycle_aht(sys, timing, 8)
    c16, r16, tc = cycle_aht(sys, timing, 16)
    _, r16h, _ = cycle_aht(sys.scaled(0.5), timing, 16)
    _, f8, _ = cycle_aht(sys, timing, 8, ideal=False)
    _, f16, _ = cycle_aht(sys, timing, 16, ideal=False)
    flip = np.pi / 2 * (1 + flip_error)
    _, e8, _ = cycle_aht(sys, timing, 8, flip=flip)
    _, e16, _ = cycle_aht(sys, timing, 16, flip=flip)
    return AHTReport(
        c8, r8, c16, r16, r16h, f8, f16, e8, e16, tc,
        {"delta": timing.delta, "t_p": timing.t_p, "flip_error": flip_error},
    )
