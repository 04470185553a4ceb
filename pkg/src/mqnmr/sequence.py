"""
Propagators and pulse-program execution.

Sign convention throughout: a Hamiltonian ``H`` acting for time ``t`` gives
``U = exp(+i H t)``, and a state evolves as ``rho -> U rho U^dagger``. A pulse
of flip angle ``theta`` and phase ``p`` is ``R_z(-p) R_x(theta) R_z(p)``, the
same rotation generated by the RF term ``theta/t_p (cos p I_x + sin p I_y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import scipy.linalg

from .spinops import (
    Operator,
    collective_op,
    magnetic_numbers,
    num_spins,
    pulse_rotation,
    require_hermitian,
)

UNITARY_ATOL = 1e-10
# Eigenphases closer than this fraction of pi to the branch cut are ambiguous.
WRAP_MARGIN = 1e-6


class PhaseWrapError(ValueError):
    """Matrix logarithm is ambiguous because an eigenphase sits at +-pi."""


@dataclass(frozen=True)
class PulseEvent:
    """One element of a pulse program.

    ``kind`` is ``"pulse"``, ``"delay"`` or ``"block"``. Pulses carry a phase
    and flip angle and are instantaneous unless ``duration > 0``, in which
    case they evolve under the internal Hamiltonian plus the RF term. Delays
    evolve under the Hamiltonian named by ``hamiltonian``. Blocks apply a
    precomputed unitary (for example an idealized time-suspension cycle).
    """

    kind: str
    duration: float = 0.0
    phase: float = 0.0
    flip: float = 0.0
    hamiltonian: str = "internal"
    unitary: Operator | None = field(default=None, compare=False, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("pulse", "delay", "block"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if not self.duration >= 0:
            raise ValueError(f"negative duration {self.duration}")
        if self.kind == "block" and self.unitary is None:
            raise ValueError("block events need a unitary")

    @property
    def rf_amplitude(self) -> float:
        """RF nutation frequency (rad/s); zero for ideal pulses."""
        if self.kind != "pulse" or self.duration == 0:
            return 0.0
        return self.flip / self.duration

    @classmethod
    def pulse(cls, phase: float, flip: float = np.pi / 2, duration: float = 0.0, label: str = ""):
        return cls("pulse", duration=duration, phase=phase, flip=flip, label=label)

    @classmethod
    def delay(cls, duration: float, hamiltonian: str = "internal"):
        return cls("delay", duration=duration, hamiltonian=hamiltonian)

    @classmethod
    def block(cls, unitary: Operator, duration: float = 0.0, label: str = ""):
        return cls("block", duration=duration, unitary=unitary, label=label)


@dataclass(frozen=True)
class PulseSequence:
    events: tuple[PulseEvent, ...] = ()
    name: str = ""

    @property
    def cycle_time(self) -> float:
        return float(sum(e.duration for e in self.events))

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        return PulseSequence(self.events + other.events, f"{self.name}+{other.name}")

    def __len__(self):
        return len(self.events)

    def repeated(self, n: int) -> "PulseSequence":
        return PulseSequence(self.events * n, f"{self.name}x{n}")

    def shifted(self, phi: float) -> "PulseSequence":
        """Shift the phase of every pulse by ``phi``."""
        events = tuple(replace(e, phase=e.phase + phi) if e.kind == "pulse" else e for e in self.events)
        return PulseSequence(events, self.name)

    @property
    def n_pulses(self) -> int:
        return sum(e.kind == "pulse" for e in self.events)


def propagator(H: Operator, t: float) -> Operator:
    """``exp(i H t)`` by Hermitian eigendecomposition."""
    require_hermitian(H, "H")
    w, v = np.linalg.eigh(H)
    return (v * np.exp(1j * w * t)) @ v.conj().T


def conjugate(U: Operator, rho: Operator) -> Operator:
    return U @ rho @ U.conj().T


def phase_shifted(U: Operator, phi: float) -> Operator:
    """``R_z(-phi) U R_z(phi)``."""
    rz = np.exp(1j * phi * magnetic_numbers(num_spins(U)))
    return (rz.conj()[:, None] * U) * rz[None, :]


def _resolve(hamiltonians: Operator | Mapping[str, Operator] | None, name: str) -> Operator | None:
    if hamiltonians is None:
        return None
    if isinstance(hamiltonians, Mapping):
        if name not in hamiltonians:
            raise KeyError(f"unknown Hamiltonian reference {name!r}")
        return hamiltonians[name]
    if name != "internal":
        raise KeyError(f"unknown Hamiltonian reference {name!r}")
    return hamiltonians


def event_propagator(
    event: PulseEvent, N: int, hamiltonians: Operator | Mapping[str, Operator] | None
) -> Operator:
    if event.kind == "block":
        return event.unitary
    if event.kind == "pulse":
        if event.duration == 0:
            return pulse_rotation(N, event.phase, event.flip)
        H_int = _resolve(hamiltonians, event.hamiltonian)
        rf = event.rf_amplitude * (
            np.cos(event.phase) * collective_op(N, "x") + np.sin(event.phase) * collective_op(N, "y")
        )
        return propagator(rf if H_int is None else H_int + rf, event.duration)
    H = _resolve(hamiltonians, event.hamiltonian)
    if H is None:
        raise KeyError(f"delay needs Hamiltonian {event.hamiltonian!r} but none was given")
    return propagator(H, event.duration)


def sequence_propagator(
    seq: PulseSequence,
    N: int,
    hamiltonians: Operator | Mapping[str, Operator] | None = None,
) -> Operator:
    """Total propagator; the first event acts first (rightmost factor)."""
    U = np.eye(2**N, dtype=complex)
    cache: dict = {}
    for e in seq.events:
        key = (e.kind, e.duration, e.phase, e.flip, e.hamiltonian, id(e.unitary))
        if key not in cache:
            cache[key] = event_propagator(e, N, hamiltonians)
        U = cache[key] @ U
    return U


def run_sequence(
    seq: PulseSequence,
    rho0: Operator,
    hamiltonians: Operator | Mapping[str, Operator] | None = None,
) -> Operator:
    """Apply a pulse program to ``rho0`` and return ``U rho0 U^dagger``."""
    N = num_spins(rho0)
    return conjugate(sequence_propagator(seq, N, hamiltonians), rho0)


# Phases of the eight-pulse double-quantum cycle (x x xbar xbar xbar xbar x x).
DQ8_PHASES = (0.0, 0.0, np.pi, np.pi, np.pi, np.pi, 0.0, 0.0)


def build_dq_cycle_8(
    delta: float,
    t_p: float,
    ideal: bool = True,
    phase: float = 0.0,
    flip: float = np.pi / 2,
    hamiltonian: str = "internal",
) -> PulseSequence:
    """Eight pi/2 pulses with the delay pattern D/2 P D' P D P D' P ... P D/2.

    ``D' = 2 D + t_p``. With ``ideal=True`` pulses are instantaneous and
    their width is absorbed into the neighbouring delays, which keeps the
    pulse-centre timing (and the cycle time ``12 (D + t_p)``) unchanged.
    The zeroth-order average of the secular dipolar Hamiltonian over this
    cycle is ``-1/2`` times the DQ Hamiltonian.
    """
    if delta <= 0 or t_p < 0:
        raise ValueError(f"invalid timings delta={delta}, t_p={t_p}")
    long_gap = 2 * delta + t_p
    if ideal:
        edge, short, long_, width = (delta + t_p) / 2, delta + t_p, long_gap + t_p, 0.0
    else:
        edge, short, long_, width = delta / 2, delta, long_gap, t_p
    gaps = [long_, short, long_, short, long_, short, long_]
    events = [PulseEvent.delay(edge, hamiltonian)]
    for k, p in enumerate(DQ8_PHASES):
        events.append(PulseEvent.pulse(p + phase, flip, width))
        if k < len(gaps):
            events.append(PulseEvent.delay(gaps[k], hamiltonian))
    events.append(PulseEvent.delay(edge, hamiltonian))
    return PulseSequence(tuple(events), "dq8")


def build_dq_cycle_16(
    delta: float,
    t_p: float,
    ideal: bool = True,
    flip: float = np.pi / 2,
    hamiltonian: str = "internal",
) -> PulseSequence:
    """The eight-pulse cycle followed by a copy phase shifted by pi."""
    first = build_dq_cycle_8(delta, t_p, ideal, 0.0, flip, hamiltonian)
    second = build_dq_cycle_8(delta, t_p, ideal, np.pi, flip, hamiltonian)
    return PulseSequence(first.events + second.events, "dq16")


def effective_hamiltonian(U: Operator, t_c: float) -> Operator:
    """Principal-branch average Hamiltonian ``-i log(U) / t_c``.

    Uses the complex Schur form, which is diagonal for a unitary, so the
    eigenvectors are orthonormal and the result is Hermitian.
    """
    if t_c <= 0:
        raise ValueError("cycle time must be positive")
    dev = np.max(np.abs(U @ U.conj().T - np.eye(U.shape[0])))
    if dev > UNITARY_ATOL:
        raise ValueError(f"U is not unitary (deviation {dev:.3g})")
    T, Z = scipy.linalg.schur(U, output="complex")
    phases = np.angle(np.diag(T))
    if np.any(np.abs(phases) > np.pi * (1 - WRAP_MARGIN)):
        raise PhaseWrapError("eigenphase at the branch cut; shorten the cycle or weaken couplings")
    H = (Z * (phases / t_c)) @ Z.conj().T
    return (H + H.conj().T) / 2


def fit_scale(H_bar: Operator, H_ref: Operator) -> tuple[float, float]:
    """Least-squares ``c`` in ``H_bar ~ c H_ref`` and the relative residual."""
    c = float(np.vdot(H_ref, H_bar).real / np.vdot(H_ref, H_ref).real)
    resid = np.linalg.norm(H_bar - c * H_ref) / np.linalg.norm(c * H_ref)
    return c, float(resid)
