import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from mqnmr.hamiltonians import dq_hamiltonian, random_system, secular_dipolar_hamiltonian
from mqnmr.sequence import (
    DQ8_PHASES,
    PhaseWrapError,
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
from mqnmr.spinops import collective_op, rotation

from conftest import random_hermitian

DELTA, TP = 1.3e-6, 0.51e-6


def test_propagator_examples(rng):
    H = random_hermitian(3, rng)
    assert np.allclose(propagator(H, 0.0), np.eye(8))
    assert np.allclose(propagator(collective_op(3, "z"), 0.7), rotation(3, "z", 0.7), atol=1e-12)
    assert np.max(np.abs(propagator(H, 0.3) @ propagator(H, -0.3) - np.eye(8))) < 1e-12
    assert np.allclose(propagator(H, 0.3), expm(0.3j * H), atol=1e-12)


def test_propagator_rejects_non_hermitian():
    with pytest.raises(ValueError):
        propagator(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)


def test_phase_shifted_examples():
    H = dq_hamiltonian(random_system(3, 1.0, 2))
    U = propagator(H, 0.8)
    assert np.allclose(phase_shifted(U, 0.0), U)
    phi = 0.45
    H_phi = rotation(3, "z", -phi) @ H @ rotation(3, "z", phi)
    assert np.allclose(phase_shifted(U, phi), propagator(H_phi, 0.8), atol=1e-12)
    assert np.allclose(phase_shifted(H, np.pi / 2), -H, atol=1e-12)


def test_run_sequence_examples():
    rho0 = collective_op(3, "z")
    assert np.allclose(run_sequence(PulseSequence(), rho0), rho0)
    # exp(+i theta I_y) convention: (pi/2)_y maps I_z to -I_x
    y = PulseSequence((PulseEvent.pulse(np.pi / 2),))
    assert np.allclose(run_sequence(y, rho0), -collective_op(3, "x"), atol=1e-12)
    back = PulseSequence((PulseEvent.pulse(np.pi / 2), PulseEvent.pulse(-np.pi / 2)))
    assert np.max(np.abs(run_sequence(back, rho0) - rho0)) < 1e-12


def test_first_event_acts_first():
    seq = PulseSequence((PulseEvent.pulse(0.0, 0.3), PulseEvent.pulse(np.pi / 2, 0.5)))
    U = sequence_propagator(seq, 2)
    assert np.allclose(U, rotation(2, "y", 0.5) @ rotation(2, "x", 0.3), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(
    phases=st.lists(st.floats(0, 2 * np.pi), min_size=1, max_size=4),
    split=st.integers(0, 4),
    seed=st.integers(0, 1000),
)
def test_associativity(phases, split, seed):
    H = secular_dipolar_hamiltonian(random_system(3, 1.0, seed))
    events = []
    for p in phases:
        events += [PulseEvent.pulse(p, 0.7), PulseEvent.delay(0.2)]
    a = PulseSequence(tuple(events[:split]))
    b = PulseSequence(tuple(events[split:]))
    rho = random_hermitian(3, np.random.default_rng(seed))
    whole = run_sequence(a + b, rho, H)
    halves = run_sequence(b, run_sequence(a, rho, H), H)
    assert np.max(np.abs(whole - halves)) < 1e-12


def test_named_hamiltonians_and_blocks(rng):
    H1, H2 = random_hermitian(2, rng), random_hermitian(2, rng)
    V = propagator(random_hermitian(2, rng), 1.0)
    seq = PulseSequence(
        (PulseEvent.delay(0.3, "a"), PulseEvent.block(V, 1e-6), PulseEvent.delay(0.2, "b"))
    )
    U = sequence_propagator(seq, 2, {"a": H1, "b": H2})
    assert np.allclose(U, propagator(H2, 0.2) @ V @ propagator(H1, 0.3))
    assert seq.cycle_time == pytest.approx(0.5 + 1e-6)
    with pytest.raises(KeyError):
        sequence_propagator(seq, 2, {"a": H1})
    with pytest.raises(KeyError):
        sequence_propagator(PulseSequence((PulseEvent.delay(1.0),)), 2)


def test_event_validation():
    with pytest.raises(ValueError):
        PulseEvent.delay(-1.0)
    with pytest.raises(ValueError):
        PulseEvent("wait")
    with pytest.raises(ValueError):
        PulseEvent("block")


def test_finite_pulse_matches_ideal_without_internal_hamiltonian():
    p = PulseEvent.pulse(0.6, np.pi / 2, duration=TP)
    assert p.rf_amplitude * TP == pytest.approx(np.pi / 2)
    zero = np.zeros((8, 8), dtype=complex)
    U = sequence_propagator(PulseSequence((p,)), 3, zero)
    ideal = sequence_propagator(PulseSequence((PulseEvent.pulse(0.6, np.pi / 2),)), 3)
    assert np.allclose(U, ideal, atol=1e-12)


def test_cycle_structure_and_time():
    c8 = build_dq_cycle_8(DELTA, TP)
    assert c8.n_pulses == 8
    assert [e.phase for e in c8.events if e.kind == "pulse"] == list(DQ8_PHASES)
    assert c8.cycle_time == pytest.approx(12 * (DELTA + TP))
    c16 = build_dq_cycle_16(DELTA, TP)
    assert c16.n_pulses == 16
    assert abs(c16.cycle_time - 43.4e-6) <= 0.1e-6
    finite = build_dq_cycle_16(DELTA, TP, ideal=False)
    assert finite.cycle_time == pytest.approx(c16.cycle_time)
    second = [e.phase for e in c16.events if e.kind == "pulse"][8:]
    assert np.allclose(second, np.array(DQ8_PHASES) + np.pi)
    with pytest.raises(ValueError):
        build_dq_cycle_8(-1.0, TP)


def test_uncoupled_cycle_is_identity():
    zero = np.zeros((16, 16), dtype=complex)
    for seq in (build_dq_cycle_8(DELTA, TP), build_dq_cycle_16(DELTA, TP)):
        U = sequence_propagator(seq, 4, zero)
        assert np.max(np.abs(U - np.eye(16))) < 1e-12


def test_effective_hamiltonian_inverts_exp(rng):
    H = random_hermitian(3, rng)
    H *= 2.0 / np.linalg.norm(H, 2)
    assert np.allclose(effective_hamiltonian(propagator(H, 1.0), 1.0), H, atol=1e-10)
    assert np.allclose(effective_hamiltonian(np.eye(8, dtype=complex), 1.0), 0)


def test_effective_hamiltonian_errors():
    with pytest.raises(ValueError):
        effective_hamiltonian(2 * np.eye(2, dtype=complex), 1.0)
    with pytest.raises(PhaseWrapError):
        effective_hamiltonian(-np.eye(2, dtype=complex), 1.0)
    with pytest.raises(ValueError):
        effective_hamiltonian(np.eye(2, dtype=complex), 0.0)


def test_cycle_average_hamiltonian_converges_to_dq():
    s = random_system(4, 1.0, 0)
    residuals = []
    for eps in (4e3, 2e3, 1e3):
        seq = build_dq_cycle_16(DELTA, TP)
        U = sequence_propagator(seq, 4, secular_dipolar_hamiltonian(s.scaled(eps)))
        c, r = fit_scale(effective_hamiltonian(U, seq.cycle_time), dq_hamiltonian(s.scaled(eps)))
        assert c == pytest.approx(-0.5, abs=1e-3)
        residuals.append(r)
    assert residuals[0] / residuals[1] >= 3 and residuals[1] / residuals[2] >= 3


def test_fit_scale_exact():
    H = dq_hamiltonian(random_system(3, 1.0, 1))
    c, r = fit_scale(-0.5 * H, H)
    assert c == pytest.approx(-0.5) and r < 1e-14


def test_shifted_and_repeated():
    c = build_dq_cycle_8(DELTA, TP)
    s = c.shifted(0.3)
    assert all(a.phase + 0.3 == pytest.approx(b.phase) for a, b in zip(c.events, s.events) if a.kind == "pulse")
    assert len(c.repeated(3)) == 3 * len(c)
    rho = collective_op(2, "x")
    H = secular_dipolar_hamiltonian(random_system(2, 1e4, 0))
    U = sequence_propagator(c, 2, H)
    assert np.allclose(sequence_propagator(c.shifted(0.3), 2, H), phase_shifted(U, 0.3), atol=1e-12)
    assert np.allclose(conjugate(U, rho), U @ rho @ U.conj().T)
