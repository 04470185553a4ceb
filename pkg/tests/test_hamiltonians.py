import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mqnmr.coherence import decompose_block
from mqnmr.hamiltonians import (
    CAF2_SPACING,
    GAMMA_19F,
    SpinSystem,
    chain_system,
    couplings_from_geometry,
    dipolar_constant,
    dq_hamiltonian,
    dq_hamiltonian_xform,
    dq_part_xbasis,
    random_system,
    secular_dipolar_hamiltonian,
)
from mqnmr.spinops import collective_op, rotation, single_spin_op


def comm(a, b):
    return a @ b - b @ a


def test_geometry_along_field_is_negative():
    s = couplings_from_geometry([[0, 0, 0], [0, 0, 1]])
    assert s.couplings[0, 1] == pytest.approx(-2.0)
    assert s.metadata["K"] == 1.0


def test_geometry_perpendicular_is_plus_one():
    s = couplings_from_geometry([[0, 0, 0], [2, 0, 0]], field_axis=(0, 0, 5))
    assert s.couplings[0, 1] == pytest.approx(1 / 8)


def test_geometry_magic_angle():
    theta = np.arccos(1 / np.sqrt(3))
    s = couplings_from_geometry([[0, 0, 0], [np.sin(theta), 0, np.cos(theta)]])
    assert abs(s.couplings[0, 1]) < 1e-12


def test_geometry_errors():
    with pytest.raises(ValueError):
        couplings_from_geometry([[0, 0, 0], [0, 0, 0]])
    with pytest.raises(ValueError):
        couplings_from_geometry([[0, 0, 0], [1, 0, 0]], field_axis=(0, 0, 0))
    with pytest.raises(ValueError):
        couplings_from_geometry([[0, 0, 0]])


def test_physical_units_constant():
    K = dipolar_constant(GAMMA_19F)
    s = couplings_from_geometry([[0, 0, 0], [CAF2_SPACING, 0, 0]], gamma=GAMMA_19F)
    assert s.couplings[0, 1] == pytest.approx(K / CAF2_SPACING**3)
    # about 2.6 kHz for fluorine at the CaF2 spacing
    assert s.couplings[0, 1] / (2 * np.pi) == pytest.approx(2.6e3, rel=0.05)
    assert s.metadata["K"] == K


def test_chain_nearest_neighbour_dominates():
    d = chain_system(4).couplings
    assert d[0, 1] == pytest.approx(8 * d[0, 2])


def test_spin_system_validation():
    with pytest.raises(ValueError):
        SpinSystem(np.array([[0, 1], [2, 0]]))
    with pytest.raises(ValueError):
        SpinSystem(np.array([[1, 1], [1, 0]]))
    with pytest.raises(ValueError):
        SpinSystem(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        SpinSystem(np.array([[0, np.inf], [np.inf, 0]]))
    assert SpinSystem(np.zeros((1, 1))).N == 1


def test_single_spin_hamiltonians_vanish():
    s = SpinSystem(np.zeros((1, 1)))
    for build in (dq_hamiltonian, dq_hamiltonian_xform, secular_dipolar_hamiltonian):
        assert not np.any(build(s))


def test_dq_two_spin_block():
    d = 0.8
    H = dq_hamiltonian(SpinSystem(np.array([[0, d], [d, 0]])))
    expected = np.zeros((4, 4))
    expected[0, 3] = expected[3, 0] = d  # |uu> <-> |dd>
    assert np.allclose(H, expected)


def test_dq_phase_splitting_under_z_rotation():
    s = random_system(3, 1.0, 7)
    N = 3
    raise_part = sum(
        d * single_spin_op(N, i, "+") @ single_spin_op(N, j, "+") for i, j, d in s.pairs()
    )
    lower_part = raise_part.conj().T
    H = dq_hamiltonian(s)
    assert np.allclose(H, raise_part + lower_part)
    for phi in (0.3, 1.1, 2.9):
        R = rotation(N, "z", phi)
        rotated = R.conj().T @ H @ R
        assert np.allclose(rotated, np.exp(-2j * phi) * raise_part + np.exp(2j * phi) * lower_part, atol=1e-12)


def test_dq_x_rotation_orders():
    H = dq_hamiltonian(random_system(3, 1.0, 3))
    parts = decompose_block(H, "x")
    assert set(n for n, p in parts.items() if np.linalg.norm(p) > 1e-12) == {-2, 0, 2}
    for phi in (0.4, 2.0):
        R = rotation(3, "x", phi)
        rotated = R.conj().T @ H @ R
        expected = sum(np.exp(1j * n * phi) * parts[n] for n in (-2, 0, 2))
        assert np.allclose(rotated, expected, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_xform_equals_zform(seed):
    s = random_system(3, 1.0, seed)
    assert np.linalg.norm(dq_hamiltonian(s) - dq_hamiltonian_xform(s)) < 1e-12


def test_x_basis_dq_coefficient_is_minus_half():
    s = random_system(4, 1.0, 11)
    parts = decompose_block(dq_hamiltonian(s), "x")
    dq_x = parts[2] + parts[-2]
    assert np.linalg.norm(dq_x + 0.5 * dq_part_xbasis(s)) < 1e-12
    c = np.vdot(dq_part_xbasis(s), dq_x).real / np.vdot(dq_part_xbasis(s), dq_part_xbasis(s)).real
    assert c == pytest.approx(-0.5, abs=1e-12)


def test_secular_commutes_with_iz_only():
    s = random_system(3, 1.0, 5)
    H = secular_dipolar_hamiltonian(s)
    assert np.max(np.abs(comm(H, collective_op(3, "z")))) < 1e-12
    assert np.linalg.norm(comm(H, collective_op(3, "x"))) > 1e-3


def test_secular_two_spin_eigenvalues():
    d = 1.7
    H = secular_dipolar_hamiltonian(SpinSystem(np.array([[0, d], [d, 0]])))
    assert np.allclose(np.sort(np.linalg.eigvalsh(H)), np.sort([d / 2, d / 2, -d, 0]), atol=1e-12)


def test_hamiltonians_hermitian():
    s = random_system(4, 2.0, 0)
    for build in (dq_hamiltonian, dq_hamiltonian_xform, secular_dipolar_hamiltonian):
        H = build(s)
        assert np.allclose(H, H.conj().T)


def test_scaled_system():
    s = random_system(3, 1.0, 0)
    assert np.allclose(dq_hamiltonian(s.scaled(0.5)), 0.5 * dq_hamiltonian(s))
