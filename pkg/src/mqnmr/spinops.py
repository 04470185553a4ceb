"""
Spin-1/2 operators on N-spin Hilbert spaces.

Conventions
-----------
- hbar = 1. Single-spin ``I_z`` has eigenvalues +1/2 (``|up>``, index 0)
  and -1/2 (``|down>``, index 1). ``I+ |down> = |up>``.
- Spin 0 is the most significant factor of the Kronecker product, so basis
  index ``k`` has spin ``i`` down iff bit ``N-1-i`` of ``k`` is set.
- Rotations follow ``R_a(phi) = exp(+i phi sum_i I_a^i)``.

Operators are plain complex ``numpy`` arrays of shape ``(2**N, 2**N)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np
from numpy.typing import NDArray

Operator = NDArray[np.complex128]

#: Largest spin count accepted by the constructors. Adjust with :func:`set_max_spins`.
DEFAULT_MAX_SPINS = 12
MAX_SPINS = DEFAULT_MAX_SPINS
#: Largest spin count for the explicit 4**N product-basis projection.
MAX_WEIGHT_SPINS = 8

HERMITIAN_ATOL = 1e-12

_SINGLE = {
    "x": np.array([[0, 0.5], [0.5, 0]], dtype=complex),
    "y": np.array([[0, -0.5j], [0.5j, 0]], dtype=complex),
    "z": np.array([[0.5, 0], [0, -0.5]], dtype=complex),
    "+": np.array([[0, 1], [0, 0]], dtype=complex),
    "-": np.array([[0, 0], [1, 0]], dtype=complex),
}

# Pauli matrices (not halved) label the product basis.
PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
PAULI_LABELS = ("i", "x", "y", "z")


class SpinCountError(ValueError):
    """Requested spin count exceeds the configured memory cap."""


def set_max_spins(n: int) -> None:
    global MAX_SPINS
    if n < 1:
        raise ValueError("max spin count must be positive")
    MAX_SPINS = int(n)


def check_spin_count(N: int) -> None:
    if N < 1:
        raise ValueError(f"need at least one spin, got N={N}")
    if N > MAX_SPINS:
        raise SpinCountError(
            f"N={N} exceeds the memory cap of {MAX_SPINS} spins; raise it with set_max_spins()"
        )


def num_spins(op: np.ndarray) -> int:
    dim = op.shape[0]
    N = dim.bit_length() - 1
    if op.ndim != 2 or op.shape[1] != dim or 2**N != dim:
        raise ValueError(f"operator shape {op.shape} is not 2^N x 2^N")
    return N


def is_hermitian(op: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    return bool(np.allclose(op, op.conj().T, rtol=0.0, atol=atol))


def require_hermitian(op: np.ndarray, name: str = "operator") -> None:
    if not is_hermitian(op):
        dev = np.max(np.abs(op - op.conj().T))
        raise ValueError(f"{name} is not Hermitian (max deviation {dev:.3g})")


@lru_cache(maxsize=None)
def _single_spin_op(N: int, i: int, axis: str) -> Operator:
    factors = [np.eye(2, dtype=complex)] * N
    factors[i] = _SINGLE[axis]
    op = reduce(np.kron, factors)
    op.setflags(write=False)
    return op


def single_spin_op(N: int, i: int, axis: str) -> Operator:
    """Embed the single-spin operator ``I_axis`` of spin ``i`` into N spins.

    ``axis`` is one of ``x``, ``y``, ``z``, ``+``, ``-``. The returned array
    is read-only and cached.
    """
    check_spin_count(N)
    if not 0 <= i < N:
        raise IndexError(f"spin index {i} out of range for N={N}")
    if axis not in _SINGLE:
        raise ValueError(f"unknown axis {axis!r}")
    return _single_spin_op(N, i, axis)


@lru_cache(maxsize=None)
def _collective_op(N: int, axis: str) -> Operator:
    op = sum(_single_spin_op(N, i, axis) for i in range(N))
    op.setflags(write=False)
    return op


def collective_op(N: int, axis: str) -> Operator:
    """Return ``sum_i I_axis^i``."""
    check_spin_count(N)
    if axis not in ("x", "y", "z", "+", "-"):
        raise ValueError(f"unknown axis {axis!r}")
    return _collective_op(N, axis)


@lru_cache(maxsize=None)
def magnetic_numbers(N: int) -> NDArray[np.float64]:
    """Diagonal of collective ``I_z`` in the computational basis."""
    k = np.arange(2**N)
    down = np.array([(k >> (N - 1 - i)) & 1 for i in range(N)]).sum(axis=0)
    m = (N - 2 * down) / 2.0
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def _collective_eigh(N: int, axis: str):
    w, v = np.linalg.eigh(_collective_op(N, axis))
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def rotation(N: int, axis: str, angle: float) -> Operator:
    """Collective rotation ``exp(i * angle * sum_i I_axis^i)``."""
    check_spin_count(N)
    if not np.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    if axis == "z":
        return np.diag(np.exp(1j * angle * magnetic_numbers(N)))
    if axis not in ("x", "y"):
        raise ValueError(f"unknown rotation axis {axis!r}")
    w, v = _collective_eigh(N, axis)
    return (v * np.exp(1j * angle * w)) @ v.conj().T


def pulse_rotation(N: int, phase: float, flip: float) -> Operator:
    """Ideal RF pulse: rotation by ``flip`` about the transverse axis at ``phase``.

    Phase 0 is x and phase pi/2 is y, i.e. the pulse equals
    ``R_z(-phase) R_x(flip) R_z(phase)``.
    """
    rz = np.exp(1j * phase * magnetic_numbers(N))
    rx = rotation(N, "x", flip)
    return (rz.conj()[:, None] * rx) * rz[None, :]


@dataclass(frozen=True)
class PauliProductTerm:
    """One product-basis element ``coefficient * P_{a_0} x ... x P_{a_{N-1}}``.

    Factors are Pauli matrices (eigenvalues +-1), so unit-coefficient terms
    satisfy ``Tr[P_a^dagger P_b] = 2**N delta_ab``.
    """

    factors: tuple[str, ...]
    coefficient: complex = 1.0

    @property
    def weight(self) -> int:
        return sum(f != "i" for f in self.factors)

    def matrix(self) -> Operator:
        return self.coefficient * reduce(np.kron, [PAULI[f] for f in self.factors])


def pauli_terms(N: int):
    """Iterate over all 4**N unit-coefficient product terms."""
    for labels in itertools.product(PAULI_LABELS, repeat=N):
        yield PauliProductTerm(labels)


def pauli_coefficients(rho: np.ndarray) -> NDArray[np.complex128]:
    """Coefficients ``c_a = Tr[P_a rho] / 2**N`` as an array of shape ``(4,)*N``.

    Axis ``k`` indexes the factor on spin ``k`` in the order ``i, x, y, z``.
    The projection is carried out one spin at a time, which is the same
    trace-orthogonal projection as summing over all terms explicitly.
    """
    N = num_spins(rho)
    if N > MAX_WEIGHT_SPINS:
        raise SpinCountError(
            f"product-basis decomposition limited to N <= {MAX_WEIGHT_SPINS}, got N={N}"
        )
    # Interleave row/column indices per spin: axis k of t is (r_k, c_k) -> 2*r_k + c_k.
    t = np.asarray(rho, dtype=complex).reshape((2,) * (2 * N))
    t = t.transpose([ax for k in range(N) for ax in (k, N + k)]).reshape((4,) * N)
    # M[a, 2r + c] = (P_a)_{c r} / 2, i.e. Tr[P_a rho] / 2 restricted to one spin.
    M = np.stack([PAULI[label].T.reshape(4) for label in PAULI_LABELS]) / 2.0
    for k in range(N):
        t = np.moveaxis(np.tensordot(M, t, axes=([1], [k])), 0, k)
    return t


def pauli_weight_decompose(rho: np.ndarray) -> dict[int, float]:
    """Distribute ``Tr[rho^2]`` over product-operator weight.

    ``intensity(w) = 2**N * sum_{weight(a) = w} |c_a|^2`` with ``c_a`` from
    :func:`pauli_coefficients`, so the intensities sum to ``Tr[rho^2]``.
    Weight counts the spins carrying a non-identity factor.
    """
    require_hermitian(rho, "rho")
    N = num_spins(rho)
    c = pauli_coefficients(rho)
    nonid = np.array([0, 1, 1, 1])
    weight = sum(
        nonid.reshape([4 if j == k else 1 for j in range(N)]) for k in range(N)
    )
    mass = (2**N) * np.abs(c) ** 2
    return {w: float(mass[weight == w].sum()) for w in range(N + 1)}
