"""
Coherence-order decomposition relative to the z, x or y axis.

Two independent routes are provided. :func:`decompose_block` masks matrix
elements in the eigenbasis of the collective axis operator; the x and y
eigenbases are reached by conjugating with a collective pi/2 rotation, so
there is one masking code path. :func:`decompose_phase_ft` simulates the
phase-encoding measurement ``S(phi) = Tr[R(-phi) rho R(phi) rho]`` with
explicit rotation operators and Fourier transforms it.

Order ``n`` of an element ``<a|rho|b>`` is ``M(b) - M(a)``, so that
``R(-phi) rho_n R(phi) = exp(i n phi) rho_n`` with ``R(phi) = exp(i phi I)``.
Intensities are ``Tr[rho_n rho_n^dagger]`` and sum to ``Tr[rho^2]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .parallel import parallel_map
from .spinops import (
    Operator,
    collective_op,
    magnetic_numbers,
    num_spins,
    require_hermitian,
    rotation,
)

PARSEVAL_RTOL = 1e-10
ALIAS_RTOL = 1e-9
# Fourier coefficients below this fraction of the largest sample are round-off.
ROUNDOFF_RTOL = 1e-13


class AliasingError(ValueError):
    """Too few phase samples for the coherence orders present."""


@dataclass
class CoherenceSpectrum:
    """Intensity per coherence order.

    ``total`` is ``Tr[rho^2]`` (or the zero-phase signal) of the analysed
    state; ``intensities.sum()`` should reproduce it.
    """

    orders: NDArray[np.int64]
    intensities: NDArray[np.float64]
    axis: str
    total: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.orders = np.asarray(self.orders, dtype=int)
        self.intensities = np.asarray(self.intensities, dtype=float)

    @property
    def n_max(self) -> int:
        return int(self.orders.max())

    def intensity(self, n: int) -> float:
        hit = np.nonzero(self.orders == n)[0]
        return float(self.intensities[hit[0]]) if hit.size else 0.0

    def as_dict(self) -> dict[int, float]:
        return {int(n): float(v) for n, v in zip(self.orders, self.intensities)}

    def normalized(self) -> NDArray[np.float64]:
        return self.intensities / self.total

    def parity_mass(self, parity: int) -> float:
        """Summed intensity at orders with ``n % 2 == parity``."""
        return float(self.intensities[self.orders % 2 == parity].sum())

    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.intensities - self.intensities[::-1])))


@lru_cache(maxsize=None)
def order_matrix(N: int) -> NDArray[np.int64]:
    """``O[a, b] = M(b) - M(a)`` in the z eigenbasis."""
    m = magnetic_numbers(N)
    O = np.rint(m[None, :] - m[:, None]).astype(int)
    O.setflags(write=False)
    return O


@lru_cache(maxsize=None)
def axis_frame(N: int, axis: str) -> Operator:
    """Unitary ``P`` with ``P I_z P^dagger = I_axis`` (collective operators).

    ``P = R_y(-pi/2)`` for x and ``R_x(pi/2)`` for y; identity for z.
    """
    if axis == "z":
        P = np.eye(2**N, dtype=complex)
    elif axis == "x":
        P = rotation(N, "y", -np.pi / 2)
    elif axis == "y":
        P = rotation(N, "x", np.pi / 2)
    else:
        raise ValueError(f"unknown axis {axis!r}")
    P.setflags(write=False)
    return P


def decompose_block(rho: Operator, axis: str = "z") -> dict[int, Operator]:
    """Split ``rho`` into coherence-order components relative to ``axis``.

    The components sum to ``rho`` and each picks up ``exp(i n phi)`` under
    ``R_axis(-phi) . R_axis(phi)``. Keys run from ``-N`` to ``N``.
    """
    require_hermitian(rho, "rho")
    return _components(rho, axis)


def _components(A: Operator, axis: str) -> dict[int, Operator]:
    N = num_spins(A)
    O = order_matrix(N)
    P = axis_frame(N, axis)
    sigma = A if axis == "z" else P.conj().T @ A @ P
    out = {}
    for n in range(-N, N + 1):
        block = np.where(O == n, sigma, 0)
        out[n] = block if axis == "z" else P @ block @ P.conj().T
    return out


def block_spectrum(rho: Operator, axis: str = "z") -> CoherenceSpectrum:
    """Coherence intensities ``Tr[rho_n rho_n^dagger]`` by direct projection."""
    require_hermitian(rho, "rho")
    N = num_spins(rho)
    O = order_matrix(N)
    P = axis_frame(N, axis)
    sigma = rho if axis == "z" else P.conj().T @ rho @ P
    mass = np.abs(sigma) ** 2
    orders = np.arange(-N, N + 1)
    intens = np.array([mass[O == n].sum() for n in orders])
    return CoherenceSpectrum(orders, intens, axis, float(np.trace(rho @ rho).real), {"method": "block"})


def cross_map(A: Operator, B: Operator) -> NDArray[np.complex128]:
    """Direct 2D order map ``c[m, n] = Tr[(A_m^x)_n^z B]``.

    Rows are x orders and columns z orders, both from ``-N`` to ``N``. Summing
    over rows gives ``Tr[A_n^z B]``; summing over columns gives
    ``Tr[A_m^x B]``.
    """
    N = num_spins(A)
    out = np.zeros((2 * N + 1, 2 * N + 1), dtype=complex)
    for m, A_m in _components(A, "x").items():
        for n, A_mn in _components(A_m, "z").items():
            out[m + N, n + N] = np.sum(A_mn * B.T)
    return out


def unfold_matrix(K: int, n_max: int) -> NDArray[np.float64]:
    """Map DFT bins of a length-K phase scan onto orders ``-n_max..n_max``.

    Bin ``n mod K`` carries order ``n``; when ``K == 2 n_max`` the shared
    Nyquist bin is split evenly between ``+n_max`` and ``-n_max``.
    """
    if K < 2 * n_max or K < 1:
        raise AliasingError(f"K={K} phase samples cannot resolve orders up to {n_max} (need K >= {2 * n_max})")
    W = np.zeros((2 * n_max + 1, K))
    for i, n in enumerate(range(-n_max, n_max + 1)):
        if K % 2 == 0 and abs(n) == K // 2 and n != 0:
            W[i, n % K] = 0.5
        else:
            W[i, n % K] = 1.0
    return W


def phase_grid(K: int, turns: int = 1) -> NDArray[np.float64]:
    """``K * turns`` phases in steps of ``2 pi / K``."""
    return 2 * np.pi * np.arange(K * turns) / K


def fold_turns(signal: NDArray, K: int, turns: int, axis: int = 0) -> NDArray:
    """Average repeated 2 pi turns of a phase scan into one turn."""
    signal = np.moveaxis(np.asarray(signal), axis, 0)
    folded = signal.reshape((turns, K) + signal.shape[1:]).mean(axis=0)
    return np.moveaxis(folded, 0, axis)


def spectrum_from_signal(
    signal: NDArray, K: int, n_max: int, turns: int = 1
) -> NDArray[np.complex128]:
    """Fourier coefficients ``I(n)`` with ``S(phi) = sum_n I(n) exp(i n phi)``."""
    s = fold_turns(signal, K, turns)
    coeffs = snap_roundoff(np.fft.fft(s) / K, np.max(np.abs(s)))
    return unfold_matrix(K, n_max) @ coeffs


def snap_roundoff(coeffs: NDArray, scale: float) -> NDArray[np.complex128]:
    """Zero real and imaginary parts below ``ROUNDOFF_RTOL * scale``."""
    tol = ROUNDOFF_RTOL * scale
    re, im = coeffs.real.copy(), coeffs.imag.copy()
    re[np.abs(re) < tol] = 0.0
    im[np.abs(im) < tol] = 0.0
    return re + 1j * im


def correlation_signal(A: Operator, B: Operator, rot: Operator) -> complex:
    """``Tr[rot^dagger A rot B]`` for a rotation ``rot = R(phi)``."""
    return complex(np.sum((rot.conj().T @ A @ rot) * B.T))


def decompose_phase_ft(
    rho: Operator,
    axis: str = "z",
    K: int = 0,
    n_max: int | None = None,
    turns: int = 1,
    workers: int = 1,
) -> CoherenceSpectrum:
    """Coherence spectrum from a simulated phase-encoding scan.

    Samples ``S(phi_k) = Tr[R(-phi_k) rho R(phi_k) rho]`` at ``phi_k = 2 pi k / K``
    and returns its Fourier coefficients. ``K=0`` picks the default
    ``4 * n_max`` rounded up to a power of two. ``n_max`` defaults to the spin
    count. Raises :class:`AliasingError` when ``K < 2 n_max`` or when the
    reconstructed spectrum fails to reproduce ``Tr[rho^2]`` or an off-grid
    probe sample of ``S``.
    """
    require_hermitian(rho, "rho")
    N = num_spins(rho)
    if n_max is None:
        n_max = N
    if K == 0:
        K = default_samples(n_max)
    phis = phase_grid(K, turns)
    signal = np.array(
        parallel_map(lambda phi: correlation_signal(rho, rho, rotation(N, axis, phi)), phis, workers)
    )
    coeffs = spectrum_from_signal(signal, K, n_max, turns)
    purity = float(np.trace(rho @ rho).real)
    orders = np.arange(-n_max, n_max + 1)
    check_reconstruction(coeffs, orders, purity, lambda phi: correlation_signal(rho, rho, rotation(N, axis, phi)), K)
    spec = CoherenceSpectrum(
        orders,
        coeffs.real,
        axis,
        purity,
        {"method": "phase-ft", "K": K, "turns": turns, "max_imag": float(np.max(np.abs(coeffs.imag)))},
    )
    return spec


def default_samples(n_max: int) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(4 * n_max, 1)))))


def check_reconstruction(
    coeffs: NDArray, orders: NDArray, total: float, probe: Callable[[float], complex], K: int
) -> None:
    scale = max(abs(total), 1e-300)
    if abs(coeffs.sum() - total) > ALIAS_RTOL * scale:
        raise AliasingError(
            f"spectrum sums to {coeffs.sum().real:.12g} but Tr[rho^2] = {total:.12g}; increase K"
        )
    phi = np.pi / K * (1 + 1 / np.sqrt(7))
    model = np.sum(coeffs * np.exp(1j * orders * phi))
    if abs(model - probe(phi)) > ALIAS_RTOL * scale:
        raise AliasingError(f"off-grid probe mismatch {abs(model - probe(phi)):.3g}; orders beyond n_max are aliased")


@dataclass
class TransformReport:
    max_deviation: float
    x_spectrum: CoherenceSpectrum
    z_of_rotated: CoherenceSpectrum


def basis_transform_check(rho: Operator) -> TransformReport:
    """Compare the x spectrum of ``rho`` with the z spectrum of ``P^dagger rho P``.

    ``P = R_y(pi/2)`` realizes the change of quantization axis; the x route
    goes through the phase-encoding measurement with x rotations so the two
    sides share no code beyond the trace.
    """
    require_hermitian(rho, "rho")
    N = num_spins(rho)
    P = rotation(N, "y", np.pi / 2)
    x_spec = decompose_phase_ft(rho, "x", n_max=N, K=2 * N + 2)
    z_spec = block_spectrum(P.conj().T @ rho @ P, "z")
    dev = float(np.max(np.abs(x_spec.intensities - z_spec.intensities)))
    return TransformReport(dev, x_spec, z_spec)


def selection_violation(spec: CoherenceSpectrum, forbidden_parity: int) -> float:
    """Fraction of the total intensity found at orders of the forbidden parity."""
    return abs(spec.parity_mass(forbidden_parity)) / spec.total


def spectra_table(spectra: Sequence[CoherenceSpectrum]) -> dict[int, list[float]]:
    orders = sorted({int(n) for s in spectra for n in s.orders})
    return {n: [s.intensity(n) for s in spectra] for n in orders}
