"""
Coupling networks and the dipolar-family Hamiltonians.

All couplings ``d_ij`` are angular frequencies (rad/s) and all Hamiltonians
are returned in the same units (hbar = 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .spinops import Operator, check_spin_count, single_spin_op

MU0 = 4e-7 * np.pi  # T m / A
HBAR = 1.054571817e-34  # J s
GAMMA_19F = 2.51662e8  # rad / (s T)
CAF2_SPACING = 2.73e-10  # m, nearest fluorine-fluorine distance in CaF2


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """N spin-1/2 nuclei with a symmetric coupling matrix in rad/s."""

    couplings: NDArray[np.float64]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        d = np.array(self.couplings, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"coupling matrix must be square, got shape {d.shape}")
        check_spin_count(d.shape[0])
        if not np.all(np.isfinite(d)):
            raise ValueError("coupling matrix has non-finite entries")
        if not np.allclose(d, d.T, rtol=1e-12, atol=0.0):
            raise ValueError("coupling matrix is not symmetric")
        if np.any(np.diag(d) != 0):
            raise ValueError("coupling matrix must have zero diagonal")
        if d.shape[0] >= 2 and not np.any(d):
            raise ValueError("at least one nonzero coupling is required for N >= 2")
        d.setflags(write=False)
        object.__setattr__(self, "couplings", d)

    @property
    def N(self) -> int:
        return self.couplings.shape[0]

    def pairs(self):
        """Yield ``(i, j, d_ij)`` for ``i < j`` with nonzero coupling."""
        d = self.couplings
        for i in range(self.N):
            for j in range(i + 1, self.N):
                if d[i, j] != 0.0:
                    yield i, j, d[i, j]

    def scaled(self, factor: float) -> "SpinSystem":
        return SpinSystem(self.couplings * factor, {**self.metadata, "scale": factor})


def dipolar_constant(gamma: float) -> float:
    """``K = mu0 gamma^2 hbar / (8 pi)`` in rad/s m^3.

    Pairs with ``d_ij = K (1 - 3 cos^2 theta) / r^3`` so that the secular
    Hamiltonian below equals the textbook truncated dipolar interaction.
    """
    return MU0 * gamma**2 * HBAR / (8 * np.pi)


def couplings_from_geometry(
    positions: ArrayLike,
    field_axis: ArrayLike = (0.0, 0.0, 1.0),
    gamma: float | None = None,
) -> SpinSystem:
    """Dipolar couplings ``d_ij = K (1 - 3 cos^2 theta_ij) / r_ij^3``.

    With ``gamma=None`` the constant is ``K = 1`` (reduced units, positions
    in arbitrary length units). Otherwise positions are in meters and
    ``K = dipolar_constant(gamma)``. The constant used is recorded in the
    metadata.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ValueError("positions must be a list of 3-vectors")
    if pos.shape[0] < 2:
        raise ValueError("need at least two positions")
    b = np.asarray(field_axis, dtype=float)
    norm = np.linalg.norm(b)
    if b.shape != (3,) or norm == 0:
        raise ValueError("field axis must be a nonzero 3-vector")
    b = b / norm
    K = 1.0 if gamma is None else dipolar_constant(gamma)

    n = pos.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            r = pos[j] - pos[i]
            dist = np.linalg.norm(r)
            if dist == 0:
                raise ValueError(f"positions {i} and {j} coincide")
            cos_t = r @ b / dist
            d[i, j] = d[j, i] = K * (1 - 3 * cos_t**2) / dist**3
    meta = {
        "source": "geometry",
        "K": K,
        "units": "reduced" if gamma is None else "rad/s",
        "gamma": gamma,
        "field_axis": b.tolist(),
        "positions": pos.tolist(),
    }
    return SpinSystem(d, meta)


def chain_system(
    n: int,
    spacing: float = CAF2_SPACING,
    field_axis: Sequence[float] = (0.0, 0.0, 1.0),
    gamma: float = GAMMA_19F,
) -> SpinSystem:
    """Linear chain along x with all pairwise dipolar couplings."""
    positions = [[k * spacing, 0.0, 0.0] for k in range(n)]
    sys = couplings_from_geometry(positions, field_axis, gamma)
    return SpinSystem(sys.couplings, {**sys.metadata, "preset": f"chain-{n}", "spacing": spacing})


def random_system(n: int, scale: float, seed: int) -> SpinSystem:
    """Symmetric Gaussian random couplings with standard deviation ``scale``."""
    rng = np.random.default_rng(seed)
    a = rng.normal(scale=scale, size=(n, n))
    d = np.triu(a, 1)
    d = d + d.T
    return SpinSystem(d, {"source": "random", "seed": seed, "scale": scale, "preset": f"random-{n}"})


def _zero(N: int) -> Operator:
    return np.zeros((2**N, 2**N), dtype=complex)


def dq_hamiltonian(sys: SpinSystem) -> Operator:
    """``sum_{i<j} d_ij (I_i^+ I_j^+ + I_i^- I_j^-)``."""
    N = sys.N
    H = _zero(N)
    for i, j, d in sys.pairs():
        H += d * (
            single_spin_op(N, i, "+") @ single_spin_op(N, j, "+")
            + single_spin_op(N, i, "-") @ single_spin_op(N, j, "-")
        )
    return H


def x_ladder(N: int, i: int, sign: str) -> Operator:
    """Ladder operator of spin ``i`` quantized along x: ``I_y +- i I_z``.

    Cyclic relabelling (x, y, z) -> (y, z, x) of ``I^+- = I_x +- i I_y``,
    so ``[I_x, I_x^+-] = +-I_x^+-``.
    """
    s = 1.0 if sign == "+" else -1.0
    return single_spin_op(N, i, "y") + s * 1j * single_spin_op(N, i, "z")


def dq_hamiltonian_xform(sys: SpinSystem) -> Operator:
    """The DQ Hamiltonian written with x-quantized operators.

    ``sum_{i<j} d_ij [ {2 Ix_i Ix_j - (Ix_i^+ Ix_j^- + Ix_i^- Ix_j^+)/2}
    - (Ix_i^+ Ix_j^+ + Ix_i^- Ix_j^-)/2 ]``. This is the same operator as
    :func:`dq_hamiltonian`; the double-quantum part relative to x carries
    coefficient -1/2.
    """
    N = sys.N
    H = _zero(N)
    for i, j, d in sys.pairs():
        xi, xj = single_spin_op(N, i, "x"), single_spin_op(N, j, "x")
        pi, mi = x_ladder(N, i, "+"), x_ladder(N, i, "-")
        pj, mj = x_ladder(N, j, "+"), x_ladder(N, j, "-")
        zero_q = 2 * xi @ xj - 0.5 * (pi @ mj + mi @ pj)
        double_q = pi @ pj + mi @ mj
        H += d * (zero_q - 0.5 * double_q)
    return H


def dq_part_xbasis(sys: SpinSystem) -> Operator:
    """``sum_{i<j} d_ij (Ix_i^+ Ix_j^+ + Ix_i^- Ix_j^-)`` without its coefficient."""
    N = sys.N
    H = _zero(N)
    for i, j, d in sys.pairs():
        H += d * (
            x_ladder(N, i, "+") @ x_ladder(N, j, "+") + x_ladder(N, i, "-") @ x_ladder(N, j, "-")
        )
    return H


def secular_dipolar_hamiltonian(sys: SpinSystem) -> Operator:
    """``sum_{i<j} d_ij [2 I_zi I_zj - (I_i^+ I_j^- + I_i^- I_j^+)/2]``."""
    N = sys.N
    H = _zero(N)
    for i, j, d in sys.pairs():
        op = single_spin_op
        H += d * (
            2 * op(N, i, "z") @ op(N, j, "z")
            - 0.5 * (op(N, i, "+") @ op(N, j, "-") + op(N, i, "-") @ op(N, j, "+"))
        )
    return H
