"""Boundary operators in the Fourier basis of the obstacle boundary.

The obstacle is the disk of radius ``epsilon`` centred in the cell.  Densities
are expanded in ``phi_n(t) = exp(i n t) / sqrt(2 pi)`` on the unit-circle
parameter ``t`` and the inner product is ``(phi, psi) = int conj(phi) psi dt``.

* Dirichlet: single layer ``(S phi)(t) = int G(eps (r(t) - r(tau))) phi(tau) dtau``.
* Neumann: ``(1/2) I + K`` with the double layer kernel
  ``eps * dG(x - y)/dnu(y)`` (outward normal of the obstacle).

The free-space part ``H0`` is handled analytically on the diagonal.  The
regular part ``G - H0`` is applied either through its cylindrical expansion
and Graf's addition theorem (``method="multipole"``, the default) or by
tensor trapezoidal quadrature and a 2D FFT (``method="quadrature"``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import qpgreens
from .lattice import LatticeSpec, rotate
from .qpgreens import EwaldParams, H0SeriesCoeffs

J01 = 2.404825557695773  # first zero of J_0
JP11 = 1.841183781340659  # first positive zero of J_1'
ASSEMBLY_GUARD = 1e-6  # distance to singular frequencies, relative to 2 pi / a
H0_SERIES_LIMIT = 1.5


class BoundaryCondition(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"

    @classmethod
    def parse(cls, value) -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown boundary condition {value!r}") from None


@dataclass(frozen=True)
class FourierTruncation:
    """Modes ``-N..N`` and the number of uniform angular samples."""

    N: int = 12
    quad_points: int = 256

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        q = self.quad_points
        if q < 4 * self.N + 4 or q & (q - 1):
            raise ValueError("quad_points must be a power of two and at least 4N + 4")

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def doubled(self, *, modes: bool = True, quad: bool = True) -> "FourierTruncation":
        N = 2 * self.N if modes else self.N
        q = 2 * self.quad_points if quad else self.quad_points
        while q < 4 * N + 4:
            q *= 2
        return FourierTruncation(N, q)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Truncated matrix ``a[m, n]`` with ``m, n`` in ``-N..N``."""

    bc: BoundaryCondition
    kappa: np.ndarray
    omega: float
    epsilon: float
    trunc: FourierTruncation
    entries: np.ndarray
    spec: LatticeSpec | None = None

    @property
    def modes(self) -> np.ndarray:
        return self.trunc.modes

    def entry(self, m: int, n: int) -> complex:
        N = self.trunc.N
        return complex(self.entries[m + N, n + N])

    @property
    def norm2(self) -> float:
        return float(np.linalg.norm(self.entries, 2))

    @property
    def norm_max(self) -> float:
        return float(np.max(np.abs(self.entries)))


@dataclass
class DensityCoefficients:
    """Fourier coefficients ``c_n``, ``n = -N..N``, of a boundary density."""

    c: np.ndarray
    residue_class: int | None = None

    @property
    def N(self) -> int:
        return (len(self.c) - 1) // 2

    def __getitem__(self, n: int) -> complex:
        return complex(self.c[n + self.N])

    def energy_fraction(self, n: int) -> float:
        return abs(self[n]) ** 2 / float(np.vdot(self.c, self.c).real)


# ---------------------------------------------------------------------------
# Free-space diagonals


def _circle_moments(p: int, n: int) -> tuple[float, float]:
    """``I2 = (1/2pi) int (2 sin(u/2))^{2p} e^{-inu} du`` and the log-weighted ``I1``."""
    n = abs(n)
    if n <= p:
        i2 = (-1) ** n * math.comb(2 * p, p - n)
        i1 = 0.5 * i2 * (
            2 * special.digamma(2 * p + 1) - special.digamma(p + n + 1) - special.digamma(p - n + 1)
        )
        return float(i1), float(i2)
    k = n - p - 1
    i1 = 0.5 * (-1) ** n * math.exp(
        special.gammaln(2 * p + 1) - special.gammaln(p + n + 1) + special.gammaln(k + 1)
    ) * (-1) ** k
    return float(i1), 0.0


def log_kernel_eigenvalue(n: int) -> float:
    """Eigenvalue of ``(1/2pi) int ln|2 sin((t - tau)/2)| phi(tau) dtau`` on ``phi_n``."""
    return 0.0 if n == 0 else -1.0 / (2 * abs(n))


def h0_diagonal(omega: float, epsilon: float, n: int, coeffs: H0SeriesCoeffs | None = None) -> complex:
    """``(phi_n, S0 phi_n)`` for the free-space kernel ``H0(omega; eps (r(t) - r(tau)))``.

    Built from the logarithmic ascending series of ``H0``: the log part gives
    ``(ln eps + ln omega + gamma0) delta_n0 + eta_n`` and every power
    ``(omega eps)^{2p}`` contributes through the circle moments of
    ``(2 sin(u/2))^{2p}`` with and without a logarithmic weight.  Requires
    ``0 < omega eps < 1.5``.
    """
    z = omega * epsilon
    if not 0 < z < H0_SERIES_LIMIT:
        raise ValueError(f"omega*epsilon = {z} outside the series range (0, 1.5)")
    coeffs = coeffs or qpgreens._COEFFS
    total = complex(log_kernel_eigenvalue(n))
    if n == 0:
        total += math.log(epsilon) + math.log(omega) + coeffs.gamma0
    lz = math.log(z)
    for p in range(1, coeffs.order + 1):
        i1, i2 = _circle_moments(p, n)
        term = z ** (2 * p) * (coeffs.b1[p] * (lz * i2 + i1) + coeffs.b2[p] * i2)
        total += term
        if abs(term) < 1e-18 and p > abs(n):
            break
    return total


def h0_diagonal_bessel(omega: float, epsilon: float, n) -> np.ndarray:
    """Closed form ``-(i pi / 2) J_n(z) H_n^(1)(z)`` with ``z = omega eps``."""
    z = omega * epsilon
    n = np.asarray(n)
    return -0.5j * math.pi * special.jv(n, z) * special.hankel1(n, z)


def h0_diagonals(omega: float, epsilon: float, modes) -> np.ndarray:
    z = omega * epsilon
    if z < H0_SERIES_LIMIT:
        return np.array([h0_diagonal(omega, epsilon, int(n)) for n in modes])
    return h0_diagonal_bessel(omega, epsilon, modes)


def dl_h0_diagonal(omega: float, epsilon: float, n) -> np.ndarray:
    """Diagonal of the free-space double layer ``eps dH0/dnu(y)`` on the circle.

    Equals ``-(i pi z / 4) (J_n' H_n + J_n H_n')`` with ``z = omega eps``; it
    tends to ``1/2`` for ``n = 0`` and to ``0`` otherwise as ``z -> 0``.
    """
    z = omega * epsilon
    n = np.asarray(n)
    J, dJ = special.jv(n, z), special.jvp(n, z)
    H, dH = special.hankel1(n, z), special.h1vp(n, z)
    return -0.25j * math.pi * z * (dJ * H + J * dH)


# ---------------------------------------------------------------------------
# Assembly


def _guard(bc: BoundaryCondition, spec: LatticeSpec, kappa, omega: float):
    if not omega > 0:
        raise ValueError("omega must be positive")
    z = omega * spec.epsilon
    if z >= J01:
        raise ValueError(
            f"omega*epsilon = {z:.4f} reaches the first interior disk resonance {J01:.4f}"
        )
    qpgreens._check_singular(spec, kappa, omega, ASSEMBLY_GUARD)


def _assemble_multipole(bc, spec, kappa, omega, trunc, params):
    N = trunc.N
    modes = trunc.modes
    z = omega * spec.epsilon
    c = qpgreens.cylindrical_coefficients(spec, kappa, omega, 2 * N, trunc.quad_points, params=params)
    diff = modes[:, None] - modes[None, :]
    C = c[diff + 2 * N]
    J = special.jv(modes, z)
    if bc is BoundaryCondition.DIRICHLET:
        A = 2 * math.pi * C * J[:, None] * J[None, :]
        A[np.diag_indices_from(A)] += h0_diagonals(omega, spec.epsilon, modes)
    else:
        dJ = special.jvp(modes, z)
        A = 2 * math.pi * z * C * J[:, None] * dJ[None, :]
        A[np.diag_indices_from(A)] += 0.5 + dl_h0_diagonal(omega, spec.epsilon, modes)
    return A


def _two_sided_fft(K: np.ndarray, N: int) -> np.ndarray:
    """``(2 pi / M^2) sum_ij e^{-i m t_i} K_ij e^{i n tau_j}`` for ``m, n = -N..N``."""
    M = K.shape[0]
    F = np.fft.fft(np.fft.ifft(K, axis=1) * M, axis=0) * (2 * math.pi / M**2)
    idx = np.arange(-N, N + 1) % M
    return F[np.ix_(idx, idx)]


def _assemble_quadrature(bc, spec, kappa, omega, trunc, params):
    N, M = trunc.N, trunc.quad_points
    eps = spec.epsilon
    t = 2 * math.pi * np.arange(M) / M
    r = np.stack([np.cos(t), np.sin(t)], axis=1)
    d = eps * (r[:, None, :] - r[None, :, :])
    val, grad = qpgreens.regular_part(spec, kappa, omega, d.reshape(-1, 2), params)
    modes = trunc.modes
    if bc is BoundaryCondition.DIRICHLET:
        K = val.reshape(M, M)
        F = _two_sided_fft(K, N)
        _check_resolution(K, F)
        F[np.diag_indices_from(F)] += h0_diagonals(omega, eps, modes)
    else:
        # d/dnu(y) G(x - y) = -grad G(x - y) . r(tau); arclength eps dtau
        g = grad.reshape(M, M, 2)
        K = -eps * np.einsum("ijk,jk->ij", g, r)
        F = _two_sided_fft(K, N)
        _check_resolution(K, F)
        F[np.diag_indices_from(F)] += 0.5 + dl_h0_diagonal(omega, eps, modes)
    return F


def _check_resolution(K: np.ndarray, F: np.ndarray, rtol: float = 1e-8):
    M = K.shape[0]
    spec2 = np.fft.fft2(K) / M**2
    band = np.abs(np.fft.fftfreq(M, 1.0 / M))
    outer = (band[:, None] >= M // 2 - 2) | (band[None, :] >= M // 2 - 2)
    tail = np.max(np.abs(spec2[outer]))
    if tail > rtol * max(np.max(np.abs(spec2)), 1e-300):
        raise RuntimeError(f"quadrature under-resolved: trailing Fourier content {tail:.3g}")


def assemble(bc, spec: LatticeSpec, kappa, omega: float, trunc: FourierTruncation | None = None,
             method: str = "multipole", params: EwaldParams = qpgreens.DEFAULT_PARAMS) -> OperatorMatrix:
    """Assemble the boundary operator matrix at ``(kappa, omega)``.

    Args:
        bc: ``"dirichlet"`` or ``"neumann"``.
        spec: lattice and obstacle radius.
        kappa: Bloch vector.
        omega: real frequency (unnormalized).
        trunc: Fourier truncation; defaults to ``N = 12``, 256 samples.
        method: ``"multipole"`` or ``"quadrature"``.

    Raises:
        ValueError: ``omega`` is within ``1e-6 (2 pi / a)`` of a singular
            frequency, or ``omega eps`` reaches the first zero of ``J_0``.
    """
    bc = BoundaryCondition.parse(bc)
    trunc = trunc or FourierTruncation()
    kappa = np.asarray(kappa, dtype=float)
    _guard(bc, spec, kappa, omega)
    if method == "multipole":
        A = _assemble_multipole(bc, spec, kappa, omega, trunc, params)
    elif method == "quadrature":
        A = _assemble_quadrature(bc, spec, kappa, omega, trunc, params)
    else:
        raise ValueError(f"unknown assembly method {method!r}")
    return OperatorMatrix(bc, kappa, float(omega), spec.epsilon, trunc, A, spec)


def hermitian_form(A: OperatorMatrix) -> np.ndarray:
    """A Hermitian matrix with the same kernel as ``A``.

    Dirichlet matrices are returned as is (symmetrized).  Neumann columns are
    scaled by ``J_n(z) / (z J_n'(z))``, which turns the matrix into the
    Dirichlet one plus a real diagonal; this needs ``z < j'_{1,1}``.
    """
    if A.bc is BoundaryCondition.DIRICHLET:
        H = A.entries
    else:
        z = A.omega * A.epsilon
        if z >= JP11:
            raise ValueError(f"omega*epsilon = {z:.4f} beyond the first zero of J_1'")
        modes = A.modes
        scale = special.jv(modes, z) / (z * special.jvp(modes, z))
        H = A.entries * scale[None, :]
    return 0.5 * (H + H.conj().T)


# ---------------------------------------------------------------------------
# Structure at the Dirac point


def is_dirac_point(spec: LatticeSpec, kappa, tol: float = 1e-9) -> bool:
    """True when ``kappa`` is equivalent to ``K`` or ``K'`` modulo the reciprocal lattice."""
    kappa = np.asarray(kappa, dtype=float)
    B = np.stack([spec.k1, spec.k2], axis=1)
    for K in (spec.points.K, spec.points.Kprime):
        coef = np.linalg.solve(B, kappa - K)
        if np.all(np.abs(coef - np.round(coef)) < tol):
            return True
    return False


def residue_indices(N: int, j: int) -> np.ndarray:
    """Modes ``n`` in ``-N..N`` with ``n = j (mod 3)``, ascending."""
    n = np.arange(-N, N + 1)
    return n[(n - j) % 3 == 0]


def subsystem_extract(A: OperatorMatrix, j: int, matrix: np.ndarray | None = None) -> np.ndarray:
    """Submatrix over modes ``n = j (mod 3)``; only meaningful at ``kappa*``."""
    if j not in (0, 1, -1):
        raise ValueError("j must be 0, 1 or -1")
    if A.spec is not None and not is_dirac_point(A.spec, A.kappa):
        raise ValueError("subsystems decouple only at the Dirac point kappa*")
    idx = residue_indices(A.trunc.N, j) + A.trunc.N
    M = A.entries if matrix is None else matrix
    return M[np.ix_(idx, idx)]


@dataclass(frozen=True)
class SymmetryReport:
    """Largest violations, relative to ``max |a_mn|``; ``None`` where not applicable."""

    hermitian: float | None
    index_symmetry: float | None
    mod3: float

    def passes(self, tol: float = 1e-10) -> dict[str, bool | None]:
        out = {}
        for name in ("hermitian", "index_symmetry", "mod3"):
            v = getattr(self, name)
            out[name] = None if v is None else bool(v < tol)
        return out


def symmetry_report(A: OperatorMatrix) -> SymmetryReport:
    """Measure Hermitian symmetry, the ``(-1)^(m-n)`` index symmetry and mod-3 sparsity.

    The first two are Dirichlet properties and are skipped for Neumann matrices.
    """
    E = A.entries
    scale = A.norm_max
    modes = A.modes
    mod3_mask = ((modes[:, None] - modes[None, :]) % 3) != 0
    mod3 = float(np.max(np.abs(E[mod3_mask]))) / scale
    if A.bc is BoundaryCondition.DIRICHLET:
        herm = float(np.max(np.abs(E - E.conj().T))) / scale
        sign = (-1.0) ** (modes[:, None] - modes[None, :])
        # a[-n, -m] is the anti-transpose
        anti = E[::-1, ::-1].T
        index = float(np.max(np.abs(E - sign * anti))) / scale
    else:
        herm = index = None
    return SymmetryReport(herm, index, mod3)


def conjugation_map(c: np.ndarray) -> np.ndarray:
    """Map ``c'_n = (-1)^n conj(c_{-n})``, sending class ``j`` to class ``-j``."""
    N = (len(c) - 1) // 2
    n = np.arange(-N, N + 1)
    return (-1.0) ** n * np.conj(c[::-1])


def rotation_check(spec: LatticeSpec, kappa) -> bool:
    return is_dirac_point(spec, rotate(kappa))
