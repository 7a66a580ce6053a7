"""Quasi-periodic Helmholtz Green's function on the honeycomb lattice.

The Green's function

    G(kappa, omega; x) = (1/|Y|) sum_q exp(i (kappa+q).x) / (omega^2 - |kappa+q|^2)

is evaluated by Ewald summation: a Gaussian-damped reciprocal series plus a
direct-lattice series in exponential integrals.  The module also exposes the
free-space part ``H0(omega; x) = -(i/4) H_0^(1)(omega |x|)``, its logarithmic
ascending series, the finite resonant plane-wave sum of a singular shell and
the smooth remainder ``G - H0 - G_shell``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .lattice import LatticeSpec, ResonantShell, direct_vectors, reciprocal_vectors

EULER_GAMMA = float(np.euler_gamma)
GAMMA0 = complex(EULER_GAMMA - math.log(2.0), -math.pi / 2.0)

SINGULAR_GUARD = 1e-8  # relative to 2 pi / a
SOURCE_GUARD = 1e-10  # relative to a
SMALL_Z = 0.25  # eta^2 r^2 below which the center term uses ascending series
_CHUNK = 4096


class NotConverged(RuntimeError):
    """Ewald series did not reach the requested tolerance within the allowed shells."""


class SingularFrequency(ValueError):
    """Frequency coincides with ``|kappa + q|`` for some reciprocal vector ``q``."""


class OnSourcePoint(ValueError):
    """Evaluation point lies on the source lattice."""


@dataclass(frozen=True)
class EwaldParams:
    """Ewald splitting parameters.

    Attributes:
        eta: splitting parameter. ``None`` selects ``max(sqrt(pi/|Y|), omega/2)``.
        spectral_radius: largest reciprocal index ``|l_i|`` allowed.
        spatial_radius: largest direct index ``|l_i|`` allowed.
        series_order: cap on the number of terms of the spatial series.
        target_tol: absolute truncation tolerance.
    """

    eta: float | None = None
    spectral_radius: int = 80
    spatial_radius: int = 80
    series_order: int = 80
    target_tol: float = 1e-14

    def __post_init__(self):
        if self.series_order < 4:
            raise ValueError("series_order must be at least 4")
        if self.target_tol < 1e-14:
            raise ValueError("target_tol must be at least 1e-14")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")

    def resolve_eta(self, spec: LatticeSpec, omega: float) -> float:
        if self.eta is not None:
            return float(self.eta)
        return max(math.sqrt(math.pi / spec.cell_area), 0.5 * abs(omega))


DEFAULT_PARAMS = EwaldParams()


@dataclass(frozen=True)
class GreensValue:
    value: complex
    grad_x: np.ndarray
    est_error: float


@dataclass(frozen=True)
class H0SeriesCoeffs:
    """Coefficients of the ascending series of ``H0``.

    ``b1[p] = (-1)^p / (4^p (p!)^2)`` and ``b2[p] = (gamma0 - H_p) b1[p]``
    for ``p = 0..order`` (index 0 is kept for convenience; ``b2[0]`` is unused).
    """

    gamma0: complex
    b1: np.ndarray
    b2: np.ndarray
    order: int

    @classmethod
    def build(cls, order: int = 30) -> "H0SeriesCoeffs":
        p = np.arange(order + 1)
        b1 = (-1.0) ** p / (4.0**p * special.factorial(p) ** 2)
        harmonic = np.concatenate([[0.0], np.cumsum(1.0 / p[1:])])
        b2 = (GAMMA0 - harmonic) * b1
        b2[0] = 0.0
        return cls(GAMMA0, b1, b2, order)


_COEFFS = H0SeriesCoeffs.build(40)


# ---------------------------------------------------------------------------
# Free-space part


def h0_free(omega: float, x) -> complex | np.ndarray:
    """``H0(omega; x) = -(i/4) H_0^(1)(omega |x|)``; ``x`` may be (2,) or (n, 2)."""
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    if np.any(r <= 0):
        raise OnSourcePoint("h0_free is singular at x = 0")
    out = -0.25j * special.hankel1(0, omega * r)
    return complex(out) if np.ndim(out) == 0 else out


def h0_free_dr(omega: float, r):
    """Radial derivative of ``H0``: ``(i omega / 4) H_1^(1)(omega r)``."""
    return 0.25j * omega * special.hankel1(1, omega * np.asarray(r, dtype=float))


def _h0_regular_series(omega: float, r: np.ndarray, coeffs: H0SeriesCoeffs):
    """``H0 - ln(r)/(2 pi)`` and its r-derivative minus ``1/(2 pi r)``.

    Safe at ``r = 0``.
    """
    r = np.asarray(r, dtype=float)
    w = omega * r
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), 0.0)
    val = np.full(r.shape, math.log(omega) + coeffs.gamma0, dtype=complex)
    dval = np.zeros(r.shape, dtype=complex)
    w2 = w * w
    wp = np.ones_like(w)  # (omega r)^(2p)
    for p in range(1, coeffs.order + 1):
        wp_prev = wp
        wp = wp * w2
        val += coeffs.b1[p] * wp * logw + coeffs.b2[p] * wp
        # d/dr (w^{2p} ln w) = omega w^{2p-1} (2p ln w + 1); d/dr w^{2p} = 2p omega w^{2p-1}
        w2pm1 = wp_prev * w
        dval += omega * w2pm1 * (coeffs.b1[p] * (2 * p * logw + 1.0) + coeffs.b2[p] * 2 * p)
        if np.all(np.abs(wp) * abs(coeffs.b1[p]) * (1 + np.abs(logw)) < 1e-18):
            break
    return val / (2 * math.pi), dval / (2 * math.pi)


def h0_series(omega: float, r: float, coeffs: H0SeriesCoeffs | None = None) -> complex:
    """Ascending logarithmic series of ``H0`` truncated at ``coeffs.order``.

    Valid for ``0 < omega r < 1.5``.
    """
    coeffs = coeffs or _COEFFS
    if not r > 0:
        raise ValueError("h0_series requires r > 0")
    if not 0 < omega * r < 1.5:
        raise ValueError(f"omega*r = {omega * r} outside the series range (0, 1.5)")
    w = omega * r
    p = np.arange(1, coeffs.order + 1)
    wp = w ** (2 * p)
    total = (
        math.log(r)
        + math.log(omega)
        + coeffs.gamma0
        + np.sum(coeffs.b1[1:] * wp) * math.log(w)
        + np.sum(coeffs.b2[1:] * wp)
    )
    return complex(total / (2 * math.pi))


# ---------------------------------------------------------------------------
# Ewald summation


def _ein(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Entire exponential integral ``Ein(z)`` and its derivative for small ``z``."""
    z = np.asarray(z, dtype=float)
    val = np.zeros_like(z)
    term = np.ones_like(z)  # (-1)^(k+1) z^k / k!
    for k in range(1, 40):
        term = term * (-z) / k if k > 1 else z.copy()
        val += term / k
        if np.all(np.abs(term) < 1e-18):
            break
    with np.errstate(divide="ignore", invalid="ignore"):
        der = np.where(z > 1e-8, -np.expm1(-z) / np.where(z > 0, z, 1.0), 1.0 - z / 2.0)
    return val, der


def _series_terms(s: float, tol: float, cap: int) -> np.ndarray:
    """Coefficients ``s^p / p!`` up to the first term below ``tol``."""
    coefs = [1.0]
    p = 0
    while True:
        p += 1
        c = coefs[-1] * s / p
        coefs.append(c)
        if c < tol and p >= 2:
            break
        if p >= cap:
            raise NotConverged(f"spatial series needs more than {cap} terms (s={s:.3g})")
    return np.array(coefs)


_LAGUERRE = special.roots_laguerre(40)
LAGUERRE_Z = 4.0  # quadrature is used for z >= LAGUERRE_Z when s <= LAGUERRE_S
LAGUERRE_S = 1.5


def _series_sum(coefs: np.ndarray, s: float, z: np.ndarray):
    """``F(z) = sum_p c_p E_{p+1}(z)`` with ``c_p = s^p/p!``, and ``dF/dz``.

    ``F(z) = int_1^inf exp(-z t + s/t) dt/t``; for large ``z`` this integral
    is evaluated by Gauss-Laguerre quadrature after ``t = 1 + u/z``, which is
    much cheaper than one exponential integral per order.
    """
    z = np.asarray(z, dtype=float)
    F = np.empty_like(z)
    dF = np.empty_like(z)
    far = z >= LAGUERRE_Z if s <= LAGUERRE_S else np.zeros(z.shape, bool)
    if np.any(far):
        u, w = _LAGUERRE
        zf = z[far][:, None]
        ez = np.exp(-zf + s * zf / (zf + u[None, :]))
        F[far] = (ez / (zf + u[None, :])) @ w
        dF[far] = -(ez @ w) / zf[:, 0]
    near = ~far
    if np.any(near):
        zn = z[near]
        P = len(coefs) - 1
        E = special.expn(np.arange(1, P + 2)[:, None], zn[None, :])  # E_1..E_{P+1}
        with np.errstate(divide="ignore"):
            E0 = np.exp(-zn) / zn
        F[near] = coefs @ E
        dF[near] = -(coefs @ np.vstack([E0[None, :], E[:P]]))
    return F, dF


@dataclass
class _Plan:
    """Truncation plan for one (kappa, omega)."""

    eta: float
    Q: np.ndarray  # kappa + q, shape (nq, 2)
    spec_weight: np.ndarray  # exp((w^2-|Q|^2)/4eta^2)/(|Y|(w^2-|Q|^2))
    Rc: float
    coefs: np.ndarray
    s: float
    est_error: float
    kappa: np.ndarray
    omega: float
    spec: LatticeSpec = field(repr=False)


def _check_singular(spec: LatticeSpec, kappa, omega: float, guard: float = SINGULAR_GUARD):
    qs, _ = reciprocal_vectors(spec, kappa, abs(omega) + spec.unit)
    if len(qs):
        d = np.min(np.abs(np.linalg.norm(np.asarray(kappa) + qs, axis=1) - abs(omega)))
        if d < guard * spec.unit:
            raise SingularFrequency(
                f"omega = {omega} lies within {d:.3g} of a singular frequency"
            )


def _plan(spec: LatticeSpec, kappa, omega: float, params: EwaldParams) -> _Plan:
    kappa = np.asarray(kappa, dtype=float)
    _check_singular(spec, kappa, omega)
    eta = params.resolve_eta(spec, omega)
    tol = params.target_tol
    L = math.log(1.0 / tol) + 3.0
    Kc = math.sqrt(omega**2 + 4.0 * eta**2 * L)
    # the reciprocal index needed to cover Kc
    if Kc * spec.a / (2 * math.pi) * 2 > params.spectral_radius:
        raise NotConverged("spectral cutoff exceeds spectral_radius")
    qs, _ = reciprocal_vectors(spec, kappa, Kc)
    Q = kappa + qs
    d = omega**2 - np.sum(Q * Q, axis=1)
    weight = np.exp(d / (4 * eta**2)) / (spec.cell_area * d)
    s = (omega / (2 * eta)) ** 2
    coefs = _series_terms(s, tol * 1e-2, params.series_order)
    Rc = math.sqrt(L + s) / eta
    if Rc / spec.a > params.spatial_radius:
        raise NotConverged("spatial cutoff exceeds spatial_radius")
    # tail estimates: first omitted spectral shell and the spatial Gaussian tail
    shell_count = 2 * math.pi * Kc * spec.cell_area / (2 * math.pi) ** 2 * 4
    spec_tail = shell_count * math.exp((omega**2 - Kc**2) / (4 * eta**2)) / (
        spec.cell_area * (Kc**2 - omega**2)
    )
    spat_tail = shell_count * math.exp(-eta**2 * Rc**2 + s) / (4 * math.pi * eta**2 * Rc**2)
    est = spec_tail + spat_tail + coefs[-1]
    return _Plan(eta, Q, weight, Rc, coefs, s, est, kappa, omega, spec)


def _spatial(plan: _Plan, x: np.ndarray, exclude_center: bool):
    """Direct-lattice Ewald series, value and gradient, for points x (n, 2)."""
    spec = plan.spec
    eta = plan.eta
    rmax = float(np.max(np.linalg.norm(x, axis=1))) if len(x) else 0.0
    evecs, ell = direct_vectors(spec, np.zeros(2), plan.Rc + rmax)
    if exclude_center:
        keep = np.any(ell != 0, axis=1)
        evecs = evecs[keep]
    val = np.zeros(len(x), dtype=complex)
    grad = np.zeros((len(x), 2), dtype=complex)
    if not len(evecs):
        return val, grad
    phase = np.exp(1j * evecs @ plan.kappa)
    zcut = (eta * plan.Rc) ** 2
    for start in range(0, len(x), _CHUNK):
        xs = x[start : start + _CHUNK]
        d = xs[:, None, :] - evecs[None, :, :]
        z = eta**2 * np.sum(d * d, axis=2)
        active = z <= zcut
        zi = z[active]
        if not exclude_center and np.any(zi < (eta * spec.a * SOURCE_GUARD) ** 2):
            raise OnSourcePoint("evaluation point lies on the source lattice")
        S, dS = _series_sum(plan.coefs, plan.s, zi)
        vals = np.zeros(z.shape, dtype=complex)
        dvals = np.zeros(z.shape, dtype=float)
        vals[active] = S
        dvals[active] = dS
        vals *= phase[None, :]
        val[start : start + _CHUNK] = -(vals.sum(axis=1)) / (4 * math.pi)
        # grad z = 2 eta^2 d
        gw = (dvals * phase[None, :])[:, :, None] * (2 * eta**2) * d
        grad[start : start + _CHUNK] = -gw.sum(axis=1) / (4 * math.pi)
    return val, grad


def _spectral(plan: _Plan, x: np.ndarray):
    ph = np.exp(1j * (x @ plan.Q.T))  # (n, nq)
    w = ph * plan.spec_weight[None, :]
    val = w.sum(axis=1)
    grad = 1j * (w @ plan.Q)
    return val, grad


def _as_points(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def ewald_green_many(spec: LatticeSpec, kappa, omega: float, x, params: EwaldParams = DEFAULT_PARAMS):
    """Vectorized Ewald evaluation; returns ``(values, gradients, est_error)``."""
    pts, _ = _as_points(x)
    plan = _plan(spec, kappa, omega, params)
    v1, g1 = _spectral(plan, pts)
    v2, g2 = _spatial(plan, pts, exclude_center=False)
    return v1 + v2, g1 + g2, plan.est_error


def ewald_green(spec: LatticeSpec, kappa, omega: float, x, params: EwaldParams = DEFAULT_PARAMS) -> GreensValue:
    """Evaluate ``G(kappa, omega; x)`` and its gradient by Ewald summation.

    Raises:
        SingularFrequency: ``omega`` is within ``1e-8 (2 pi/a)`` of ``|kappa+q|``.
        OnSourcePoint: ``x`` lies on the source lattice.
        NotConverged: the requested tolerance needs more shells than allowed.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ValueError("x must be a 2-vector; use ewald_green_many for arrays")
    v, g, est = ewald_green_many(spec, kappa, omega, x, params)
    if est > max(params.target_tol, 1e-12) * 10:
        raise NotConverged(f"estimated error {est:.3g} exceeds tolerance")
    return GreensValue(complex(v[0]), g[0], float(est))


def regular_part(spec: LatticeSpec, kappa, omega: float, x, params: EwaldParams = DEFAULT_PARAMS):
    """``G - H0`` and its gradient at points ``x`` (n, 2) or (2,), finite at ``x = 0``.

    The center term of the spatial series is combined analytically with the
    logarithm of ``H0`` when ``eta^2 |x|^2`` is small.
    """
    pts, single = _as_points(x)
    plan = _plan(spec, kappa, omega, params)
    v1, g1 = _spectral(plan, pts)
    v2, g2 = _spatial(plan, pts, exclude_center=True)
    val = v1 + v2
    grad = g1 + g2

    eta = plan.eta
    r = np.linalg.norm(pts, axis=1)
    z = eta**2 * r**2
    small = z < SMALL_Z
    coefs = plan.coefs
    P = len(coefs) - 1

    # center term minus H0, for small z
    if np.any(small):
        rs, zs = r[small], z[small]
        ein, dein = _ein(zs)
        E = special.expn(np.arange(1, P + 2)[:, None], zs[None, :])  # E_1..E_{P+1}
        with np.errstate(divide="ignore", invalid="ignore"):
            E0 = np.where(zs > 0, np.exp(-zs) / np.where(zs > 0, zs, 1.0), 0.0)
        tail = coefs[1:] @ E[1 : P + 1]  # sum_{p>=1} c_p E_{p+1}
        Ep = np.vstack([E0[None, :], E[: P]])[1:]  # E_1..E_P for p=1..P
        dtail = -(coefs[1:] @ Ep)
        h0r, dh0r = _h0_regular_series(omega, rs, _COEFFS)
        f = (EULER_GAMMA + 2 * math.log(eta)) / (4 * math.pi) - ein / (4 * math.pi) - tail / (4 * math.pi) - h0r
        # d/dr: dz/dr = 2 eta^2 r
        with np.errstate(invalid="ignore"):
            dfdr = -(dein + dtail) * 2 * eta**2 * rs / (4 * math.pi) - dh0r
        dfdr = np.where(rs > 0, dfdr, 0.0)  # radial profile is flat at the origin
        val[small] += f
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(rs[:, None] > 0, pts[small] / np.where(rs > 0, rs, 1.0)[:, None], 0.0)
        grad[small] += dfdr[:, None] * unit
    big = ~small
    if np.any(big):
        rb, zb = r[big], z[big]
        S, dS = _series_sum(coefs, plan.s, zb)
        center = -S / (4 * math.pi)
        dcenter = -dS * 2 * eta**2 * rb / (4 * math.pi)
        h0 = -0.25j * special.hankel1(0, omega * rb)
        dh0 = h0_free_dr(omega, rb)
        val[big] += center - h0
        grad[big] += ((dcenter - dh0) / rb)[:, None] * pts[big]
    if single:
        return complex(val[0]), grad[0]
    return val, grad


# ---------------------------------------------------------------------------
# Decomposition around a resonant shell


def resonant_sum(spec: LatticeSpec, kappa, omega: float, x, shell: ResonantShell):
    """``(1/|Y|) sum_{q in shell} exp(i (kappa+q).x) / (omega^2 - |kappa+q|^2)``."""
    kappa = np.asarray(kappa, dtype=float)
    pts, single = _as_points(x)
    Q = kappa + shell.members
    den = omega**2 - np.sum(Q * Q, axis=1)
    if np.any(np.abs(den) < 1e-300) or np.any(np.abs(den) <= 1e-14 * omega**2):
        raise SingularFrequency("omega coincides with the shell frequency")
    val = np.exp(1j * pts @ Q.T) @ (1.0 / den) / spec.cell_area
    return complex(val[0]) if single else val


def resonant_gradients(spec: LatticeSpec, kappa_star, omega_star: float, x, shell: ResonantShell):
    """Partial derivatives of :func:`resonant_sum` in ``kappa_1``, ``kappa_2`` and ``omega``.

    For each member ``q`` with ``Q = kappa + q`` and ``d = omega^2 - |Q|^2``:

        d/dkappa_i = (1/|Y|) e^{iQ.x} (i x_i / d + 2 Q_i / d^2)
        d/domega   = -(1/|Y|) e^{iQ.x} 2 omega / d^2
    """
    kappa = np.asarray(kappa_star, dtype=float)
    x = np.asarray(x, dtype=float)
    Q = kappa + shell.members
    den = omega_star**2 - np.sum(Q * Q, axis=1)
    if np.any(np.abs(den) <= 1e-14 * omega_star**2):
        raise SingularFrequency("omega coincides with the shell frequency")
    ph = np.exp(1j * Q @ x) / spec.cell_area
    dk = [np.sum(ph * (1j * x[i] / den + 2 * Q[:, i] / den**2)) for i in range(2)]
    dw = np.sum(-ph * 2 * omega_star / den**2)
    return complex(dk[0]), complex(dk[1]), complex(dw)


def smooth_remainder(spec: LatticeSpec, kappa_star, omega: float, x, shell: ResonantShell,
                     params: EwaldParams = DEFAULT_PARAMS):
    """``G - H0 - G_shell``; finite at ``x = 0``."""
    pts, single = _as_points(x)
    val, _ = regular_part(spec, kappa_star, omega, pts, params)
    out = val - resonant_sum(spec, kappa_star, omega, pts, shell)
    return complex(out[0]) if single else out


# ---------------------------------------------------------------------------
# Cylindrical expansion of the regular part


def cylindrical_coefficients(spec: LatticeSpec, kappa, omega: float, lmax: int,
                             samples: int = 256, rho: float | None = None,
                             params: EwaldParams = DEFAULT_PARAMS) -> np.ndarray:
    """Coefficients ``c_l``, ``|l| <= lmax``, of ``G - H0 = sum_l c_l J_l(omega r) e^{i l theta}``.

    ``G - H0`` is sampled with its radial derivative on a circle of radius
    ``rho`` (default ``a/2``); both Fourier series are combined in a least
    squares sense, which stays well conditioned near zeros of ``J_l``.

    Returns:
        Array of length ``2 lmax + 1``; entry ``l + lmax`` holds ``c_l``.
    """
    if samples <= 2 * lmax:
        raise ValueError("samples must exceed 2*lmax")
    rho = 0.5 * spec.a if rho is None else rho
    theta = 2 * math.pi * np.arange(samples) / samples
    pts = rho * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    val, grad = regular_part(spec, kappa, omega, pts, params)
    drho = np.sum(grad * pts, axis=1) / rho
    Rhat = np.fft.fft(val) / samples
    Dhat = np.fft.fft(drho) / samples
    ls = np.arange(-lmax, lmax + 1)
    w = omega * rho
    J = special.jv(ls, w)
    dJ = special.jvp(ls, w)
    num = J * Rhat[ls] + omega * dJ * Dhat[ls]
    den = J**2 + (omega * dJ) ** 2
    # very high orders at small omega: J_l underflows and c_l is unobservable
    ok = den > 1e-280
    return np.where(ok, num / np.where(ok, den, 1.0), 0.0)
