"""Characteristic-value solvers for the boundary operator.

Two routes are provided:

* :func:`characteristic_sweep` scans a frequency window at any Bloch vector.
  Between consecutive singular frequencies the Hermitian form of the operator
  is an analytic Hermitian family, so its sorted eigenvalues are continuous
  and every characteristic value is a sign change of one of them.  A
  smallest-singular-value scan is available for matrices without a Hermitian
  form.
* :func:`schur_characteristic` evaluates the scalar Schur complement of one
  mod-3 residue class at the Dirac point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import optimize

from . import bie
from .bie import BoundaryCondition, DensityCoefficients, FourierTruncation, OperatorMatrix
from .lattice import LatticeSpec, singular_frequencies

log = logging.getLogger(__name__)


class NoSignChange(ValueError):
    """The bracket passed to :func:`refine_root` does not change sign."""


class OutsideValidity(RuntimeError):
    """The reduced subsystem is numerically singular at the requested frequency."""


@dataclass(frozen=True)
class SweepConfig:
    """Frequency scan settings; every frequency here is normalized by ``2 pi / a``.

    Attributes:
        omega_window: scanned interval ``(lo, hi)``.
        coarse_steps: grid points per unit of normalized frequency.
        singular_exclusion: radius excluded around each singular frequency.
        root_tol: resolution of located roots.
        sv_threshold: singular values below ``sv_threshold * ||A||_2`` count
            towards the multiplicity.
        cluster_zone: half-width of the refined zone next to each singular
            frequency; ``None`` picks ``max(8 * 3.63 eps^2 / a^2, 0.01)``.
        method: ``"eig"`` (Hermitian eigenvalue tracking) or ``"svd"``.
    """

    omega_window: tuple[float, float] = (0.05, 1.0)
    coarse_steps: int = 40
    singular_exclusion: float = 1e-5
    root_tol: float = 1e-10
    sv_threshold: float = 1e-6
    cluster_zone: float | None = None
    method: str = "eig"

    def __post_init__(self):
        lo, hi = self.omega_window
        if not 0 <= lo < hi:
            raise ValueError("omega_window must satisfy 0 <= lo < hi")
        if self.coarse_steps < 2:
            raise ValueError("coarse_steps must be at least 2")
        if self.method not in ("eig", "svd"):
            raise ValueError("method must be 'eig' or 'svd'")

    def with_window(self, lo: float, hi: float) -> "SweepConfig":
        return replace(self, omega_window=(lo, hi))


@dataclass
class CharacteristicRoot:
    """A characteristic value (unnormalized) with its kernel."""

    omega: float
    multiplicity: int
    residual: float
    nullspace: list[DensityCoefficients] = field(default_factory=list)
    singular_values: np.ndarray | None = None

    def normalized(self, spec: LatticeSpec) -> float:
        return self.omega / spec.unit


# ---------------------------------------------------------------------------
# Root refinement


def refine_root(f: Callable[[float], float], bracket, tol: float = 1e-12, maxiter: int = 200,
                f_bracket: tuple[float, float] | None = None) -> float:
    """Safeguarded secant/bisection root finder.

    Every iteration takes a secant step and, if that fails to halve the
    bracket, a bisection step as well, so the bracket width at least halves
    per iteration.

    Raises:
        NoSignChange: ``f`` has the same sign at both ends of ``bracket``.
    """
    a, b = float(bracket[0]), float(bracket[1])
    fa, fb = f_bracket if f_bracket is not None else (f(a), f(b))
    if fa == 0:
        return a
    if fb == 0:
        return b
    if np.sign(fa) == np.sign(fb):
        raise NoSignChange(f"no sign change on [{a}, {b}]: f = ({fa:.3g}, {fb:.3g})")
    for _ in range(maxiter):
        width = b - a
        if width <= tol:
            break
        c = b - fb * (b - a) / (fb - fa)
        if not a < c < b:
            c = 0.5 * (a + b)
        fc = f(c)
        if fc == 0:
            return c
        if np.sign(fc) == np.sign(fa):
            a, fa = c, fc
        else:
            b, fb = c, fc
        if b - a > 0.5 * width:
            m = 0.5 * (a + b)
            fm = f(m)
            if fm == 0:
                return m
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b, fb = m, fm
    return a if abs(fa) < abs(fb) else b


# ---------------------------------------------------------------------------
# Sweeps


def _scan_grid(lo: float, hi: float, sing: list[float], cfg: SweepConfig, zone: float) -> list[np.ndarray]:
    """Scan grids for each interval between excluded singular neighbourhoods (normalized)."""
    cuts = [w for w in sing if lo - cfg.singular_exclusion < w < hi + cfg.singular_exclusion]
    edges = [lo] + [x for w in cuts for x in (w - cfg.singular_exclusion, w + cfg.singular_exclusion)] + [hi]
    grids = []
    for left, right in zip(edges[0::2], edges[1::2]):
        left, right = max(left, lo), min(right, hi)
        if right - left <= 0:
            continue
        n = max(2, int(math.ceil((right - left) * cfg.coarse_steps)) + 1)
        pts = [np.linspace(left, right, n)]
        near_left = any(abs(left - (w + cfg.singular_exclusion)) < 1e-15 for w in cuts)
        near_right = any(abs(right - (w - cfg.singular_exclusion)) < 1e-15 for w in cuts)
        span = min(zone, right - left)
        dense = max(10, int(10 * zone * cfg.coarse_steps))
        geo = np.geomspace(cfg.singular_exclusion, cfg.singular_exclusion + span, dense) - cfg.singular_exclusion
        if near_left:
            pts.append(left + geo)
        if near_right:
            pts.append(right - geo)
        g = np.unique(np.concatenate(pts))
        grids.append(g[(g >= left) & (g <= right)])
    return grids


def _hermitian_eigs(bc, spec, kappa, omega, trunc, method="multipole"):
    A = bie.assemble(bc, spec, kappa, omega, trunc, method=method)
    return np.linalg.eigvalsh(bie.hermitian_form(A))


def characteristic_sweep(bc, spec: LatticeSpec, kappa, config: SweepConfig | None = None,
                         trunc: FourierTruncation | None = None, *, with_nullspace: bool = True,
                         evaluator=None) -> list[CharacteristicRoot]:
    """All characteristic values of ``A(kappa, .)`` in ``config.omega_window``.

    Returns:
        Roots in ascending order; roots closer than ``100 root_tol`` are merged
        and their multiplicity is the number of singular values below the
        acceptance threshold.
    """
    bc = BoundaryCondition.parse(bc)
    cfg = config or SweepConfig()
    trunc = trunc or FourierTruncation()
    kappa = np.asarray(kappa, dtype=float)
    u = spec.unit
    lo, hi = cfg.omega_window
    lo = max(lo, 10 * cfg.singular_exclusion)
    if bc is BoundaryCondition.NEUMANN and cfg.method == "eig":
        hi = min(hi, 0.999 * bie.JP11 / (spec.epsilon * u))
    else:
        hi = min(hi, 0.999 * bie.J01 / (spec.epsilon * u))
    if hi <= lo:
        return []
    sing = [w / u for w in singular_frequencies(spec, kappa, (hi + 1.0) * u)]
    zone = cfg.cluster_zone
    if zone is None:
        zone = max(8 * 3.63 * (spec.epsilon / spec.a) ** 2, 0.01)
    grids = _scan_grid(lo, hi, sing, cfg, zone)

    cache: dict[float, np.ndarray] = {}

    def eigs(wn: float) -> np.ndarray:
        if wn not in cache:
            if evaluator is not None:
                cache[wn] = evaluator(wn)
            elif cfg.method == "eig":
                cache[wn] = _hermitian_eigs(bc, spec, kappa, wn * u, trunc)
            else:
                A = bie.assemble(bc, spec, kappa, wn * u, trunc)
                cache[wn] = np.linalg.svd(A.entries, compute_uv=False)[::-1]
        return cache[wn]

    candidates: list[float] = []
    for grid in grids:
        vals = np.array([eigs(w) for w in grid])
        if cfg.method == "eig":
            candidates += _eig_roots(grid, vals, eigs, cfg.root_tol)
        else:
            candidates += _svd_minima(grid, vals[:, 0], lambda w: eigs(w)[0], cfg)
    candidates.sort()
    merged: list[list[float]] = []
    for w in candidates:
        if merged and w - merged[-1][-1] <= 100 * cfg.root_tol:
            merged[-1].append(w)
        else:
            merged.append([w])

    roots = []
    for group in merged:
        wn = float(np.mean(group))
        A = bie.assemble(bc, spec, kappa, wn * u, trunc)
        sv = np.linalg.svd(A.entries, compute_uv=False)
        thresh = cfg.sv_threshold * sv[0]
        mult = int(np.sum(sv < thresh))
        if mult == 0:
            # a tracked eigenvalue crossed zero but the root is not resolved to the
            # singular-value threshold; keep it with the number of crossings
            log.debug("root %.12f: sigma_min %.3g above threshold %.3g", wn, sv[-1], thresh)
            if cfg.method == "svd":
                continue
            mult = len(group)
        ns = nullspace(A, max(thresh, sv[-1] * (1 + 1e-12)), count=mult) if with_nullspace else []
        roots.append(CharacteristicRoot(wn * u, mult, float(sv[-1]), ns, sv[::-1]))
    return roots


def _eig_roots(grid, vals, eigs, tol) -> list[float]:
    found = []
    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        sa, sb = np.sign(vals[i]), np.sign(vals[i + 1])
        for k in np.nonzero(sa * sb < 0)[0]:
            f = lambda w, k=k: float(eigs(w)[k])
            found.append(refine_root(f, (a, b), tol, f_bracket=(vals[i][k], vals[i + 1][k])))
    return found


def _svd_minima(grid, smin, f, cfg: SweepConfig) -> list[float]:
    found = []
    for i in range(1, len(grid) - 1):
        if smin[i] <= smin[i - 1] and smin[i] <= smin[i + 1]:
            res = optimize.minimize_scalar(f, bracket=(grid[i - 1], grid[i], grid[i + 1]),
                                           method="golden", tol=cfg.root_tol)
            found.append(float(res.x))
    return found


# ---------------------------------------------------------------------------
# Kernel


def nullspace(A: OperatorMatrix, threshold: float, count: int | None = None) -> list[DensityCoefficients]:
    """Right singular vectors of ``A`` with singular value below ``threshold``.

    At the Dirac point the three residue classes decouple; the kernel is then
    computed class by class, so every returned vector carries one class.
    """
    N = A.trunc.N
    spec = A.spec
    at_dirac = spec is not None and bie.is_dirac_point(spec, A.kappa)
    if not at_dirac:
        _, sv, vh = np.linalg.svd(A.entries)
        keep = np.nonzero(sv < threshold)[0]
        if count is not None:
            keep = np.arange(len(sv) - count, len(sv))
        return [DensityCoefficients(vh[k].conj()) for k in keep]
    cands = []
    for j in (0, 1, -1):
        idx = bie.residue_indices(N, j) + N
        S = A.entries[np.ix_(idx, idx)]
        _, sv, vh = np.linalg.svd(S)
        for k in range(len(sv)):
            v = np.zeros(2 * N + 1, dtype=complex)
            v[idx] = vh[k].conj()
            cands.append((sv[k], j, v))
    cands.sort(key=lambda t: t[0])
    chosen = [c for c in cands if c[0] < threshold]
    if count is not None:
        chosen = cands[:count]
    return [DensityCoefficients(v, j) for _, j, v in chosen]


# ---------------------------------------------------------------------------
# Schur complement at the Dirac point


def schur_from_matrix(H: np.ndarray, N: int, j: int) -> tuple[complex, complex, float]:
    """Schur complement of mode ``j`` in its residue class, ``a_jj`` and ``cond(Ahat_j)``."""
    idx = bie.residue_indices(N, j)
    S = H[np.ix_(idx + N, idx + N)]
    k = int(np.nonzero(idx == j)[0][0])
    rest = np.ones(len(idx), bool)
    rest[k] = False
    Ahat = S[np.ix_(rest, rest)]
    col = S[rest, k]
    row = S[k, rest]
    cond = np.linalg.cond(Ahat)
    if not np.isfinite(cond) or cond > 1e13:
        raise OutsideValidity(f"reduced subsystem is singular (cond = {cond:.3g})")
    return S[k, k] - row @ np.linalg.solve(Ahat, col), S[k, k], cond


def schur_characteristic(bc, spec: LatticeSpec, j: int, omega: float,
                         trunc: FourierTruncation | None = None, kappa_star=None,
                         check_real: bool = True) -> float:
    """``f_j(omega) = a_jj - <Ahat_j^{-1} a_j, a_j>`` at the Dirac point.

    For Neumann the Hermitian form of the matrix is used, whose kernel
    coincides with that of the operator.

    Raises:
        OutsideValidity: the reduced subsystem is singular at ``omega``.
    """
    bc = BoundaryCondition.parse(bc)
    trunc = trunc or FourierTruncation()
    kappa_star = spec.points.K if kappa_star is None else np.asarray(kappa_star, dtype=float)
    if not bie.is_dirac_point(spec, kappa_star):
        raise ValueError("schur_characteristic requires kappa at the Dirac point")
    A = bie.assemble(bc, spec, kappa_star, omega, trunc)
    H = bie.hermitian_form(A)
    if bc is BoundaryCondition.DIRICHLET:
        H = A.entries
    val, ajj, cond = schur_from_matrix(H, trunc.N, j)
    # near a root |f| vanishes, so the imaginary residue is measured against a_jj;
    # next to a pole of f the solve loses about log10(cond) digits
    tol = 1e-10 * max(1.0, cond * 1e-6)
    if check_real and abs(val.imag) > tol * max(abs(val), abs(ajj)):
        raise ArithmeticError(f"Schur complement not real: {val}")
    return float(val.real)


def weighted_inverse_norm(bc, spec: LatticeSpec, j: int, omega: float,
                          trunc: FourierTruncation | None = None) -> float:
    """``||W^{-1/2} Ahat_j^{-1} W^{-1/2}||_2`` with ``W = diag((1 + n^2)^{1/2})``.

    ``Ahat_j`` is the class-``j`` subsystem at the Dirac point with the row and
    column of mode ``j`` removed.  The weighted norm bounds how strongly the
    reduced system amplifies low-regularity data.
    """
    bc = BoundaryCondition.parse(bc)
    trunc = trunc or FourierTruncation()
    A = bie.assemble(bc, spec, spec.points.K, omega, trunc)
    H = A.entries if bc is BoundaryCondition.DIRICHLET else bie.hermitian_form(A)
    idx = bie.residue_indices(trunc.N, j)
    keep = idx[idx != j]
    Ahat = H[np.ix_(keep + trunc.N, keep + trunc.N)]
    w = (1.0 + keep.astype(float) ** 2) ** -0.25
    M = w[:, None] * np.linalg.inv(Ahat) * w[None, :]
    return float(np.linalg.norm(M, 2))


def dirac_window(spec: LatticeSpec, omega_bar: float, factor: float = 1.0) -> tuple[float, float]:
    """Window ``(1/(2|Y|)) (2pi/a)^2 eps^2 <= omega^2 - omega_bar^2 <= 4 pi / (|Y| |ln eps|)``."""
    eps = spec.epsilon / spec.a
    Y = spec.cell_area
    lo2 = spec.unit**2 * eps**2 / (2 * Y)
    hi2 = 4 * math.pi / (Y * abs(math.log(eps)))
    return math.sqrt(omega_bar**2 + lo2 / factor), math.sqrt(omega_bar**2 + factor * hi2)


def schur_root(bc, spec: LatticeSpec, j: int, bracket, trunc: FourierTruncation | None = None,
               samples: int = 24, tol: float = 1e-12, kappa_star=None) -> float:
    """Root of ``f_j`` in ``bracket`` (unnormalized).

    ``f_j`` is scanned on a geometric grid anchored at the lower end; the root
    is the first sign change at which ``|f_j|`` stays bounded (sign changes
    through poles of ``f_j`` are skipped).
    """
    lo, hi = bracket
    f = lambda w: schur_characteristic(bc, spec, j, w, trunc, kappa_star, check_real=False)
    offs = np.geomspace(1e-6 * (hi - lo), hi - lo, samples)
    grid = lo + np.concatenate([[0.0], offs])
    vals = []
    for w in grid:
        try:
            vals.append(f(w))
        except OutsideValidity:
            vals.append(np.nan)
    vals = np.array(vals)
    for i in range(len(grid) - 1):
        fa, fb = vals[i], vals[i + 1]
        if not (np.isfinite(fa) and np.isfinite(fb)) or np.sign(fa) == np.sign(fb):
            continue
        root = refine_root(f, (grid[i], grid[i + 1]), tol * spec.unit, f_bracket=(fa, fb))
        # a sign change through a pole leaves |f| large at the converged point
        if abs(f(root)) < 1e-6 * max(abs(fa), abs(fb), 1.0):
            return root
    raise NoSignChange(f"no root of f_{j} in [{lo / spec.unit:.6f}, {hi / spec.unit:.6f}] (normalized)")
