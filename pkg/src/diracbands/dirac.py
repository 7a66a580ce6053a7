"""Dirac points at the Brillouin-zone vertex: asymptotics, location, cone fits.

Frequencies returned by this module are unnormalized unless the name says
otherwise; reports (:class:`DiracReport`, :func:`table1_compare`) use the
display normalization ``omega a / (2 pi)``.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bie, qpgreens, spectral
from .bie import BoundaryCondition, FourierTruncation
from .lattice import LatticeSpec, shell_at
from .spectral import SweepConfig

log = logging.getLogger(__name__)

#: Band pairs forming Dirac points at K and the resonant shell each sits next to.
BAND_GROUPS: dict[tuple[int, int], int] = {(1, 2): 1, (4, 5): 2, (10, 11): 3}

#: Coefficients ``m`` in ``omega* = sqrt(m_1) |kappa*| + m_2 (alpha/|kappa*|) eps^2``.
_DIRICHLET_SHIFT = {1: (1.0, 1.0), 2: (4.0, 2.0), 3: (7.0, 2.0 * math.sqrt(7.0))}
#: Cone slope numerators ``omega* * slope / (2 pi / a)``.
_SLOPE_FACTOR = {1: 1.0 / 3.0, 2: 4.0 / 3.0, 3: 20.0 / 21.0}

DEFAULT_RADII = (1e-3, 2e-3, 4e-3, 8e-3)


class MissingRoots(RuntimeError):
    """A cone probe did not return the two expected band frequencies."""


def band_group(band_pair) -> int:
    pair = tuple(int(b) for b in band_pair)
    if pair not in BAND_GROUPS:
        raise ValueError(f"unsupported band pair {band_pair}; expected one of {sorted(BAND_GROUPS)}")
    return BAND_GROUPS[pair]


@dataclass(frozen=True)
class AsymptoticCoefficients:
    """Constants of the small-obstacle expansions.

    Attributes:
        alpha: ``(2 pi / (3 |Y|)) (2 pi / a)^2``.
        kappa_star_norm: ``|kappa*| = (2/3)(2 pi / a)``.
        cell_area: ``|Y|``.
        gamma0: ``E0 - ln 2 - i pi / 2``.
    """

    alpha: float
    kappa_star_norm: float
    cell_area: float
    gamma0: complex
    spec: LatticeSpec = field(repr=False, compare=False)

    @classmethod
    def from_spec(cls, spec: LatticeSpec) -> "AsymptoticCoefficients":
        alpha = 2 * math.pi / (3 * spec.cell_area) * spec.unit**2
        return cls(alpha, float(np.linalg.norm(spec.kappa_star)), spec.cell_area, qpgreens.GAMMA0, spec)

    def beta1(self, omega: float) -> complex:
        """``(1/2pi)(ln omega + gamma0) + G~(kappa*, omega; 0)``; diagnostics only."""
        shell = shell_at(self.spec, self.spec.kappa_star, 1)
        rem = qpgreens.smooth_remainder(self.spec, self.spec.kappa_star, omega, np.zeros(2), shell)
        return (math.log(omega) + self.gamma0) / (2 * math.pi) + rem


def asymptotic_eigenvalues(spec: LatticeSpec, bc, band_group_id: int = 1) -> list[tuple[str, float]]:
    """Leading-order characteristic values next to shell ``band_group_id`` (1, 2 or 3)."""
    bc = BoundaryCondition.parse(bc)
    eps = spec.epsilon
    if eps / spec.a > 0.25:
        raise ValueError("asymptotic formulas need epsilon/a <= 0.25")
    co = AsymptoticCoefficients.from_spec(spec)
    k, alpha = co.kappa_star_norm, co.alpha
    if bc is BoundaryCondition.NEUMANN:
        if band_group_id != 1:
            raise ValueError("Neumann asymptotics are available for the first shell only")
        return [("omega1*", k - alpha / k * eps**2)]
    if band_group_id not in _DIRICHLET_SHIFT:
        raise ValueError("band group must be 1, 2 or 3")
    m2, m = _DIRICHLET_SHIFT[band_group_id]
    out = [(f"omega{band_group_id}*", math.sqrt(m2) * k + m * alpha / k * eps**2)]
    if band_group_id == 1:
        out.append(("omega1**", k - 3 * math.pi / (co.cell_area * k * math.log(eps / spec.a))))
    return out


def theory_slopes(spec: LatticeSpec, band_group_id: int, omega_star: float) -> float:
    """Cone slope ``d omega / d|kappa - kappa*|`` (dimensionless).

    ``(1/(3 w)) (2 pi/a)``, ``(4/(3 w)) (2 pi/a)`` and ``(20/(21 w)) (2 pi/a)``
    for the three shells, with ``w = omega_star``.
    """
    if not omega_star > 0:
        raise ValueError("omega_star must be positive")
    return _SLOPE_FACTOR[band_group_id] * spec.unit / omega_star


# ---------------------------------------------------------------------------
# Locating the Dirac point


@dataclass
class DiracLocation:
    omega: float
    multiplicity: int
    schur_roots: dict[int, float]
    root: spectral.CharacteristicRoot


def _pick_pair(roots, target: float, prefer: str = "nearest"):
    pairs = [r for r in roots if r.multiplicity >= 2]
    if not pairs:
        return None
    if prefer == "highest":
        return max(pairs, key=lambda r: r.omega)
    return min(pairs, key=lambda r: abs(r.omega - target))


def locate_dirac(bc, spec: LatticeSpec, band_pair=(1, 2), trunc: FourierTruncation | None = None,
                 schur_tol: float = 1e-13) -> DiracLocation:
    """Find the doubly degenerate characteristic value at ``K`` for ``band_pair``.

    A sweep around the shell frequency finds the degenerate root; it is then
    refined independently on the ``j = +1`` and ``j = -1`` Schur functions.
    """
    bc = BoundaryCondition.parse(bc)
    g = band_group(band_pair)
    trunc = trunc or FourierTruncation()
    K = spec.kappa_star
    u = spec.unit
    wbar = shell_at(spec, K, g).omega_bar
    if bc is BoundaryCondition.NEUMANN:
        guess = asymptotic_eigenvalues(spec, bc, 1)[0][1] if g == 1 else wbar
    else:
        guess = asymptotic_eigenvalues(spec, bc, g)[0][1]
    shift = abs(guess - wbar)
    half = max(2.5 * shift, 0.02 * u)
    cfg = SweepConfig(((wbar - half) / u, (wbar + half) / u))
    roots = spectral.characteristic_sweep(bc, spec, K, cfg, trunc)
    pick = _pick_pair(roots, guess, "highest" if g == 3 else "nearest")
    if pick is None:
        raise MissingRoots(
            f"no degenerate root near {wbar / u:.6f}; roots: "
            + ", ".join(f"{r.omega / u:.6f}x{r.multiplicity}" for r in roots)
        )
    schur = {}
    for j in (1, -1):
        step = 1e-7 * u
        for _ in range(30):
            br = (pick.omega - step, pick.omega + step)
            try:
                schur[j] = spectral.schur_root(bc, spec, j, br, trunc, samples=4, tol=schur_tol)
                break
            except (spectral.NoSignChange, spectral.OutsideValidity):
                step *= 4
        else:
            log.warning("Schur refinement failed for j=%d", j)
    omega = float(np.mean(list(schur.values()))) if schur else pick.omega
    return DiracLocation(omega, pick.multiplicity, schur, pick)


# ---------------------------------------------------------------------------
# Cone fit


@dataclass
class DiracReport:
    """Dirac point summary; frequencies and slopes in normalized units."""

    bc: str
    band_pair: tuple[int, int]
    omega_star_numeric: float
    omega_star_asymptotic: float
    multiplicity: int
    slope_fit_plus: float
    slope_fit_minus: float
    slope_theory: float
    fit_residual: float
    directions_tested: int
    slope_spread: float = float("nan")
    quadratic_ratio: float = float("nan")
    vertex_gap: float = float("nan")
    intercept_gap: float = float("nan")
    epsilon: float = float("nan")
    direction_slopes: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["band_pair"] = list(self.band_pair)
        return d

    @property
    def slope_fit(self) -> float:
        return 0.5 * (self.slope_fit_plus - self.slope_fit_minus)

    @property
    def slope_rel_error(self) -> float:
        return abs(self.slope_fit - self.slope_theory) / self.slope_theory


def _probe(bc, spec, kappa, omega_star_n, slope, r, trunc):
    u = spec.unit
    h = 1.5 * slope * r + 5e-5
    cfg = SweepConfig((omega_star_n - h, omega_star_n + h), coarse_steps=math.ceil(10 / (2 * h)),
                      cluster_zone=h / 2)
    roots = spectral.characteristic_sweep(bc, spec, kappa, cfg, trunc, with_nullspace=False)
    freqs = sorted(w for rt in roots for w in [rt.omega / u] * rt.multiplicity)
    below = [w for w in freqs if w <= omega_star_n]
    above = [w for w in freqs if w > omega_star_n]
    if not below or not above:
        raise MissingRoots(f"probe at r={r:g}: expected two branches, found {freqs}")
    return below[-1], above[0]


def _probe_task(bc, spec, ws, slope, trunc, task):
    th, r = task
    kappa = spec.kappa_star + r * spec.unit * np.array([math.cos(th), math.sin(th)])
    return _probe(bc, spec, kappa, ws, slope, r, trunc)


def _fit_branch(r: np.ndarray, dw: np.ndarray):
    """Least squares ``dw = s r + c r^2``; returns ``(s, c, slope_std_error)``."""
    X = np.stack([r, r * r], axis=1)
    coef, res, *_ = np.linalg.lstsq(X, dw, rcond=None)
    dof = max(len(r) - 2, 1)
    resid = dw - X @ coef
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(X.T @ X)
    return float(coef[0]), float(coef[1]), math.sqrt(max(cov[0, 0], 0.0))


def cone_fit(bc, spec: LatticeSpec, band_pair=(1, 2), trunc: FourierTruncation | None = None,
             radii=DEFAULT_RADII, directions: int = 6, location: DiracLocation | None = None,
             parallel_map=map) -> DiracReport:
    """Fit the two dispersion branches around the Dirac point.

    For every direction ``u_k = (cos 2 pi k / d, sin 2 pi k / d)`` and radius
    ``r`` (normalized by ``2 pi / a``) both band frequencies at
    ``K + r u_k`` are found; ``omega_pm(r) = omega* pm s r + c r^2`` is then
    fitted by least squares, globally and per direction.

    Raises:
        MissingRoots: a probe did not resolve both branches.
    """
    bc = BoundaryCondition.parse(bc)
    g = band_group(band_pair)
    if directions < 3:
        raise ValueError("need at least three directions")
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    trunc = trunc or FourierTruncation()
    u = spec.unit
    loc = location or locate_dirac(bc, spec, band_pair, trunc)
    ws = loc.omega / u
    slope_th = theory_slopes(spec, g, loc.omega)
    K = spec.kappa_star
    angles = 2 * math.pi * np.arange(directions) / directions
    tasks = [(th, r) for th in angles for r in radii]
    run = functools.partial(_probe_task, bc, spec, ws, slope_th, trunc)
    results = list(parallel_map(run, tasks))
    lo = np.array([w for w, _ in results]).reshape(directions, len(radii))
    hi = np.array([w for _, w in results]).reshape(directions, len(radii))
    R = np.tile(radii, directions)
    s_plus, c_plus, e_plus = _fit_branch(R, hi.ravel() - ws)
    s_minus, c_minus, e_minus = _fit_branch(R, lo.ravel() - ws)
    per_dir = []
    for d in range(directions):
        sp_, _, _ = _fit_branch(radii, hi[d] - ws)
        sm_, _, _ = _fit_branch(radii, lo[d] - ws)
        per_dir.append(0.5 * (sp_ - sm_))
    # free-intercept fits: extrapolated branch values at r = 0
    X = np.stack([np.ones_like(R), R, R * R], axis=1)
    b_plus = np.linalg.lstsq(X, hi.ravel(), rcond=None)[0][0]
    b_minus = np.linalg.lstsq(X, lo.ravel(), rcond=None)[0][0]
    quad = max(abs(c_plus), abs(c_minus)) * float(radii.max())
    # at r = 0 both branches are the degenerate root; its two Schur roots give the gap
    if len(loc.schur_roots) == 2:
        vertex_gap = abs(loc.schur_roots[1] - loc.schur_roots[-1]) / u
    else:
        vertex_gap = float("nan")
    asym = asymptotic_eigenvalues(spec, bc, g)[0][1] / u
    return DiracReport(
        bc=bc.value,
        band_pair=tuple(int(b) for b in band_pair),
        omega_star_numeric=ws,
        omega_star_asymptotic=asym,
        multiplicity=loc.multiplicity,
        slope_fit_plus=s_plus,
        slope_fit_minus=s_minus,
        slope_theory=slope_th,
        fit_residual=max(e_plus, e_minus),
        directions_tested=directions,
        slope_spread=float(np.max(per_dir) - np.min(per_dir)),
        quadratic_ratio=quad / (0.5 * (abs(s_plus) + abs(s_minus))),
        vertex_gap=vertex_gap,
        intercept_gap=float(abs(b_plus - b_minus)),
        epsilon=spec.epsilon,
        direction_slopes=[float(v) for v in per_dir],
    )


# ---------------------------------------------------------------------------
# Table of numeric versus asymptotic values

TABLE1_EPS = (1 / 40, 1 / 20, 1 / 10, 1 / 5)


@dataclass(frozen=True)
class TableRow:
    epsilon: float
    numeric: float
    asymptotic: float
    error: float


def dirichlet_dirac_schur(spec: LatticeSpec, trunc: FourierTruncation | None = None, j: int = 1) -> float:
    """First-shell Dirichlet Dirac frequency from the Schur function ``f_j`` (unnormalized)."""
    K = spec.kappa_star
    wbar = float(np.linalg.norm(K))
    lo, hi = spectral.dirac_window(spec, wbar)
    # the guard keeps assembly away from the singular frequency itself
    lo = min(lo, wbar + 1e-4 * spec.unit)
    lo = max(lo, wbar + 2 * bie.ASSEMBLY_GUARD * spec.unit)
    return spectral.schur_root("dirichlet", spec, j, (lo, hi), trunc)


def table1_compare(spec_base: LatticeSpec, eps_list=TABLE1_EPS, trunc: FourierTruncation | None = None,
                   parallel_map=map) -> list[TableRow]:
    """Numeric (Schur root) versus asymptotic first Dirichlet Dirac frequency."""
    eps_list = [float(e) for e in eps_list]
    for e in eps_list:
        if not 0 < e < spec_base.a / 4:
            raise ValueError(f"epsilon {e} outside (0, a/4)")

    return list(parallel_map(functools.partial(_table_row, spec_base, trunc), eps_list))


def _table_row(spec_base, trunc, eps):
    spec = spec_base.with_epsilon(eps)
    u = spec.unit
    num = dirichlet_dirac_schur(spec, trunc) / u
    asym = asymptotic_eigenvalues(spec, "dirichlet", 1)[0][1] / u
    return TableRow(eps, num, asym, abs(num - asym))


# ---------------------------------------------------------------------------
# Eigenfunction structure


@dataclass
class EigenfunctionReport:
    dominant_modes: list[int]
    dominant_fraction: list[float]
    residue_classes: list[int | None]
    conjugation_residual: float
    passed: bool


def eigenfunction_check(bc, spec: LatticeSpec, root: spectral.CharacteristicRoot,
                        trunc: FourierTruncation | None = None, fraction_min: float = 0.99,
                        residual_max: float = 1e-6) -> EigenfunctionReport:
    """Check the kernel at a Dirac root: dominant modes ``n = pm 1`` and the conjugation map.

    The conjugation ``c'_n = (-1)^n conj(c_{-n})`` of the ``j = 1`` kernel
    vector must lie in the kernel as well.
    """
    bc = BoundaryCondition.parse(bc)
    trunc = trunc or FourierTruncation()
    A = bie.assemble(bc, spec, spec.kappa_star, root.omega, trunc)
    ns = root.nullspace or spectral.nullspace(A, 0.0, count=2)
    modes = trunc.modes
    dom, frac, cls = [], [], []
    for v in ns:
        energy = np.abs(v.c) ** 2
        k = int(np.argmax(energy))
        dom.append(int(modes[k]))
        frac.append(float(energy[k] / energy.sum()))
        cls.append(v.residue_class)
    plus = [v for v in ns if v.residue_class == 1] or ns[:1]
    c1 = plus[0].c
    mapped = bie.conjugation_map(c1)
    resid = float(np.linalg.norm(A.entries @ mapped) / np.linalg.norm(mapped))
    ok = sorted(dom) == [-1, 1] and min(frac) > fraction_min and resid < residual_max
    return EigenfunctionReport(dom, frac, cls, resid, ok)
