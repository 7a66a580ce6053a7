"""Honeycomb lattice geometry with its reciprocal lattice and singular-frequency shells."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SQRT3 = math.sqrt(3.0)

#: Clockwise rotation by 2*pi/3.
ROTATION = np.array([[-0.5, SQRT3 / 2.0], [-SQRT3 / 2.0, -0.5]])

DEDUP_RTOL = 1e-9


class HighSymmetryPoints(NamedTuple):
    Gamma: np.ndarray
    M: np.ndarray
    K: np.ndarray
    Kprime: np.ndarray


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Honeycomb lattice with one circular obstacle per cell.

    Attributes:
        a: lattice constant.
        epsilon: obstacle radius.
        e1, e2: direct lattice vectors.
        k1, k2: reciprocal lattice vectors, ``e_i . k_j = 2 pi delta_ij``.
        cell_area: area of the fundamental cell.
        center: obstacle center ``(e1 + e2) / 2``.
    """

    a: float
    epsilon: float
    e1: np.ndarray
    e2: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    cell_area: float
    center: np.ndarray

    @property
    def unit(self) -> float:
        """Reciprocal length scale ``2 pi / a`` used for normalization."""
        return 2.0 * math.pi / self.a

    @property
    def points(self) -> HighSymmetryPoints:
        u = self.unit
        K = u * np.array([1.0 / SQRT3, 1.0 / 3.0])
        return HighSymmetryPoints(
            Gamma=np.zeros(2),
            M=u * np.array([1.0 / SQRT3, 0.0]),
            K=K,
            Kprime=-K,
        )

    @property
    def kappa_star(self) -> np.ndarray:
        return self.points.K

    def with_epsilon(self, epsilon: float) -> "LatticeSpec":
        return build_lattice(self.a, epsilon)

    def normalize(self, omega):
        """Convert frequencies (or wave numbers) to units of ``2 pi / a``."""
        return np.asarray(omega) / self.unit if np.ndim(omega) else omega / self.unit

    def denormalize(self, omega):
        return np.asarray(omega) * self.unit if np.ndim(omega) else omega * self.unit

    def __repr__(self) -> str:
        return f"LatticeSpec(a={self.a!r}, epsilon={self.epsilon!r})"


def build_lattice(a: float, epsilon: float) -> LatticeSpec:
    """Build the honeycomb lattice of constant ``a`` with obstacles of radius ``epsilon``."""
    if not a > 0:
        raise ValueError(f"lattice constant must be positive, got {a}")
    if not 0 < 2 * epsilon < a:
        raise ValueError(
            f"obstacle radius {epsilon} out of range: need 0 < 2*epsilon < a = {a}"
        )
    e1 = a * np.array([SQRT3 / 2.0, 0.5])
    e2 = a * np.array([SQRT3 / 2.0, -0.5])
    u = 2.0 * math.pi / a
    k1 = u * np.array([1.0 / SQRT3, 1.0])
    k2 = u * np.array([1.0 / SQRT3, -1.0])
    area = abs(e1[0] * e2[1] - e1[1] * e2[0])
    return LatticeSpec(
        a=float(a),
        epsilon=float(epsilon),
        e1=e1,
        e2=e2,
        k1=k1,
        k2=k2,
        cell_area=area,
        center=0.5 * (e1 + e2),
    )


def rotate(v) -> np.ndarray:
    """Rotate 2-vectors (last axis) by 2*pi/3 clockwise."""
    return np.asarray(v, dtype=float) @ ROTATION.T


def same_point(u, v, spec: LatticeSpec, rtol: float = 1e-12) -> bool:
    return bool(np.linalg.norm(np.asarray(u) - np.asarray(v)) <= rtol * spec.unit)


def _index_box(radius: float, spec: LatticeSpec, *, reciprocal: bool) -> np.ndarray:
    # |l_i| <= |dual_i| * |v| / (2 pi) bounds every lattice index within `radius`
    dual = np.linalg.norm(spec.e1 if reciprocal else spec.k1)
    lmax = int(math.ceil(dual * radius / (2.0 * math.pi))) + 1
    r = np.arange(-lmax, lmax + 1)
    l1, l2 = np.meshgrid(r, r, indexing="ij")
    return np.stack([l1.ravel(), l2.ravel()], axis=1)


def reciprocal_vectors(spec: LatticeSpec, center, radius: float):
    """Reciprocal vectors ``q`` with ``|center + q| <= radius``.

    Returns ``(q, ell)`` with ``q`` of shape (n, 2) and integer indices ``ell``.
    """
    center = np.asarray(center, dtype=float)
    ell = _index_box(radius + np.linalg.norm(center), spec, reciprocal=True)
    q = ell[:, :1] * spec.k1 + ell[:, 1:] * spec.k2
    keep = np.linalg.norm(center + q, axis=1) <= radius
    return q[keep], ell[keep]


def direct_vectors(spec: LatticeSpec, center, radius: float):
    """Direct lattice vectors ``e`` with ``|center - e| <= radius``."""
    center = np.asarray(center, dtype=float)
    ell = _index_box(radius + np.linalg.norm(center), spec, reciprocal=False)
    e = ell[:, :1] * spec.e1 + ell[:, 1:] * spec.e2
    keep = np.linalg.norm(center - e, axis=1) <= radius
    return e[keep], ell[keep]


def _shell_search(spec: LatticeSpec, kappa, omega_max: float):
    kappa = np.asarray(kappa, dtype=float)
    bound = int(math.ceil(omega_max * spec.a)) + 4
    r = np.arange(-bound, bound + 1)
    l1, l2 = np.meshgrid(r, r, indexing="ij")
    ell = np.stack([l1.ravel(), l2.ravel()], axis=1)
    q = ell[:, :1] * spec.k1 + ell[:, 1:] * spec.k2
    # widen when kappa lies far outside the Brillouin zone
    extra, _ = reciprocal_vectors(spec, kappa, omega_max)
    norms = np.linalg.norm(kappa + q, axis=1)
    if len(extra) and np.linalg.norm(kappa + extra, axis=1).min() < norms.min() - 1e-12:
        q, ell = reciprocal_vectors(spec, kappa, omega_max)
        norms = np.linalg.norm(kappa + q, axis=1)
    return q, ell, norms


def singular_frequencies(spec: LatticeSpec, kappa, omega_max: float) -> list[float]:
    """All distinct ``|kappa + q| <= omega_max`` over the reciprocal lattice, ascending."""
    if not omega_max > 0:
        raise ValueError("omega_max must be positive")
    _, _, norms = _shell_search(spec, kappa, omega_max)
    vals = np.sort(norms[norms <= omega_max * (1 + DEDUP_RTOL)])
    out: list[float] = []
    for v in vals:
        if out and abs(v - out[-1]) <= DEDUP_RTOL * max(v, spec.unit):
            continue
        out.append(float(v))
    return out


@dataclass(frozen=True, eq=False)
class ResonantShell:
    """Reciprocal vectors ``q`` with ``|kappa* + q| = omega_bar``."""

    omega_bar: float
    members: np.ndarray
    indices: np.ndarray
    kappa: np.ndarray

    def __len__(self) -> int:
        return len(self.members)


def resonant_shell(spec: LatticeSpec, kappa_star, omega_bar: float, tol: float = 1e-9) -> ResonantShell:
    kappa_star = np.asarray(kappa_star, dtype=float)
    q, ell, norms = _shell_search(spec, kappa_star, omega_bar * 1.01 + spec.unit)
    hit = np.abs(norms - omega_bar) < tol * max(omega_bar, spec.unit)
    if not hit.any():
        raise ValueError(f"{omega_bar} is not a singular frequency of kappa={kappa_star}")
    ell = ell[hit]
    order = np.lexsort((ell[:, 1], ell[:, 0]))
    ell = ell[order]
    members = ell[:, :1] * spec.k1 + ell[:, 1:] * spec.k2
    return ResonantShell(float(omega_bar), members, ell, kappa_star)


def shell_at(spec: LatticeSpec, kappa_star, n: int) -> ResonantShell:
    """The ``n``-th (1-based) resonant shell of ``kappa_star``."""
    kappa_star = np.asarray(kappa_star, dtype=float)
    omax = np.linalg.norm(kappa_star) + (n + 1) * spec.unit
    freqs = singular_frequencies(spec, kappa_star, omax)
    freqs = [w for w in freqs if w > 0] if freqs and freqs[0] == 0 else freqs
    return resonant_shell(spec, kappa_star, freqs[n - 1])


def brillouin_path(points, samples_per_segment: int):
    """Piecewise-linear path through ``points``.

    Returns a list of ``(s, kappa)`` where ``s`` is the cumulative arclength;
    shared segment endpoints appear once.
    """
    pts = [np.asarray(p, dtype=float) for p in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if samples_per_segment < 2:
        raise ValueError("need at least two samples per segment")
    out = []
    s0 = 0.0
    for i, (p, q) in enumerate(zip(pts[:-1], pts[1:])):
        length = float(np.linalg.norm(q - p))
        ts = np.linspace(0.0, 1.0, samples_per_segment)
        if i > 0:
            ts = ts[1:]
        for t in ts:
            out.append((s0 + t * length, p + t * (q - p)))
        s0 += length
    return out


def named_point(spec: LatticeSpec, name: str) -> np.ndarray:
    table = {"G": "Gamma", "GAMMA": "Gamma", "M": "M", "K": "K", "K'": "Kprime", "KPRIME": "Kprime"}
    key = table.get(name.strip().upper())
    if key is None:
        raise KeyError(f"unknown symmetry point {name!r}")
    return getattr(spec.points, key)
