import json
import math

import numpy as np
import pytest

from diracbands import dirac
from diracbands.lattice import build_lattice


@pytest.fixture(scope="module")
def spec():
    return build_lattice(1.0, 0.05)


@pytest.fixture(scope="module")
def location(spec):
    return dirac.locate_dirac("dirichlet", spec, (1, 2))


@pytest.fixture(scope="module")
def report(spec, location):
    return dirac.cone_fit("dirichlet", spec, (1, 2), location=location)


def _norm(spec, w):
    return w / spec.unit


# ---------------------------------------------------------------- closed forms


@pytest.mark.parametrize("eps,ref", [(1 / 20, 0.67573), (1 / 40, 0.66893), (1 / 10, 0.70294), (1 / 5, 0.81177)])
def test_dirichlet_first_asymptotic(eps, ref):
    s = build_lattice(1.0, eps)
    (label, w), _ = dirac.asymptotic_eigenvalues(s, "dirichlet", 1)
    assert label == "omega1*"
    assert abs(_norm(s, w) - ref) < 5e-5


def test_neumann_asymptotic(spec):
    ((_, w),) = dirac.asymptotic_eigenvalues(spec, "neumann", 1)
    assert abs(_norm(spec, w) - 0.65760) < 5e-6
    co = dirac.AsymptoticCoefficients.from_spec(spec)
    exact = (2 * math.pi) ** 2 / (2 * spec.cell_area)  # alpha / |k*| at a = 1
    assert co.alpha / co.kappa_star_norm == pytest.approx(exact, rel=1e-14)
    assert co.alpha / co.kappa_star_norm == pytest.approx(22.794, abs=2e-3)


def test_higher_group_asymptotics(spec):
    ((_, w2),) = dirac.asymptotic_eigenvalues(spec, "dirichlet", 2)
    ((_, w3),) = dirac.asymptotic_eigenvalues(spec, "dirichlet", 3)
    assert abs(_norm(spec, w2) - 1.35147) < 5e-6
    assert abs(_norm(spec, w3) - 1.81182) < 5e-6


def test_asymptotics_reject_large_obstacles():
    with pytest.raises(ValueError):
        dirac.asymptotic_eigenvalues(build_lattice(1.0, 0.3), "dirichlet", 1)
    with pytest.raises(ValueError):
        dirac.asymptotic_eigenvalues(build_lattice(1.0, 0.05), "neumann", 2)


def test_asymptotics_limit_is_vertex_frequency():
    s = build_lattice(1.0, 1e-4)
    (_, w), _ = dirac.asymptotic_eigenvalues(s, "dirichlet", 1)
    assert abs(_norm(s, w) - 2 / 3) < 1e-6


@pytest.mark.parametrize("group,w,factor,ref", [(1, 0.67559, 1 / 3, 0.49335), (2, 1.35147, 4 / 3, 0.98653),
                                                (3, 2 * math.sqrt(7) / 3, 20 / 21, 0.54001)])
def test_theory_slopes(spec, group, w, factor, ref):
    slope = dirac.theory_slopes(spec, group, w * spec.unit)
    assert slope == pytest.approx(factor / w, rel=1e-14)
    # the quoted reference values carry a rounding error of about 6e-5
    assert slope == pytest.approx(ref, abs=1e-4)


def test_band_group_lookup():
    assert dirac.band_group((4, 5)) == 2
    with pytest.raises(ValueError):
        dirac.band_group((2, 3))


# ---------------------------------------------------------------- location


def test_locate_first_dirac_point(spec, location):
    assert location.multiplicity == 2
    assert abs(_norm(spec, location.omega) - 0.67559) < 5e-4
    assert abs(location.schur_roots[1] - location.schur_roots[-1]) / spec.unit < 1e-10


def test_neumann_dirac_point(spec):
    loc = dirac.locate_dirac("neumann", spec, (1, 2))
    w = _norm(spec, loc.omega)
    assert loc.multiplicity == 2
    assert abs(w - 0.65760) < 5e-4
    assert w < 2 / 3


@pytest.mark.parametrize("pair,ref,tol", [((4, 5), 1.35147, 2e-3), ((10, 11), 1.81182, 5e-3)])
def test_higher_dirac_points(spec, pair, ref, tol):
    loc = dirac.locate_dirac("dirichlet", spec, pair)
    assert loc.multiplicity == 2
    assert abs(_norm(spec, loc.omega) - ref) < tol


# ---------------------------------------------------------------- cone


def test_cone_slope(report):
    assert report.slope_theory == pytest.approx(0.49335, abs=1e-4)
    assert report.slope_rel_error < 0.05
    assert report.slope_fit_plus > 0 > report.slope_fit_minus


def test_cone_isotropy(report):
    assert report.directions_tested == 6
    assert report.slope_spread <= 2 * report.fit_residual


def test_cone_vertex_is_a_crossing(report):
    assert report.vertex_gap <= 1e-10
    assert report.quadratic_ratio <= 0.1


def test_report_serializes(report):
    d = json.loads(json.dumps(report.to_dict()))
    assert d["band_pair"] == [1, 2]
    assert d["multiplicity"] == 2


def test_cone_fit_validation(spec, location):
    with pytest.raises(ValueError):
        dirac.cone_fit("dirichlet", spec, (1, 2), directions=2, location=location)
    with pytest.raises(ValueError):
        dirac.cone_fit("dirichlet", spec, (1, 2), radii=(0.0, 1e-3), location=location)


# ---------------------------------------------------------------- table


@pytest.fixture(scope="module")
def table(spec):
    return dirac.table1_compare(spec)


def test_table_rows(table):
    rows = {round(r.epsilon, 6): r for r in table}
    assert abs(rows[0.1].numeric - 0.70172) < 5e-4
    assert abs(rows[0.1].asymptotic - 0.70294) < 5e-5
    assert 0.6e-3 <= rows[0.1].error <= 2.4e-3
    assert abs(rows[0.2].numeric - 0.81715) < 5e-4
    assert 2.7e-3 <= rows[0.2].error <= 10.8e-3


def test_table_error_grows_with_eps(table):
    errs = [r.error for r in sorted(table, key=lambda r: r.epsilon)]
    assert errs == sorted(errs)


def test_table_error_is_cubic(table):
    errs = [r.error for r in sorted(table, key=lambda r: r.epsilon)]
    for small, large in zip(errs[:2], errs[1:3]):
        assert 6 <= large / small <= 12


@pytest.mark.parametrize("eps", [1 / 40, 1 / 20, 1 / 10])
def test_sign_asymmetry(eps):
    s = build_lattice(1.0, eps)
    wn = dirac.locate_dirac("neumann", s, (1, 2)).omega / s.unit
    wd = dirac.locate_dirac("dirichlet", s, (1, 2)).omega / s.unit
    assert wn < 2 / 3 < wd


def test_table_small_eps_limit(spec):
    rows = dirac.table1_compare(spec, [2e-3, 1e-3])
    for r in rows:
        assert abs(r.numeric - 2 / 3) < 3e-5
        assert abs(r.asymptotic - 2 / 3) < 3e-5
    # both columns approach 2/3 like eps^2
    assert (rows[0].numeric - 2 / 3) / (rows[1].numeric - 2 / 3) == pytest.approx(4, rel=0.05)


def test_table_validates_eps(spec):
    with pytest.raises(ValueError):
        dirac.table1_compare(spec, [0.3])


# ---------------------------------------------------------------- eigenfunctions


def test_eigenfunction_structure(spec, location):
    rep = dirac.eigenfunction_check("dirichlet", spec, location.root)
    assert sorted(rep.dominant_modes) == [-1, 1]
    assert sorted(rep.residue_classes) == [-1, 1]
    assert rep.conjugation_residual < 1e-6
    assert min(rep.dominant_fraction) > 0.99
    assert rep.passed


def test_neumann_eigenfunction_structure(spec):
    loc = dirac.locate_dirac("neumann", spec, (1, 2))
    rep = dirac.eigenfunction_check("neumann", spec, loc.root)
    assert sorted(rep.dominant_modes) == [-1, 1]
    assert sorted(rep.residue_classes) == [-1, 1]
    assert min(rep.dominant_fraction) > 0.99
    assert rep.conjugation_residual < 1e-6
    assert rep.passed
