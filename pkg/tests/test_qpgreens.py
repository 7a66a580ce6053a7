"""Quasi-periodic Green's function.

A quasi-periodic solution of the Helmholtz equation with the free-space
logarithmic singularity at the lattice points is unique away from singular
frequencies, so the checks below (quasi-periodicity, finite-difference
Helmholtz residual, ``G - H0`` regular, independence of the Ewald splitting)
pin the function down without relying on the implementation.
"""

import math

import numpy as np
import pytest
from scipy import special

from diracbands import qpgreens as qg
from diracbands.lattice import build_lattice, rotate, shell_at

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def spec():
    return build_lattice(1.0, 0.05)


@pytest.fixture(scope="module")
def K(spec):
    return spec.points.K


# ---------------------------------------------------------------- free space


def test_gamma0_and_series_coefficients():
    assert qg.GAMMA0.real == pytest.approx(0.5772156649 - math.log(2), abs=1e-9)
    assert qg.GAMMA0.real == pytest.approx(-0.115932, abs=1e-6)
    assert qg.GAMMA0.imag == pytest.approx(-math.pi / 2, abs=1e-12)
    c = qg.H0SeriesCoeffs.build(8)
    assert c.b1[1] == pytest.approx(-0.25)
    assert c.b1[2] == pytest.approx(1 / 64)
    for p in range(1, 9):
        assert c.b1[p] == pytest.approx((-1) ** p / (2 ** (2 * p) * math.factorial(p) ** 2))


def test_h0_free_matches_hankel():
    x = np.array([0.3, -0.4])
    assert qg.h0_free(2.0, x) == pytest.approx(-0.25j * special.hankel1(0, 1.0), rel=1e-15)
    with pytest.raises(qg.OnSourcePoint):
        qg.h0_free(2.0, np.zeros(2))


@pytest.mark.parametrize("wr", [0.05, 0.3, 1.0])
def test_h0_series_matches_bessel(wr):
    omega, r = 3.0, wr / 3.0
    ref = -0.25j * special.hankel1(0, wr)
    order = 8 if wr <= 0.3 else 20
    got = qg.h0_series(omega, r, qg.H0SeriesCoeffs.build(order))
    assert abs(got - ref) < 1e-12


def test_h0_series_range_check():
    with pytest.raises(ValueError):
        qg.h0_series(10.0, 0.2)
    with pytest.raises(ValueError):
        qg.h0_series(1.0, 0.0)


def test_exponential_integral_series_hybrid():
    """Both branches of the series evaluator agree with a direct sum of scipy's E_n."""
    z = np.concatenate([np.linspace(0.01, 3.9, 50), np.linspace(4.0, 60.0, 80)])
    for s in (0.05, 0.7, 1.4, 2.5):
        coefs = qg._series_terms(s, 1e-18, 200)
        P = len(coefs) - 1
        E = special.expn(np.arange(1, P + 2)[:, None], z[None, :])
        ref = coefs @ E
        dref = -(coefs @ np.vstack([np.exp(-z) / z, E[:P]]))
        F, dF = qg._series_sum(coefs, s, z)
        np.testing.assert_allclose(F, ref, rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(dF, dref, rtol=1e-12, atol=1e-300)


# ---------------------------------------------------------------- Ewald sum


def test_quasi_periodicity(spec, K):
    w = 0.5 * TWO_PI
    x = np.array([0.13, 0.07])
    g = qg.ewald_green(spec, K, w, x)
    for e in (spec.e1, spec.e2, spec.e1 - 2 * spec.e2):
        shifted = qg.ewald_green(spec, K, w, x + e).value
        assert abs(shifted - np.exp(1j * K @ e) * g.value) < 1e-9


def test_conjugate_and_rotation_symmetry(spec, K):
    w = 0.5 * TWO_PI
    x = np.array([0.13, 0.07])
    g = qg.ewald_green(spec, K, w, x).value
    assert abs(g - np.conj(qg.ewald_green(spec, K, w, -x).value)) < 1e-9
    assert abs(g - qg.ewald_green(spec, K, w, rotate(x)).value) < 1e-9


def test_eta_independence(spec, K):
    w = 0.5 * TWO_PI
    x = np.array([0.1, 0.05])
    eta0 = qg.EwaldParams().resolve_eta(spec, w)
    a = qg.ewald_green(spec, K, w, x, qg.EwaldParams(eta=eta0)).value
    b = qg.ewald_green(spec, K, w, x, qg.EwaldParams(eta=1.5 * eta0)).value
    assert abs(a - b) < 1e-10


@pytest.mark.parametrize("kappa_n,omega_n", [((0.1, 0.2), 0.45), ((0.5, 0.1), 1.3), ((0.0, 0.0), 0.8)])
def test_eta_independence_generic(spec, kappa_n, omega_n):
    kappa = np.array(kappa_n) * spec.unit
    w = omega_n * spec.unit
    x = np.array([[0.21, -0.3], [0.02, 0.01], [0.5, 0.4]])
    a, _, _ = qg.ewald_green_many(spec, kappa, w, x)
    b, _, _ = qg.ewald_green_many(spec, kappa, w, x, qg.EwaldParams(eta=2.2 * qg.EwaldParams().resolve_eta(spec, w)))
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_helmholtz_residual_ratio(spec, K):
    w = 0.55 * TWO_PI
    x = np.array([0.31, 0.12])

    def residual(h):
        pts = np.array([x, x + [h, 0], x - [h, 0], x + [0, h], x - [0, h]])
        v, _, _ = qg.ewald_green_many(spec, K, w, pts)
        lap = (v[1] + v[2] + v[3] + v[4] - 4 * v[0]) / h**2
        return abs(lap + w**2 * v[0])

    r1, r2 = residual(2e-2), residual(1e-2)
    assert r1 < 1e-2
    assert 3.0 < r1 / r2 < 5.0  # second-order stencil, the exact residual vanishes


def test_gradient_matches_finite_differences(spec, K):
    w = 0.5 * TWO_PI
    x = np.array([0.2, 0.1])
    h = 1e-5
    g = qg.ewald_green(spec, K, w, x).grad_x
    fd = [(qg.ewald_green(spec, K, w, x + h * e).value - qg.ewald_green(spec, K, w, x - h * e).value) / (2 * h)
          for e in np.eye(2)]
    np.testing.assert_allclose(g, fd, rtol=1e-7, atol=1e-8)


def test_error_estimate_and_errors(spec, K):
    w = 0.5 * TWO_PI
    g = qg.ewald_green(spec, K, w, np.array([0.2, 0.1]))
    assert g.est_error < 1e-12
    with pytest.raises(qg.OnSourcePoint):
        qg.ewald_green(spec, K, w, spec.e1 - spec.e2)
    with pytest.raises(qg.SingularFrequency):
        qg.ewald_green(spec, K, np.linalg.norm(K), np.array([0.2, 0.1]))
    with pytest.raises(ValueError):
        qg.EwaldParams(eta=-1.0)


# ---------------------------------------------------------------- regular part


def test_regular_part_equals_g_minus_h0(spec, K):
    w = 0.6 * TWO_PI
    for x in (np.array([1e-3, 2e-3]), np.array([0.02, 0.01]), np.array([0.3, -0.1])):
        v, _ = qg.regular_part(spec, K, w, x)
        ref = qg.ewald_green(spec, K, w, x).value - qg.h0_free(w, x)
        assert abs(v - ref) < 1e-10


def test_regular_part_smooth_across_branch_switch(spec, K):
    w = 0.6 * TWO_PI
    eta = qg.EwaldParams().resolve_eta(spec, w)
    r0 = math.sqrt(qg.SMALL_Z) / eta
    a, ga = qg.regular_part(spec, K, w, np.array([r0 * (1 - 1e-13), 0.0]))
    b, gb = qg.regular_part(spec, K, w, np.array([r0 * (1 + 1e-13), 0.0]))
    assert abs(a - b) < 1e-11
    np.testing.assert_allclose(ga, gb, atol=1e-9)


def test_regular_part_gradient(spec, K):
    w = 0.6 * TWO_PI
    h = 1e-5
    for x in (np.array([1e-3, 2e-3]), np.array([0.2, 0.05])):
        _, g = qg.regular_part(spec, K, w, x)
        fd = [(qg.regular_part(spec, K, w, x + h * e)[0] - qg.regular_part(spec, K, w, x - h * e)[0]) / (2 * h)
              for e in np.eye(2)]
        np.testing.assert_allclose(g, fd, atol=1e-7)


def test_regular_part_finite_at_origin(spec, K):
    v, g = qg.regular_part(spec, K, 0.6 * TWO_PI, np.zeros(2))
    assert np.isfinite(v)
    np.testing.assert_allclose(g, np.zeros(2), atol=1e-13)


def test_cylindrical_expansion_reproduces_regular_part(spec, K):
    w = 0.6 * TWO_PI
    lmax = 24
    c = qg.cylindrical_coefficients(spec, K, w, lmax)
    ls = np.arange(-lmax, lmax + 1)
    for x in (np.array([0.03, -0.02]), np.array([0.1, 0.08])):
        r, th = np.linalg.norm(x), math.atan2(x[1], x[0])
        series = np.sum(c * special.jv(ls, w * r) * np.exp(1j * ls * th))
        assert abs(series - qg.regular_part(spec, K, w, x)[0]) < 1e-10


def test_cylindrical_coefficients_mod3_at_K(spec, K):
    # at K the rotation symmetry leaves only l = 0 (mod 3)
    c = qg.cylindrical_coefficients(spec, K, 0.6 * TWO_PI, 12)
    ls = np.arange(-12, 13)
    assert np.max(np.abs(c[ls % 3 != 0])) < 1e-10 * np.max(np.abs(c))


# ---------------------------------------------------------------- shell decomposition


@pytest.fixture(scope="module")
def shell(spec, K):
    return shell_at(spec, K, 1)


def test_resonant_sum_at_origin(spec, K, shell):
    w = 0.68 * TWO_PI
    ref = 3 / (spec.cell_area * (w**2 - K @ K))
    assert qg.resonant_sum(spec, K, w, np.zeros(2), shell) == pytest.approx(ref, rel=1e-14)


def test_resonant_sum_taylor(spec, K, shell):
    w = 0.68 * TWO_PI
    d = w**2 - K @ K
    errs = []
    for r in (0.1, 0.05, 0.025):
        x = r * np.array([math.cos(0.4), math.sin(0.4)])
        approx = (3 - TWO_PI**2 / 3 * r**2) / (spec.cell_area * d)
        errs.append(abs(qg.resonant_sum(spec, K, w, x, shell) - approx) * abs(d))
    # cubic remainder: halving r divides the error by about 8
    assert 6 < errs[0] / errs[1] < 10
    assert 6 < errs[1] / errs[2] < 10


def test_resonant_sum_rotation(spec, K, shell):
    x = np.array([0.07, -0.04])
    w = 0.7 * TWO_PI
    assert abs(qg.resonant_sum(spec, K, w, rotate(x), shell) - qg.resonant_sum(spec, K, w, x, shell)) < 1e-12


def test_resonant_gradients(spec, K, shell):
    w = 0.68 * TWO_PI
    x = np.array([0.05, 0.02])
    dk1, dk2, dw = qg.resonant_gradients(spec, K, w, x, shell)
    h = 1e-5
    f = lambda k, om: qg.resonant_sum(spec, k, om, x, shell)
    fd1 = (f(K + [h, 0], w) - f(K - [h, 0], w)) / (2 * h)
    fd2 = (f(K + [0, h], w) - f(K - [0, h], w)) / (2 * h)
    fdw = (f(K, w + h) - f(K, w - h)) / (2 * h)
    for a, b in ((dk1, fd1), (dk2, fd2), (dw, fdw)):
        assert abs(a - b) <= 1e-7 * abs(b)
    _, _, dw0 = qg.resonant_gradients(spec, K, w, np.zeros(2), shell)
    d = w**2 - K @ K
    assert dw0 == pytest.approx(-2 * w * 3 / (spec.cell_area * d**2), rel=1e-13)


def test_resonant_gradient_scaling_in_epsilon(spec, K, shell):
    # at omega^2 - |K|^2 ~ eps^2 the frequency derivative grows like eps^-4
    co = 2 * math.pi / (3 * spec.cell_area) * spec.unit**2
    vals = []
    for eps in (0.04, 0.02):
        w = math.sqrt(K @ K + 2 * co * eps**2)
        vals.append(abs(qg.resonant_gradients(spec, K, w, np.zeros(2), shell)[2]))
    assert vals[1] / vals[0] == pytest.approx(16, rel=0.02)


def test_smooth_remainder_bounded_over_window(spec, K, shell):
    rng = np.random.default_rng(7)
    wbar = np.linalg.norm(K)
    samples = []
    for _ in range(20):
        w = wbar + rng.uniform(1e-6, 0.1) * spec.unit
        x = rng.uniform(-1, 1, 2) * 2 * spec.epsilon / math.sqrt(2)
        samples.append(abs(qg.smooth_remainder(spec, K, w, x, shell)))
    # the remainder has no pole at wbar: values right next to it stay within the same bound
    near = abs(qg.smooth_remainder(spec, K, wbar + 1e-7 * spec.unit, np.zeros(2), shell))
    assert near <= 10 * max(samples)
    assert max(samples) < 10 * np.median(samples)


def test_smooth_remainder_rotation_and_smoothness(spec, K, shell):
    w = 0.67 * TWO_PI
    x = np.array([0.04, 0.03])
    a = qg.smooth_remainder(spec, K, w, x, shell)
    assert abs(a - qg.smooth_remainder(spec, K, w, rotate(x), shell)) < 1e-9

    def d2(h):
        pts = np.array([x - [h, 0], x, x + [h, 0]])
        v = qg.smooth_remainder(spec, K, w, pts, shell)
        return (v[0] - 2 * v[1] + v[2]) / h**2

    e1 = abs(d2(4e-3) - d2(2e-3))
    e2 = abs(d2(2e-3) - d2(1e-3))
    assert 3.0 < e1 / e2 < 5.0
