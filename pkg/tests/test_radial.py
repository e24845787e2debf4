import math

import numpy as np
import pytest
from scipy import integrate

from thermal_bdf.momentum import ModelParams, make_radial_grid
from thermal_bdf.radial import (
    FOURIER_PREFACTOR,
    ChargeDensitySpec,
    RadialProfile,
    coulomb_pairing,
    decay_bound_ratio,
    decay_coefficient,
    fourier_convention,
    radial_forward_fourier,
    radial_inverse_fourier,
)
from thermal_bdf.response import build_screening_kernels, tabulate_response


def profile(fn, R=2.0, rule="panel", panels=4, order=24):
    g = make_radial_grid(R, panels=panels, order=order)
    return RadialProfile(g, fn(g.nodes), rule)


def test_convention_constants():
    c = fourier_convention()
    assert math.isclose(c["prefactor"], (2 * math.pi) ** -1.5)
    assert math.isclose(c["radial_prefactor"], math.sqrt(2 / math.pi))


def test_gaussian_transform_matches_numerical_transform():
    nu = ChargeDensitySpec("gaussian", 1.0, 1.0)
    k = np.array([0.3, 1.0, 2.5])
    assert np.allclose(nu.hat(k), FOURIER_PREFACTOR * np.exp(-k**2 / 2), rtol=1e-15)
    num = radial_forward_fourier(nu.density, k, 12.0, edges=np.linspace(0, 12, 7))
    assert np.allclose(num, nu.hat(k), rtol=1e-10)
    assert math.isclose(float(nu.hat(0.0)), FOURIER_PREFACTOR)


def test_point_regularized_transform():
    nu = ChargeDensitySpec("point-regularized", 2.0, 0.7)
    k = np.array([0.2, 1.0, 3.0])
    num = radial_forward_fourier(nu.density, k, 60.0, edges=np.linspace(0, 60, 31))
    assert np.allclose(num, nu.hat(k), rtol=1e-9)
    total, _ = integrate.quad(lambda x: 4 * math.pi * x * x * nu.density(x), 0, np.inf)
    assert math.isclose(total, 2.0, rel_tol=1e-10)


def test_parseval_gaussian():
    nu = ChargeDensitySpec("gaussian", 1.3, 0.8)
    lhs, _ = integrate.quad(lambda x: 4 * math.pi * x * x * nu.density(x) ** 2, 0, np.inf)
    rhs, _ = integrate.quad(lambda k: 4 * math.pi * k * k * nu.hat(k) ** 2, 0, np.inf)
    assert math.isclose(lhs, rhs, rel_tol=1e-10)


def test_coulomb_pairing_gaussians():
    assert math.isclose(coulomb_pairing(*[ChargeDensitySpec("gaussian", 1.0, 1.0)] * 2), 1 / math.sqrt(math.pi),
                        rel_tol=1e-10)
    nu = ChargeDensitySpec("gaussian", 2.0, 0.5)
    assert math.isclose(coulomb_pairing(nu, nu), 4 / (0.5 * math.sqrt(math.pi)), rel_tol=1e-10)
    assert math.isclose(4 / (0.5 * math.sqrt(math.pi)), 4.51352, rel_tol=1e-5)
    zero = profile(lambda r: 0 * r)
    assert coulomb_pairing(zero, zero) == 0.0


def test_profile_outside_support_and_exact_polynomials():
    p = profile(lambda r: r**3 - 2 * r)
    r = np.array([0.1, 0.77, 1.9])
    assert np.allclose(p(r), r**3 - 2 * r, atol=1e-13)
    assert np.allclose(p(r, 1), 3 * r**2 - 2, atol=1e-11)
    assert np.allclose(p(r, 3), 6.0, atol=1e-7)
    assert p(-0.1) == 0.0 and p(2.5) == 0.0
    c = profile(lambda r: r**3 - 2 * r, rule="cubic")
    assert np.allclose(c(r), r**3 - 2 * r, atol=1e-12)


def test_inverse_of_zero_profile():
    assert np.all(radial_inverse_fourier(profile(lambda r: 0 * r), np.array([1.0, 5.0])) == 0)


def test_inverse_of_bump_against_dense_trapezoid():
    R = 2.0
    fn = lambda r: (1 - (r / R) ** 2) ** 4
    bhat = profile(fn, R)
    rr = np.linspace(0, R, 2_000_001)
    for x in (0.5, 2.0, 5.0):
        ref = math.sqrt(2 / math.pi) / x * integrate.trapezoid(rr * fn(rr) * np.sin(rr * x), rr)
        assert math.isclose(radial_inverse_fourier(bhat, x), ref, rel_tol=1e-8)


def test_inverse_of_gaussian():
    bhat = profile(lambda r: np.exp(-r * r / 2), R=12.0, panels=12)
    x = np.array([0.2, 1.3, 3.0])
    assert np.allclose(radial_inverse_fourier(bhat, x), np.exp(-x**2 / 2), atol=1e-12, rtol=1e-6)


def test_inverse_requires_positive_x():
    with pytest.raises(ValueError):
        radial_inverse_fourier(profile(lambda r: r), 0.0)


def test_flat_endpoint_has_no_curvature_term():
    R = 2.0
    c = decay_coefficient(profile(lambda r: (1 - (r / R) ** 2) ** 3, R))
    assert abs(c.endpoint_curvature) < 1e-10
    assert abs(c.boundary_value) < 1e-12 and abs(c.boundary_slope) < 1e-10
    assert abs(c.origin_slope) < 1e-10


def test_cubic_rule_uses_checked_finite_differences():
    R = 2.0
    fn = lambda r: (1 - (r / R) ** 2) ** 3
    c = decay_coefficient(profile(fn, R, rule="cubic", panels=8))
    # spline second derivatives at the end are only O(h^2) accurate
    assert abs(c.endpoint_curvature) < 1e-3


def test_linear_profile_reports_slow_envelope():
    bhat = profile(lambda r: 1 - r / 2.0)
    c = decay_coefficient(bhat)
    assert abs(c.boundary_value) < 1e-14
    # g = r(1 - r/2) has g'(2) = -1, which survives in the x^2 |b| expansion
    assert math.isclose(c.boundary_slope, -1.0, rel_tol=1e-10)
    x = np.linspace(5, 50, 200)
    ratio = decay_bound_ratio(bhat, c, x)
    assert ratio.max() <= 1.0
    # the envelope grows with x: the |x|^-4 law does not hold here
    assert c.envelope(50.0) > 5 * c.envelope(5.0)


def test_screening_kernels_obey_envelope():
    params = ModelParams(0.2, 1.0, 1.0)
    ker = build_screening_kernels(params, tabulate_response(params, with_direct=False))
    x = np.linspace(5, 50, 451)
    for bhat in (ker.b1hat, ker.b2hat):
        c = decay_coefficient(bhat)
        assert decay_bound_ratio(bhat, c, x).max() <= 1.1
