import math

import numpy as np
import pytest
from scipy.integrate import quad

from mcflab.errors import RefusalError
from mcflab.potential import (DoubleWell, STANDARD_WELL, analytic_surface_tension,
                              gauss_legendre_panels, profile_ode_residual,
                              standard_double_well)

well = STANDARD_WELL


def test_well_reference_values():
    # quartic well: W(0) = (1 - 0)^2 / 2 = 0.5, exact zeros at the wells
    assert well.value(0.0) == 0.5
    assert well.value(1.0) == 0.0
    assert well.value(-1.0) == 0.0


def test_well_positive_between_wells():
    s = np.linspace(-0.999, 0.999, 401)
    assert np.all(well.value(s) > 0.0)


def test_derivative_reference_value_and_zeros():
    # -2 s (1 - s^2) at s = 0.5 gives -0.75; wells are critical points
    assert well.derivative(0.5) == pytest.approx(-0.75, abs=1e-14)
    assert well.derivative(1.0) == 0.0
    assert well.derivative(-1.0) == 0.0


def test_derivative_matches_finite_difference_oracle():
    pts = np.linspace(-1.5, 1.5, 61)
    h = 1e-4
    oracle = (8.0 * (well.value(pts + h) - well.value(pts - h))
              - (well.value(pts + 2 * h) - well.value(pts - 2 * h))) / (12.0 * h)
    assert np.max(np.abs(oracle - well.derivative(pts))) < 1e-9


def test_non_finite_input_rejected():
    with pytest.raises(ValueError):
        well.value(float("nan"))
    with pytest.raises(ValueError):
        well.derivative(float("inf"))
    with pytest.raises(ValueError):
        well.profile(float("nan"))


def test_surface_tension_matches_adaptive_quadrature_oracle():
    oracle, err = quad(lambda s: math.sqrt(2.0 * well.value(s)), -1.0, 1.0,
                       epsabs=1e-14)
    assert err < 1e-12
    assert abs(well.surface_tension - oracle) < 1e-12
    assert abs(well.surface_tension - analytic_surface_tension()) < 1e-12


def test_surface_tension_stable_under_panel_doubling():
    a = standard_double_well(panels=1024).surface_tension
    b = standard_double_well(panels=2048).surface_tension
    assert abs(a - b) < 1e-12


def test_primitive_endpoints_monotone_and_midpoint():
    sigma = well.surface_tension
    assert well.primitive(-1.0) == pytest.approx(0.0, abs=1e-15)
    assert well.primitive(1.0) == pytest.approx(sigma, abs=1e-13)
    # even integrand: half the mass sits left of zero
    oracle, _ = quad(lambda s: math.sqrt(2.0 * well.value(s)), -1.0, 0.0)
    assert well.primitive(0.0) == pytest.approx(oracle, abs=1e-12)
    assert well.primitive(0.0) == pytest.approx(sigma / 2.0, abs=1e-12)
    rs = np.linspace(-1.0, 1.0, 101)
    assert np.all(np.diff(well.primitive(rs)) >= 0.0)


def test_primitive_outside_domain_refused():
    with pytest.raises(RefusalError):
        well.primitive(1.5)
    with pytest.raises(RefusalError):
        well.primitive(-1.0000001)


def test_profile_center_symmetry_and_saturation():
    assert well.profile(0.0) == 0.0
    assert abs(well.profile(20.0)) > 1.0 - 1e-8
    rs = np.linspace(-8.0, 8.0, 101)
    assert np.max(np.abs(well.profile(rs) + well.profile(-rs))) < 1e-14
    assert np.all(np.diff(well.profile(rs)) > 0.0)
    assert np.all(np.abs(well.profile(rs)) < 1.0)


def test_profile_matches_independent_rk4_oracle():
    # integrate dP/dr = sqrt(2 W(P)) from 0 to 1 with a fine fixed-step RK4
    def slope(p):
        return math.sqrt(2.0 * float(well.value(p)))

    p, n = 0.0, 20000
    h = 1.0 / n
    for _ in range(n):
        k1 = slope(p)
        k2 = slope(p + 0.5 * h * k1)
        k3 = slope(p + 0.5 * h * k2)
        k4 = slope(p + h * k3)
        p += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    assert abs(float(well.profile(1.0)) - p) < 1e-8


def test_profile_ode_residual_bound():
    rs = np.linspace(-10.0, 10.0, 10000)
    assert float(np.max(profile_ode_residual(well, rs))) < 1e-10


def test_profile_equipartition_pointwise():
    # for phi(x) = profile(x / eps): eps phi'^2 / 2 == W(phi) / eps
    for eps in (0.5, 0.05, 0.013):
        x = np.linspace(-6.0 * eps, 6.0 * eps, 301)
        kinetic = eps * (well.profile_slope(x / eps) / eps) ** 2 / 2.0
        potential = well.value(well.profile(x / eps)) / eps
        assert np.max(np.abs(kinetic - potential)) < 1e-10


def test_gauss_legendre_panels_polynomial_exactness():
    val = gauss_legendre_panels(lambda x: x ** 6 - x ** 2, -2.0, 3.0, panels=4)
    exact = (3.0 ** 7 - (-2.0) ** 7) / 7.0 - (3.0 ** 3 - (-2.0) ** 3) / 3.0
    assert val == pytest.approx(exact, rel=1e-14)


def test_custom_well_routes_through_abstraction():
    # W = (1 - s^2)^2 (1 + s^2) / 2, minima still at +-1
    custom = DoubleWell(
        energy=lambda s: (1.0 - s * s) ** 2 * (1.0 + s * s) / 2.0,
        energy_prime=lambda s: -s * (1.0 - s * s) * (1.0 + 3.0 * s * s),
        panels=512,
    )
    oracle, _ = quad(lambda s: math.sqrt((1 - s * s) ** 2 * (1 + s * s)), -1, 1)
    assert custom.surface_tension == pytest.approx(oracle, abs=1e-10)
    assert custom.value(1.0) == 0.0 and custom.value(-1.0) == 0.0
    # numerically integrated profile still satisfies the slope condition
    rs = np.linspace(-6.0, 6.0, 801)
    assert float(np.max(profile_ode_residual(custom, rs))) < 1e-5
    assert abs(custom.profile(19.0)) > 1.0 - 1e-6
    assert custom.stiffness_bound > 0.0


def test_custom_well_without_derivative_rejected():
    with pytest.raises(ValueError):
        DoubleWell(energy=lambda s: (1 - s * s) ** 2 / 2.0)
