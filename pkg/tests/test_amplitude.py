import warnings

import numpy as np
import pytest
from numpy.polynomial import polynomial as npoly
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import make_interp_spline

from magwells.amplitude import (AmplitudeError, AmplitudeOptions, D_value, Jcal_at, Q2pm_at,
                                amplitude_profile, k_values, oscillator_data, transport_a0,
                                z2_closed_form)
from magwells.field_model import ExampleFieldParams, FieldSpec, make_example_field, well_coefficients
from magwells.oscillator import LadderBasis, OscillatorData, apply_M, gaussian_pair

# first validated run of the default preset, frozen
C0_FROZEN = 0.44700026871969817


def flat_data(calB=1.0, alpha=0.0, sigma=0.0, T=0.0):
    zero2, zero22 = np.zeros(2, complex), np.zeros((2, 2), complex)
    return OscillatorData(x2=0.0, calB=calB, alpha=alpha, grad_calB=zero2, grad_alpha=zero2,
                          hess_calB=zero22, hess_alpha=zero22, Sigma=sigma, dphi=0.0,
                          ddphi=0.0, T_value=T)


def quad_inner(s, t):
    def f(x):
        return (npoly.polyval(x, s.P) * np.exp(-s.a * x**2 / 2)
                * np.conj(npoly.polyval(x, t.P) * np.exp(-t.a * x**2 / 2)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        re = quad(lambda x: f(x).real, -np.inf, np.inf, epsabs=1e-15, epsrel=1e-14, limit=400)[0]
        im = quad(lambda x: f(x).imag, -np.inf, np.inf, epsabs=1e-15, epsrel=1e-14, limit=400)[0]
    return re + 1j * im


def test_selfadjoint_pair_is_scaled_gaussian():
    b0 = 1.7
    F, G = gaussian_pair(flat_data(calB=b0))
    assert F.a == pytest.approx(1 / b0, rel=1e-15)
    assert F.P[0] == pytest.approx((np.pi * b0) ** -0.25, rel=1e-14)
    np.testing.assert_allclose(G.P, F.P, rtol=1e-14)
    assert G.a == pytest.approx(F.a, rel=1e-15)


def test_pair_duality_against_quadrature():
    rng = np.random.default_rng(5)
    for _ in range(10):
        od = flat_data(calB=1 + 0.3 * rng.uniform(-1, 1) + 0.2j * rng.uniform(-1, 1),
                       alpha=0.4 * rng.uniform(-1, 1) + 0.2j * rng.uniform(-1, 1))
        F, G = gaussian_pair(od)
        assert abs(quad_inner(F, G) - 1) <= 1e-12
        assert abs(quad_inner(F, F) - 1) <= 1e-12


def test_harmonic_ground_state():
    F, _ = gaussian_pair(flat_data())
    out = apply_M(0, flat_data(), F)
    np.testing.assert_allclose(out.P, F.P, atol=1e-15)


def test_ground_eigenvalue_on_weight(field, profile):
    for od in oscillator_data(field, profile, [-0.6, 0.0, 0.4]):
        F, _ = gaussian_pair(od)
        res = apply_M(0, od, F) - F.scale(od.calB + od.Sigma)
        assert res.norm() <= 1e-12


def test_m1_matrix_element_vanishes_by_parity(field, profile):
    for od in oscillator_data(field, profile, [-0.5, 0.2, 0.7]):
        F, G = gaussian_pair(od)
        assert abs(apply_M(1, od, F).inner(G)) <= 1e-14


def test_resolvent_kills_ground_state_and_divides_third_level(field, profile):
    od = oscillator_data(field, profile, [0.3])[0]
    basis = LadderBasis(od, n_max=9)
    F, _ = gaussian_pair(od)
    assert basis.R0_apply(field.b0, F).norm() <= 1e-13
    psi3 = basis.psi[2]
    got = basis.R0_apply(field.b0, psi3)
    expected = psi3.scale(1 / (5 * od.calB + od.Sigma - field.b0))
    assert (got - expected).norm() <= 1e-12 * expected.norm()
    assert basis.eigenvalues[1] == pytest.approx(3 * od.calB + od.Sigma, rel=1e-14)


def test_constant_field_q2_is_minus_T():
    for T in (0.0, 0.3, -0.2 + 0.1j):
        assert Q2pm_at(flat_data(calB=1.3, T=T)) == pytest.approx(-T, abs=1e-14)


def isotropic_field(k, b0=1.0, c_u=1.0):
    def const(value):
        return lambda q1, q2: value + 0 * (q1 + q2)
    return FieldSpec(b0=b0, eps=0.5, strip_r=0.3, c_u=c_u,
                     eval=lambda q1, q2: b0 + 0.5 * k * (q1**2 + (q2 - c_u) ** 2),
                     d1B=lambda q1, q2: k * q1, d2B=lambda q1, q2: k * (q2 - c_u),
                     d11B=const(k), d22B=const(k), d12B=const(0.0))


@pytest.mark.parametrize("k,b0", [(1.0, 1.0), (0.4, 2.0), (3.0, 0.5)])
def test_z2_closed_form_isotropic(k, b0):
    assert z2_closed_form(isotropic_field(k, b0)) == pytest.approx(3 * k / (2 * b0), rel=1e-15)


def test_z2_closed_form_example_field(field):
    k1, k2 = well_coefficients(field)["curvatures"]
    expected = np.sqrt(k1 * k2) / 2 + (np.sqrt(k1) + np.sqrt(k2)) ** 2 / 4
    assert z2_closed_form(field) == pytest.approx(expected, rel=1e-15)
    assert z2_closed_form(field) == pytest.approx(0.17454451150103323, rel=1e-12)


def test_transport_z2_equals_harmonic_coefficient(amplitude, field):
    w = well_coefficients(field)
    # the transport route lands on d1, not on the closed form d0 + d1
    assert amplitude.z2 == pytest.approx(w["d1"], rel=1e-9)
    assert amplitude.z2_closed == pytest.approx(w["d0"] + w["d1"], rel=1e-12)


def test_transport_toy_problem():
    c_u, d, k = 1.0, 0.37, -1.3
    edges = np.linspace(c_u, -0.8, 13)
    a0 = transport_a0(edges, lambda x: np.full_like(x, d / k), order=6)
    np.testing.assert_allclose(a0, np.exp(-(d / k) * (edges - c_u)), rtol=1e-13)
    assert a0[0] == 1.0


def test_transport_residual_with_spline_derivative(field, profile, amplitude):
    z2 = amplitude.z2

    def D_over_k(x):
        ods = oscillator_data(field, profile, x)
        return np.array([D_value(o, z2) / k_values(o)[0] for o in ods])

    edges = np.linspace(field.c_u, 0.5, 61)
    a0 = transport_a0(edges, D_over_k, order=5)
    assert a0[0] == 1.0
    x, a = edges[6:][::-1], a0[6:][::-1]
    da = make_interp_spline(x, a, k=7).derivative()(x)
    ods = oscillator_data(field, profile, x)
    k = np.array([k_values(o)[0] for o in ods])
    D = np.array([D_value(o, z2) for o in ods])
    assert np.max(np.abs(k * da + D * a) / np.abs(a)) <= 1e-7


def test_D_vanishes_at_upper_well(amplitude):
    assert amplitude.diagnostics["D_cu_abs"] <= 1e-9


def test_jcal_routes_and_symmetric_point(field, profile, amplitude):
    assert amplitude.diagnostics["Jcal_route_gap"] <= 1e-8
    od0 = oscillator_data(field, profile, [0.0])[0]
    product, integral = Jcal_at(od0, od0)
    assert product == pytest.approx(od0.grad_calB[0] / 1j, rel=1e-13)
    assert integral == pytest.approx(product, rel=1e-8)


def test_profile_invariants(amplitude):
    d = amplitude.diagnostics
    assert d["const_spread"] <= 1e-6
    assert d["Q2_symmetry_gap"] <= 1e-7
    assert d["c0_rel_diff"] <= 1e-5
    assert d["pair_derivative_gap"] <= 1e-7
    assert amplitude.c0 > 0


def test_c0_regression(amplitude):
    assert amplitude.c0 == pytest.approx(C0_FROZEN, rel=1e-8)
    assert amplitude.c0_secondary == pytest.approx(C0_FROZEN, rel=1e-5)


def test_profile_columns(amplitude):
    cols = amplitude.to_columns()
    n = amplitude.grid.size
    assert set(cols) == {"x2"} | {f"{name}_{part}" for name in ("Q2pm", "D", "a0", "Jcal", "const_check")
                                  for part in ("re", "im")}
    assert all(len(v) == n for v in cols.values())
    np.testing.assert_allclose(amplitude.grid, -amplitude.grid[::-1], atol=1e-15)


def test_option_validation():
    for bad in (dict(alpha_sign=0), dict(T_model="guess"), dict(n_max=5),
                dict(half_width_fraction=1.2)):
        with pytest.raises(AmplitudeError):
            AmplitudeOptions(**bad).validate()


def test_alternative_conventions_still_satisfy_invariants(field, profile):
    w = well_coefficients(field)
    plus = amplitude_profile(field, profile, AmplitudeOptions(alpha_sign=1))
    assert plus.diagnostics["const_spread"] <= 1e-6
    assert plus.diagnostics["c0_rel_diff"] <= 1e-5
    # the opposite sign moves z2 away from both d1 and d0 + d1
    assert abs(plus.z2 - w["d1"]) > 1e-2
    assert abs(plus.z2 - (w["d0"] + w["d1"])) > 1e-3


def test_single_well_field_rejected():
    f = make_example_field(ExampleFieldParams())
    flat = FieldSpec(b0=f.b0, eps=f.eps, strip_r=f.strip_r, c_u=-0.5, eval=f.eval, d1B=f.d1B,
                     d2B=f.d2B, d11B=f.d11B, d22B=f.d22B, d12B=f.d12B)
    with pytest.raises(AmplitudeError):
        amplitude_profile(flat, None)
