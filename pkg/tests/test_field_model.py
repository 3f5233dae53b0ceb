import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magwells.field_model import (ExampleFieldParams, FieldError, FieldSpec, Sampling,
                                  check_assumptions, constant_field, make_example_field,
                                  well_coefficients, well_profile)


def central_difference(fun, q1, q2, axis, step=1e-5):
    if axis == 1:
        return (fun(q1 + step, q2) - fun(q1 - step, q2)) / (2 * step)
    return (fun(q1, q2 + step) - fun(q1, q2 - step)) / (2 * step)


def richardson_difference(fun, q1, q2, axis, step=4e-3, levels=3):
    table = [central_difference(fun, q1, q2, axis, step / 2**k) for k in range(levels)]
    for m in range(1, levels):
        table = [(4**m * fine - coarse) / (4**m - 1) for coarse, fine in zip(table, table[1:])]
    return table[0]


def quadratic_field(b0=1.0, k1=2.0, k2=2.0, c_u=1.0):
    """B = b0 + k1 q1^2/2 + k2 (q2 - c_u)^2/2 near the upper well."""

    def B(q1, q2):
        return b0 + 0.5 * k1 * np.asarray(q1, dtype=complex) ** 2 + 0.5 * k2 * (q2 - c_u) ** 2

    def d1B(q1, q2):
        return k1 * np.asarray(q1, dtype=complex) + 0 * q2

    def d2B(q1, q2):
        return k2 * (q2 - c_u) + 0 * np.asarray(q1, dtype=complex)

    def const(value):
        return lambda q1, q2: np.full(np.broadcast(np.asarray(q1), np.asarray(q2)).shape,
                                      value, dtype=complex)

    return FieldSpec(b0=b0, eps=0.5, strip_r=0.3, c_u=c_u, eval=B, d1B=d1B, d2B=d2B,
                     d11B=const(k1), d22B=const(k2), d12B=const(0.0))


def test_value_at_well_is_b0():
    f = make_example_field(ExampleFieldParams(eps1=0.5, eps2=0.1))
    assert f.eval(0.0, f.c_u) == pytest.approx(f.b0, abs=1e-15)


@pytest.mark.parametrize("params", [ExampleFieldParams(),
                                    ExampleFieldParams(eps1=0.5, eps2=0.1, beta=2.0, c_u=1.3)])
def test_well_curvatures_against_finite_differences(params):
    f = make_example_field(params)
    h = 1e-4
    k1 = (f.eval(h, f.c_u) - 2 * f.eval(0.0, f.c_u) + f.eval(-h, f.c_u)).real / h**2
    k2 = (f.eval(0.0, f.c_u + h) - 2 * f.eval(0.0, f.c_u) + f.eval(0.0, f.c_u - h)).real / h**2
    w = well_coefficients(f)
    assert w["curvatures"][0] == pytest.approx(2 * params.b0 * params.eps1, rel=1e-12)
    assert w["curvatures"][1] == pytest.approx(params.b0 * params.eps2 * 4 * params.beta
                                               * params.c_u**2, rel=1e-12)
    assert w["curvatures"][0] == pytest.approx(k1, rel=1e-6)
    assert w["curvatures"][1] == pytest.approx(k2, rel=1e-6)
    assert w["d0"] == pytest.approx(np.sqrt(k1 * k2) / (2 * params.b0), rel=1e-6)


def test_isotropic_quadratic_well_coefficients():
    w = well_coefficients(quadratic_field(b0=1.0, k1=2.0, k2=2.0))
    np.testing.assert_allclose(w["H"], np.eye(2), rtol=0, atol=1e-15)
    assert w["d0"] == pytest.approx(1.0, rel=1e-15)
    assert w["d1"] == pytest.approx(2.0, rel=1e-15)


def test_degenerate_well_rejected():
    with pytest.raises(FieldError):
        well_coefficients(constant_field(1.0))


def test_eps2_above_eps1_rejected():
    with pytest.raises(FieldError):
        make_example_field(ExampleFieldParams(eps1=0.1, eps2=0.2))


def test_default_W_shape():
    q = np.linspace(-4, 4, 2001)
    W, dW, ddW, _ = well_profile(q, 1.0, 0.25)
    assert W.min() >= 0 and W.max() <= 0.5
    np.testing.assert_allclose(W, W[::-1], atol=1e-15)
    assert well_profile(1.0, 1.0, 0.25)[0] == 0.0
    assert well_profile(1.0, 1.0, 0.25)[2] > 0


def test_W_derivatives_against_finite_differences():
    q = np.linspace(-2.5, 2.5, 41)
    W, dW, ddW, dddW = well_profile(q, 1.0, 0.7)
    step = 1e-5
    for lower, upper in ((0, 1), (1, 2), (2, 3)):
        plus = well_profile(q + step, 1.0, 0.7)[lower]
        minus = well_profile(q - step, 1.0, 0.7)[lower]
        fd = (plus - minus) / (2 * step)
        exact = (W, dW, ddW, dddW)[upper]
        np.testing.assert_allclose(fd, exact, rtol=1e-7, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(eps1=st.floats(0.05, 0.5), ratio=st.floats(0.05, 1.0), beta=st.floats(0.2, 4.0),
       seed=st.integers(0, 2**31 - 1))
def test_analytic_derivatives_match_finite_differences(eps1, ratio, beta, seed):
    p = ExampleFieldParams(eps1=eps1, eps2=eps1 * ratio, beta=beta, strip_r=0.3)
    f = make_example_field(p)
    rng = np.random.default_rng(seed)
    q1 = rng.uniform(-2, 2, 100) + 1j * rng.uniform(-0.25, 0.25, 100)
    q2 = rng.uniform(-2, 2, 100)
    pairs = ((f.eval, f.d1B, 1), (f.eval, f.d2B, 2), (f.d1B, f.d11B, 1), (f.d2B, f.d22B, 2),
             (f.d1B, f.d12B, 2), (f.d22B, f.d222B, 2))
    for base, deriv, axis in pairs:
        fd = richardson_difference(base, q1, q2, axis)
        exact = deriv(q1, q2)
        scale = np.maximum(np.abs(exact), 1e-3 * p.b0)
        assert np.max(np.abs(fd - exact) / scale) < 1e-7


@settings(max_examples=20, deadline=None)
@given(t=st.lists(st.floats(-0.29, 0.29), min_size=5, max_size=5),
       q2=st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_field_real_on_imaginary_axis(t, q2):
    f = make_example_field(ExampleFieldParams(eps1=0.5, eps2=0.1, strip_r=0.3))
    values = f.eval(1j * np.array(t), np.array(q2))
    assert np.max(np.abs(values.imag)) <= 1e-12


def test_default_preset_passes_assumptions(field):
    report = check_assumptions(field)
    assert report.passed, report.failed()


def test_documented_parameters_pass():
    f = make_example_field(ExampleFieldParams(eps1=0.5, eps2=0.1, strip_r=0.3))
    report = check_assumptions(f)
    assert report.passed, report.failed()


@pytest.mark.parametrize("eps1", [0.1, 0.3, 0.5])
@pytest.mark.parametrize("eps_ratio", [0.2, 0.6, 1.0])
@pytest.mark.parametrize("strip_r", [0.1, 0.2])
def test_parameter_lattice_passes(eps1, eps_ratio, strip_r):
    f = make_example_field(ExampleFieldParams(eps1=eps1, eps2=eps1 * eps_ratio,
                                              strip_r=strip_r))
    report = check_assumptions(f, Sampling(n_real=31, n_imag=5, n_random=200))
    assert report.passed, report.failed()


def test_wide_strip_fails_with_location():
    f = make_example_field(ExampleFieldParams(eps1=0.5, eps2=0.5, strip_r=0.95))
    report = check_assumptions(f)
    assert not report.passed
    for name in report.failed():
        check = report.checks[name]
        assert np.isfinite(check.margin) and check.margin < 0
        assert np.isfinite(complex(check.where[0])) and np.isfinite(check.where[1])


def test_misplaced_well_fails():
    base = make_example_field(ExampleFieldParams())
    shifted = FieldSpec(b0=base.b0, eps=base.eps, strip_r=base.strip_r, c_u=1.2,
                        eval=base.eval, d1B=base.d1B, d2B=base.d2B, d11B=base.d11B,
                        d22B=base.d22B, d12B=base.d12B)
    report = check_assumptions(shifted)
    assert "well_position" in report.failed()


def test_constant_field_fails_only_nondegeneracy():
    report = check_assumptions(constant_field(1.0))
    assert report.failed() == ["well_nondegenerate"]
