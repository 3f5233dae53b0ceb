import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import polynomial as npoly
from scipy.integrate import IntegrationWarning, quad

from magwells.oscillator import (GaussianState, LadderBasis, OscillatorData, OscillatorError,
                                 apply_M, gaussian_pair, m0_symbol, pair_constants,
                                 weyl_monomial)


def random_data(rng, sigma=0.0):
    calB = 1.0 + 0.3 * rng.uniform(-1, 1) + 0.2j * rng.uniform(-1, 1)
    alpha = 0.4 * rng.uniform(-1, 1) + 0.2j * rng.uniform(-1, 1)
    c = lambda *shape: rng.uniform(-0.3, 0.3, shape) + 1j * rng.uniform(-0.3, 0.3, shape)
    hB, ha = c(2, 2), c(2, 2)
    return OscillatorData(x2=0.0, calB=calB, alpha=alpha, grad_calB=c(2), grad_alpha=c(2),
                          hess_calB=hB + hB.T, hess_alpha=ha + ha.T, Sigma=sigma,
                          dphi=0.0, ddphi=0.5)


def values(state: GaussianState, x):
    return npoly.polyval(x, state.P) * np.exp(-state.a * x**2 / 2)


def pointwise_M0(od, state, x):
    """M0 = (B^2 + alpha^2) D^2 + x^2 + alpha (x D + D x) + Sigma with D = -i d/dx,
    applied by differentiating the polynomial-Gaussian directly."""
    P, a = state.P, state.a
    P1 = npoly.polysub(npoly.polyder(P), npoly.polymulx(P) * a)
    P2 = npoly.polysub(npoly.polyder(P1), npoly.polymulx(P1) * a)
    g = np.exp(-a * x**2 / 2)
    psi, dpsi, ddpsi = (npoly.polyval(x, q) * g for q in (P, P1, P2))
    kinetic = -(od.calB**2 + od.alpha**2) * ddpsi
    mixed = -1j * od.alpha * (2 * x * dpsi + psi)
    return kinetic + x**2 * psi + mixed + od.Sigma * psi


def quad_inner(s, t):
    f = lambda x: values(s, x) * np.conj(values(t, x))
    with warnings.catch_warnings():
        # odd integrands vanish and trigger a harmless roundoff warning
        warnings.simplefilter("ignore", IntegrationWarning)
        re = quad(lambda x: f(x).real, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13, limit=400)[0]
        im = quad(lambda x: f(x).imag, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13, limit=400)[0]
    return re + 1j * im


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), deg1=st.integers(0, 5), deg2=st.integers(0, 5))
def test_inner_product_against_quadrature(seed, deg1, deg2):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.5, 2) + 1j * rng.uniform(-1, 1)
    b = rng.uniform(0.5, 2) + 1j * rng.uniform(-1, 1)
    s = GaussianState(a, rng.normal(size=deg1 + 1) + 1j * rng.normal(size=deg1 + 1))
    t = GaussianState(b, rng.normal(size=deg2 + 1) + 1j * rng.normal(size=deg2 + 1))
    closed = s.inner(t)
    reference = quad_inner(s, t)
    assert abs(closed - reference) <= 1e-11 * max(1.0, abs(reference))


def test_gaussian_norm_is_one_and_pair_is_dual():
    rng = np.random.default_rng(1)
    for _ in range(20):
        od = random_data(rng)
        F, G = gaussian_pair(od)
        assert F.norm() == pytest.approx(1.0, abs=1e-14)
        assert abs(F.inner(G) - 1.0) <= 1e-14


def test_non_integrable_exponent_rejected():
    with pytest.raises(OscillatorError):
        GaussianState(-0.1 + 0j, [1.0])


def test_weyl_quantization_of_x_xi_is_symmetrized():
    rng = np.random.default_rng(2)
    s = GaussianState(0.8 + 0.3j, rng.normal(size=3) + 0j)
    got = weyl_monomial(1, 1, s)
    expected = s.D().mul_x().scale(0.5) + s.mul_x().D().scale(0.5)
    np.testing.assert_allclose(got.P, expected.P, atol=1e-14)


def test_ladder_residuals_fifty_random_pairs():
    rng = np.random.default_rng(7)
    x = np.linspace(-9, 9, 721)
    worst_closed = worst_pointwise = 0.0
    for _ in range(50):
        od = random_data(rng, sigma=rng.uniform(-0.1, 0.1))
        basis = LadderBasis(od, n_max=5)
        for n, psi in enumerate(basis.psi):
            lam = (2 * n + 1) * od.calB + od.Sigma
            res = apply_M(0, od, psi) - psi.scale(lam)
            worst_closed = max(worst_closed, res.norm() / psi.norm())
            direct = pointwise_M0(od, psi, x) - lam * values(psi, x)
            worst_pointwise = max(worst_pointwise,
                                  np.max(np.abs(direct)) / np.max(np.abs(values(psi, x))))
    assert worst_closed <= 1e-10
    assert worst_pointwise <= 1e-10


def test_biorthogonality():
    rng = np.random.default_rng(11)
    for _ in range(10):
        basis = LadderBasis(random_data(rng), n_max=7)
        gram = np.array([[p.inner(d) for d in basis.dual] for p in basis.psi])
        np.testing.assert_allclose(gram, np.eye(7), atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), degree=st.integers(0, 7))
def test_resolvent_identity(seed, degree):
    rng = np.random.default_rng(seed)
    od = random_data(rng, sigma=0.05)
    basis = LadderBasis(od, n_max=9)
    F, G = gaussian_pair(od)
    s = GaussianState(F.a, rng.normal(size=degree + 1) + 1j * rng.normal(size=degree + 1))
    z = od.eigen0 + 0.1 * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
    r = basis.R0_apply(z, s)
    projected = s - F.scale(s.inner(G))
    lhs = apply_M(0, od, r) - r.scale(z)
    assert (lhs - projected).norm() <= 1e-10 * max(1.0, s.norm())
    assert abs(r.inner(G)) <= 1e-10 * max(1.0, s.norm())


def test_ground_state_solves_eigen_equation():
    od = random_data(np.random.default_rng(3), sigma=0.2)
    F, _ = gaussian_pair(od)
    res = apply_M(0, od, F) - F.scale(od.eigen0)
    assert res.norm() <= 1e-13


def test_m0_symbol_at_real_data_is_selfadjoint():
    od = OscillatorData(x2=0.0, calB=1.1, alpha=0.3, grad_calB=np.zeros(2),
                        grad_alpha=np.zeros(2), hess_calB=np.zeros((2, 2)),
                        hess_alpha=np.zeros((2, 2)), Sigma=0.0, dphi=0.0, ddphi=0.0)
    assert all(np.isreal(v) for v in m0_symbol(od).values())
    a, C, b, c = pair_constants(od.calB, od.alpha)
    assert a == pytest.approx(b)
