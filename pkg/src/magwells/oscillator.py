"""Exact algebra of states P(x) exp(-a x^2/2) for the non-selfadjoint
harmonic oscillator in the cyclotron variable x = x1.

Operators are Weyl quantizations (hbar = 1) of polynomial symbols in
(x, xi); a symbol is a dict {(j, k): coefficient} for x^j xi^k.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np


class OscillatorError(RuntimeError):
    pass


def _trim(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=complex)
    nz = np.nonzero(p)[0]
    return p[: nz[-1] + 1] if nz.size else np.zeros(1, dtype=complex)


@dataclass(frozen=True)
class GaussianState:
    """P(x) exp(-a x^2 / 2); P holds ascending coefficients."""

    a: complex
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "P", _trim(self.P))
        if not np.real(self.a) > 0:
            raise OscillatorError(f"non-integrable exponent a = {self.a}")

    @property
    def degree(self) -> int:
        return len(self.P) - 1

    def __add__(self, other: "GaussianState") -> "GaussianState":
        _same_exponent(self, other)
        n = max(len(self.P), len(other.P))
        return GaussianState(self.a, np.pad(self.P, (0, n - len(self.P)))
                             + np.pad(other.P, (0, n - len(other.P))))

    def __sub__(self, other: "GaussianState") -> "GaussianState":
        return self + other.scale(-1.0)

    def scale(self, c: complex) -> "GaussianState":
        return GaussianState(self.a, c * self.P)

    def mul_x(self) -> "GaussianState":
        return GaussianState(self.a, np.concatenate([[0.0], self.P]))

    def mul_poly(self, q) -> "GaussianState":
        return GaussianState(self.a, np.convolve(self.P, np.asarray(q, dtype=complex)))

    def D(self) -> "GaussianState":
        """-i d/dx."""
        dP = np.arange(1, len(self.P)) * self.P[1:] if len(self.P) > 1 else np.zeros(1)
        xP = np.concatenate([[0.0], self.P])
        n = max(len(dP), len(xP))
        deriv = np.pad(dP, (0, n - len(dP))) - self.a * np.pad(xP, (0, n - len(xP)))
        return GaussianState(self.a, -1j * deriv)

    def inner(self, other: "GaussianState") -> complex:
        """<self, other> = int self * conj(other) dx, by closed-form moments."""
        w = self.a + np.conj(other.a)
        deg = self.degree + other.degree
        moments = gaussian_moments(w, deg)
        conv = np.convolve(self.P, np.conj(other.P))
        return complex(np.dot(conv, moments[: len(conv)]))

    def norm(self) -> float:
        return float(np.sqrt(np.real(self.inner(self))))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.polynomial.polynomial.polyval(x, self.P) * np.exp(-0.5 * self.a * x * x)


def _same_exponent(s: GaussianState, t: GaussianState) -> None:
    if not np.isclose(s.a, t.a, rtol=1e-14, atol=0):
        raise OscillatorError(f"exponent mismatch {s.a} vs {t.a}")


def gaussian_moments(w: complex, degree: int) -> np.ndarray:
    """int x^n exp(-w x^2/2) dx for n = 0..degree (principal square root, Re w > 0)."""
    m = np.zeros(degree + 1, dtype=complex)
    m[0] = np.sqrt(2.0 * np.pi / w)
    for n in range(2, degree + 1, 2):
        m[n] = m[n - 2] * (n - 1) / w
    return m


# ---------------------------------------------------------------------------
# Weyl quantization

def weyl_monomial(j: int, k: int, s: GaussianState) -> GaussianState:
    """Op^w(x^j xi^k) s = 2^-j sum_l C(j,l) x^l D^k x^(j-l) s."""
    out = None
    for l in range(j + 1):
        t = s
        for _ in range(j - l):
            t = t.mul_x()
        for _ in range(k):
            t = t.D()
        for _ in range(l):
            t = t.mul_x()
        t = t.scale(comb(j, l) / 2**j)
        out = t if out is None else out + t
    return out


def apply_symbol(symbol: dict, s: GaussianState) -> GaussianState:
    out = s.scale(0.0)
    for (j, k), c in symbol.items():
        if c != 0:
            out = out + weyl_monomial(j, k, s).scale(c)
    return out


def _add(sym: dict, key, value):
    sym[key] = sym.get(key, 0.0) + value


# ---------------------------------------------------------------------------
# operator-symbols M0, M1, M2 at a point X2

@dataclass
class OscillatorData:
    """Coefficients of M0, M1, M2 at X2 = (x2, xi2) on the weight phi_u.

    alpha and its derivatives are stored with ``alpha_sign`` already applied.
    Gradients and Hessians are with respect to the Darboux variables.
    """

    x2: float
    calB: complex
    alpha: complex
    grad_calB: np.ndarray
    grad_alpha: np.ndarray
    hess_calB: np.ndarray
    hess_alpha: np.ndarray
    Sigma: float
    dphi: float
    ddphi: float
    T_value: complex = 0.0
    alpha_sign: int = 1
    dSigma: float = 0.0

    @property
    def eigen0(self) -> complex:
        return self.calB + self.Sigma

    def directions(self):
        """(dcalB, dalpha) along xi2 and along x2 at xi2 = 0."""
        b1, b2 = self.grad_calB
        a1, a2 = self.grad_alpha
        d_xi = (b1, a1)
        d_x = (1j * self.ddphi * b1 + b2, 1j * self.ddphi * a1 + a2)
        return d_xi, d_x


def m0_symbol(od: OscillatorData) -> dict:
    B, al = od.calB, od.alpha
    return {(0, 2): B * B + al * al, (2, 0): 1.0, (1, 1): 2.0 * al, (0, 0): od.Sigma}


def m1_symbol(od: OscillatorData) -> dict:
    B, al = od.calB, od.alpha
    b1, b2 = od.grad_calB
    a1, a2 = od.grad_alpha
    sym = {}
    _add(sym, (1, 2), 2 * B * b1 + 2 * a2 + 2 * al * a1)
    _add(sym, (0, 3), 2 * B * b2 + 2 * al * a2)
    _add(sym, (2, 1), 2 * a1)
    return sym


def m2_symbol(od: OscillatorData) -> dict:
    B, al = od.calB, od.alpha
    b1, b2 = od.grad_calB
    a1, a2 = od.grad_alpha
    (b11, b12), (_, b22) = od.hess_calB
    (a11, a12), (_, a22) = od.hess_alpha
    sym = {}
    # xi^2 (grad B . X)^2 + xi^2 (grad alpha . X)^2
    for c1, c2 in ((b1, b2), (a1, a2)):
        _add(sym, (2, 2), c1 * c1)
        _add(sym, (1, 3), 2 * c1 * c2)
        _add(sym, (0, 4), c2 * c2)
    # xi^2 B Hess B(X, X)
    _add(sym, (2, 2), B * b11)
    _add(sym, (1, 3), 2 * B * b12)
    _add(sym, (0, 4), B * b22)
    # xi (x + alpha xi) Hess alpha(X, X)
    _add(sym, (3, 1), a11)
    _add(sym, (2, 2), 2 * a12 + al * a11)
    _add(sym, (1, 3), a22 + 2 * al * a12)
    _add(sym, (0, 4), al * a22)
    _add(sym, (0, 0), od.T_value)
    return sym


def dxi_m0_symbol(od: OscillatorData) -> dict:
    """xi2-derivative of the M0 symbol."""
    B, al = od.calB, od.alpha
    b1 = od.grad_calB[0]
    a1 = od.grad_alpha[0]
    return {(0, 2): 2 * B * b1 + 2 * al * a1, (1, 1): 2 * a1}


def apply_M(j: int, od: OscillatorData, s: GaussianState) -> GaussianState:
    symbol = (m0_symbol, m1_symbol, m2_symbol)[j](od)
    return apply_symbol(symbol, s)


# ---------------------------------------------------------------------------
# ground states, ladder basis, reduced resolvent

def exponents(calB: complex, alpha: complex):
    """Exponent of F (eigenfunction of M0) and of G (of the adjoint)."""
    return 1.0 / (calB - 1j * alpha), 1.0 / (np.conj(calB) - 1j * np.conj(alpha))


def pair_constants(calB: complex, alpha: complex):
    """(a, C, b, c): F = C exp(-a x^2/2) with ||F|| = 1, G = c exp(-b x^2/2) with <F, G> = 1."""
    a, b = exponents(calB, alpha)
    if not np.real(a) > 0:
        raise OscillatorError(f"Re 1/(calB - i alpha) must be positive, got a = {a}")
    C = (np.real(a) / np.pi) ** 0.25
    w = a + 1.0 / (calB + 1j * alpha)
    c = np.conj(1.0 / (C * np.sqrt(2.0 * np.pi / w)))
    return a, C, b, c


def gaussian_pair(od: OscillatorData):
    a, C, b, c = pair_constants(od.calB, od.alpha)
    return GaussianState(a, [C]), GaussianState(b, [c])


def pair_derivatives(calB, alpha, dB, dal):
    """Derivatives of F and G along a real parameter moving (calB, alpha) by (dB, dal).

    Returns the states dF and dG (same exponents as F and G).
    """
    a, C, b, c = pair_constants(calB, alpha)
    da = -a * a * (dB - 1j * dal)
    dlnC = 0.25 * np.real(da) / np.real(a)
    inv_plus = 1.0 / (calB + 1j * alpha)
    dw = da - inv_plus**2 * (dB + 1j * dal)
    w = a + inv_plus
    dln_cbar = -dlnC + 0.5 * dw / w
    dln_c = np.conj(dln_cbar)
    db = np.conj(-inv_plus**2 * (dB + 1j * dal))
    dF = GaussianState(a, [C * dlnC, 0.0, -0.5 * C * da])
    dG = GaussianState(b, [c * dln_c, 0.0, -0.5 * c * db])
    return dF, dG


class LadderBasis:
    """Eigenfunctions psi_1..psi_nmax of M0 and the biorthogonal dual family."""

    def __init__(self, od: OscillatorData, n_max: int = 9, tol: float = 1e-10):
        if n_max < 4:
            raise OscillatorError("ladder basis needs n_max >= 4")
        self.od = od
        self.n_max = n_max
        B, al = od.calB, od.alpha
        F, G = gaussian_pair(od)
        # [M0, x - i(B + i alpha) D] = 2B (x - i(B + i alpha) D)
        up = -1j * (B + 1j * al)
        up_dual = -1j * (np.conj(B) + 1j * np.conj(al))
        psi, dual = [F], [G]
        for _ in range(n_max - 1):
            psi.append(psi[-1].mul_x() + psi[-1].D().scale(up))
            dual.append(dual[-1].mul_x() + dual[-1].D().scale(up_dual))
        self.eigenvalues = np.array([(2 * n - 1) * B + od.Sigma for n in range(1, n_max + 1)])
        for n, p in enumerate(psi):
            res = apply_M(0, od, p) - p.scale(self.eigenvalues[n])
            rel = res.norm() / p.norm()
            if rel > tol:
                raise OscillatorError(f"ladder state n={n + 1} fails eigen-check: residual {rel:.3e}")
        for n in range(n_max):
            pairing = psi[n].inner(dual[n])
            dual[n] = dual[n].scale(1.0 / np.conj(pairing))
        self.psi, self.dual = psi, dual

    def coefficients(self, s: GaussianState) -> np.ndarray:
        if s.degree > self.n_max - 1:
            raise OscillatorError(f"state degree {s.degree} exceeds basis size {self.n_max}")
        _same_exponent(s, self.psi[0])
        return np.array([s.inner(d) for d in self.dual[: s.degree + 1]])

    def R0_apply(self, z: complex, s: GaussianState) -> GaussianState:
        """(M0 - z)^-1 (Id - Pi) s with Pi = <., G> F."""
        coef = self.coefficients(s)
        out = s.scale(0.0)
        for n in range(1, len(coef)):
            out = out + self.psi[n].scale(coef[n] / (self.eigenvalues[n] - z))
        return out


def R0_apply(od: OscillatorData, z: complex, s: GaussianState, n_max: int = 9) -> GaussianState:
    return LadderBasis(od, n_max).R0_apply(z, s)
