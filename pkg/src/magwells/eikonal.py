"""Level curve gamma, its flux Gamma, the action S and the Agmon weight phi_u
(the upper-well weight, sealed near the lower well by the bump Sigma).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.integrate import quad, quad_vec, solve_ivp

from .darboux import eval_darboux, segment_integrals
from .field_model import FieldSpec
from .numerics import cumulative_integral, richardson_derivative


class EikonalError(RuntimeError):
    pass


@dataclass(frozen=True)
class SealSpec:
    center: float
    radius: float
    amplitude: float

    def validate(self, f: FieldSpec) -> None:
        if not self.amplitude > 0:
            raise EikonalError("seal amplitude must be positive")
        if not self.amplitude < (1.0 - 3.0 * f.eps) * f.b0:
            raise EikonalError(
                f"seal amplitude {self.amplitude} must stay below (1-3 eps) b0 = {(1 - 3 * f.eps) * f.b0:.4g}")
        if not 0 < self.radius < abs(f.c_d) / 4:
            raise EikonalError(f"seal radius {self.radius} must lie in (0, |c_d|/4)")

    def _s(self, x2):
        return (np.asarray(x2, dtype=float) - self.center) / self.radius

    def value(self, x2):
        s = self._s(x2)
        inside = np.abs(s) < 1
        out = np.zeros_like(s)
        si = s[inside]
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - si * si))
        return out

    def derivative(self, x2):
        s = self._s(x2)
        inside = np.abs(s) < 1
        out = np.zeros_like(s)
        si = s[inside]
        bump = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - si * si))
        out[inside] = -bump * 2.0 * si / (self.radius * (1.0 - si * si) ** 2)
        return out

    def inside(self, x2):
        return np.abs(self._s(x2)) < 1


def default_seal(f: FieldSpec, radius_fraction: float = 0.1, amplitude_fraction: float = 0.05,
                 strip_fraction: float = 0.5) -> SealSpec:
    """Bump at c_d with radius |c_d|*radius_fraction.

    The amplitude is a fraction of the admissible bound (1 - 3 eps) b0, capped
    so that the sealed branch keeps |phi'| below about strip_fraction * r~:
    at c_d the sealed eikonal reads calB(i phi', c_d) = b0 - Sigma.
    """
    u = strip_fraction * f.r_tilde
    drop = float(f.b0 - np.real(eval_darboux(f, 1j * u, f.c_d).calB[0]))
    amplitude = min(amplitude_fraction * (1.0 - 3.0 * f.eps) * f.b0, 0.5 * drop)
    return SealSpec(center=f.c_d, radius=abs(f.c_d) * radius_fraction, amplitude=amplitude)


# ---------------------------------------------------------------------------
# level curve and flux

def _branch_sign(f: FieldSpec, q2):
    return np.where((q2 > f.c_d) & (q2 < f.c_u), 1.0, -1.0)


def _level_root(f: FieldSpec, q2, shift, tol: float = 1e-14, max_iter: int = 200):
    """|t| solving B(i t, q2) = b0 - shift on [0, r): safeguarded Newton.

    t -> B(it, q2) is real and decreasing on the strip, so the bracket
    [lo, hi] is kept and Newton steps leaving it fall back to bisection.
    """
    q2 = np.atleast_1d(np.asarray(q2, dtype=float))
    shift = np.broadcast_to(np.asarray(shift, dtype=float), q2.shape)

    def g(t):
        return np.real(f.B_minus_b0(1j * t, q2)) + shift

    lo = np.zeros_like(q2)
    hi = np.full_like(q2, f.strip_r * (1 - 1e-9))
    g_lo, g_hi = g(lo), g(hi)
    if np.any(g_hi > 0):
        bad = q2[g_hi > 0][0]
        raise EikonalError(f"no level point B(it, q2) = b0 in the strip at q2 = {bad}")
    done = g_lo <= 0
    t = np.where(done, 0.0, 0.5 * hi)
    for _ in range(max_iter):
        gt = g(t)
        lo = np.where(gt > 0, t, lo)
        hi = np.where(gt <= 0, t, hi)
        slope = np.real(1j * f.d1B(1j * t, q2))
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = t - gt / slope
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        t_new = np.where(ok, newton, 0.5 * (lo + hi))
        t_new = np.where(done, t, t_new)
        conv = np.abs(t_new - t) <= tol * np.abs(t_new)
        t = t_new
        done = done | conv | (hi - lo <= tol * hi)
        if np.all(done):
            break
    return t


def gamma_at(f: FieldSpec, q2):
    """gamma with B(i gamma(q2), q2) = b0: positive between the wells, negative outside."""
    scalar = np.ndim(q2) == 0
    q2a = np.atleast_1d(np.asarray(q2, dtype=float))
    out = _branch_sign(f, q2a) * _level_root(f, q2a, 0.0)
    return float(out[0]) if scalar else out


def Gamma_at(f: FieldSpec, x2, gamma=None):
    """Gamma = gamma * int_0^1 B(i t gamma, x2) dt  (the imaginary flux up to i gamma)."""
    scalar = np.ndim(x2) == 0
    x2a = np.atleast_1d(np.asarray(x2, dtype=float))
    g = gamma_at(f, x2a) if gamma is None else np.atleast_1d(np.asarray(gamma, dtype=float))
    val, err = quad_vec(lambda t: np.real(f.eval(1j * t * g, x2a)), 0.0, 1.0,
                        epsabs=1e-300, epsrel=1e-13, norm="max")
    out = g * val
    return float(out[0]) if scalar else out


def action_S(f: FieldSpec, rtol: float = 1e-11) -> dict:
    """S by the double integral and by int Gamma; both are returned."""
    a, b = f.c_d, f.c_u

    nodes, weights = np.polynomial.legendre.leggauss(40)

    def inner(q2):
        # fixed-order Gauss in t keeps this route independent of the Gamma route
        g = gamma_at(f, q2)
        t = 0.5 * g * (nodes + 1.0)
        return 0.5 * g * float(np.dot(weights, np.real(f.eval(1j * t, q2))))

    S_double = quad(inner, a, b, epsabs=0.0, epsrel=rtol, limit=200)[0]
    S_gamma = quad(lambda s: Gamma_at(f, s), a, b, epsabs=0.0, epsrel=rtol, limit=200)[0]
    return {"S": S_gamma, "S_double": S_double, "S_gamma": S_gamma,
            "rel_diff": abs(S_double - S_gamma) / abs(S_gamma)}


# ---------------------------------------------------------------------------
# Agmon weight

@dataclass
class EikonalProfile:
    grid: np.ndarray
    gamma: np.ndarray
    Gamma: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    S: float
    ddphi_cu: float
    seal: SealSpec
    fieldspec: FieldSpec = dc_field(repr=False)
    dphi_fun: Callable = dc_field(repr=False, default=None)
    diagnostics: dict = dc_field(default_factory=dict)

    def dphi_at(self, x2):
        return self.dphi_fun(np.atleast_1d(np.asarray(x2, dtype=float)))

    def phi_at(self, x2):
        from scipy.interpolate import CubicSpline
        return CubicSpline(self.grid, self.phi)(x2)

    def to_columns(self) -> dict:
        return {"x2": self.grid, "gamma": self.gamma, "Gamma": self.Gamma,
                "phi": self.phi, "dphi": self.dphi}


def _outer_dphi(f: FieldSpec, x2):
    """Unsealed branch: phi' = sign(x2 - c_u) |Gamma|."""
    G = Gamma_at(f, x2)
    return np.where(x2 >= f.c_u, 1.0, -1.0) * np.abs(G)


def _project(f: FieldSpec, seal: SealSpec, x2, u, tol: float = 1e-12, max_iter: int = 30):
    """Newton on u -> calB(iu, x2) + Sigma(x2) - b0 at fixed x2."""
    sigma = seal.value(x2)
    for _ in range(max_iter):
        if np.max(np.abs(u)) >= f.r_tilde:
            raise EikonalError(f"sealed branch leaves the Darboux strip at |phi'| = "
                               f"{np.max(np.abs(u)):.4g}: seal too aggressive for the field")
        d = eval_darboux(f, 1j * u, x2)
        res = np.real(d.calB) + sigma - f.b0
        slope = np.real(1j * d.d1_calB)
        u = u - res / slope
        if np.all(np.abs(res) <= tol * f.b0):
            break
    else:
        raise EikonalError("Newton projection onto the sealed eikonal did not converge")
    return u


def gamma_prime_cu(f: FieldSpec, step: float = 1e-2) -> float:
    return float(richardson_derivative(lambda s: gamma_at(f, s), f.c_u, step=step, levels=4))


def admissible_half_width(f: FieldSpec, fraction: float = 0.9, limit: float | None = None) -> float:
    """Largest X <= limit (default 2 c_u + 1) such that |Gamma| < fraction * r~ on [c_u, X]."""
    limit = 2.0 * f.c_u + 1.0 if limit is None else limit
    xs = np.linspace(f.c_u, limit, 201)
    for x in xs[1:]:
        try:
            G = abs(Gamma_at(f, float(x)))
        except EikonalError:
            return float(x - (xs[1] - xs[0]))
        if G >= fraction * f.r_tilde:
            return float(x - (xs[1] - xs[0]))
    return float(limit)


def solve_phi(f: FieldSpec, seal: SealSpec, half_width: float | None = None,
              spacing: float | None = None, ode_rtol: float = 1e-11) -> EikonalProfile:
    """phi_u on a uniform x2 grid, with the branch through supp Sigma continued
    by the differentiated eikonal and projected back onto the eikonal."""
    seal.validate(f)
    X = admissible_half_width(f) if half_width is None else half_width
    h = 1e-3 * 2 * X if spacing is None else spacing
    n = int(round(2 * X / h))
    grid = np.unique(np.concatenate([np.linspace(-X, X, n + 1), [f.c_d, f.c_u, 0.0]]))

    lo, hi = seal.center - seal.radius, seal.center + seal.radius
    # The differentiated eikonal is integrated for the preimage q1 = i t of
    # x1 = i phi' (the Darboux map sends the imaginary axis to itself):
    #   i dB(it, x2) t' + d2B(it, x2) + Sigma'(x2) = 0.
    # Darboux values phi' = -i A2(it, x2) are then projected onto the eikonal.
    t0 = -gamma_at(f, hi)

    def rhs(x2, t):
        q1 = 1j * t
        x = np.array([x2])
        num = np.real(f.d2B(q1, x)) + seal.derivative(x)
        return -num / np.real(1j * f.d1B(q1, x))

    sol = solve_ivp(rhs, (hi, lo), [t0], method="DOP853", rtol=ode_rtol,
                    atol=1e-13, dense_output=True, first_step=1e-4 * seal.radius)
    if not sol.success:
        raise EikonalError(f"sealed branch integration failed: {sol.message}")

    def branch_guess(x2):
        t = sol.sol(x2)[0]
        return np.real(-1j * segment_integrals(f, 1j * t, x2, ("B",))[0])

    u_end = _project(f, seal, np.array([lo]), branch_guess(np.array([lo])))[0]
    u_outer = _outer_dphi(f, np.array([lo]))[0]
    if abs(u_end - u_outer) > 1e-8 * f.b0:
        raise EikonalError(
            f"sealed branch does not reconnect: {u_end:.12g} vs outer {u_outer:.12g}")

    def dphi_fun(x2):
        x2 = np.asarray(x2, dtype=float)
        out = np.empty_like(x2)
        inside = seal.inside(x2)
        if np.any(~inside):
            out[~inside] = _outer_dphi(f, x2[~inside])
        if np.any(inside):
            xi = x2[inside]
            out[inside] = _project(f, seal, xi, branch_guess(xi))
        return out

    dphi = dphi_fun(grid)
    if np.max(np.abs(dphi)) >= f.r_tilde:
        raise EikonalError(
            f"max |phi'| = {np.max(np.abs(dphi)):.4g} leaves the Darboux strip r~ = {f.r_tilde:.4g}")
    # phi = int_{c_u}^{x2} phi', panelwise Gauss on grid intervals (c_u is a node)
    i_cu = int(np.searchsorted(grid, f.c_u))
    cum = cumulative_integral(dphi_fun, grid, order=10)
    phi = cum - cum[i_cu]
    phi[i_cu] = 0.0

    gamma = gamma_at(f, grid)
    Gamma = Gamma_at(f, grid, gamma=gamma)
    S = action_S(f)
    gp = gamma_prime_cu(f)
    ddphi_cu = -f.b0 * gp
    ddphi_check = float(richardson_derivative(lambda s: _outer_dphi(f, np.atleast_1d(s))[0],
                                              f.c_u, step=1e-2, levels=4))

    sigma = seal.value(grid)
    d = eval_darboux(f, 1j * dphi, grid)
    residual = np.abs(d.calB + sigma - f.b0)
    diagnostics = {
        "eikonal_residual_max": float(residual.max() / f.b0),
        "S_double": S["S_double"], "S_gamma": S["S_gamma"], "S_rel_diff": S["rel_diff"],
        "ddphi_cu_from_dphi": ddphi_check,
        "ddphi_cu_rel_diff": abs(ddphi_check - ddphi_cu) / abs(ddphi_cu),
        "seal_reconnect_gap": float(abs(u_end - u_outer)),
    }
    diagnostics.update(_symmetry_checks(f, seal, grid, phi, S["S"]))
    return EikonalProfile(grid=grid, gamma=gamma, Gamma=Gamma, phi=phi, dphi=dphi,
                          S=S["S"], ddphi_cu=float(ddphi_cu), seal=seal, fieldspec=f,
                          dphi_fun=dphi_fun, diagnostics=diagnostics)


def _symmetry_checks(f: FieldSpec, seal: SealSpec, grid, phi, S):
    """phi(x) + phi(-x) = S holds for the unsealed weight (phi' = -Gamma);
    the sealed weight must coincide with it on x2 > 0 off the seal."""
    cum = cumulative_integral(lambda s: -Gamma_at(f, s), grid, order=10)
    i_cu = int(np.searchsorted(grid, f.c_u))
    unsealed = cum - cum[i_cu]
    mirror = unsealed[::-1]
    off_seal = ~(seal.inside(grid) | seal.inside(-grid))
    upper = off_seal & (grid > 0)
    return {"phi_symmetry_gap": float(np.max(np.abs(unsealed + mirror - S))),
            "sealed_unsealed_gap": float(np.max(np.abs(phi[upper] - unsealed[upper])))}


EIKONAL_TOLERANCES = {"eikonal_residual_max": 1e-10, "ddphi_cu_rel_diff": 1e-8,
                      "S_rel_diff": 1e-9, "phi_symmetry_gap": 1e-9,
                      "sealed_unsealed_gap": 1e-9}


def check_invariants(profile: EikonalProfile, tolerances: dict | None = None) -> None:
    """Raise EikonalError naming the first violated invariant."""
    tol = dict(EIKONAL_TOLERANCES, **(tolerances or {}))
    for name, limit in tol.items():
        value = profile.diagnostics[name]
        if not value <= limit:
            raise EikonalError(f"invariant {name} violated: {value:.3e} > {limit:.1e}")


def ddphi_at(f: FieldSpec, seal: SealSpec, darboux, x2):
    """phi'' from the differentiated eikonal at points away from c_u."""
    num = np.real(darboux.d2_calB) + seal.derivative(x2)
    return -num / np.real(1j * darboux.d1_calB)
