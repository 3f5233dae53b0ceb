"""Prefactor pipeline on the weight phi_u: Q2, D, z2, the transport
amplitude a0, the overlap density Jcal and the tunneling prefactor c0.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .darboux import eval_darboux
from .eikonal import EikonalProfile, Gamma_at
from .field_model import FieldSpec, well_coefficients
from .numerics import gauss_panels, richardson_derivative
from .oscillator import (GaussianState, LadderBasis, OscillatorData, apply_M, apply_symbol,
                         dxi_m0_symbol, gaussian_pair, pair_constants, pair_derivatives)

T_MODELS = ("zero", "half_density")


class AmplitudeError(RuntimeError):
    pass


@dataclass(frozen=True)
class AmplitudeOptions:
    """alpha_sign = -1 uses the symbol (x1 - alpha xi1)^2 obtained from the
    reduction; +1 gives the opposite sign (x1 + alpha xi1)^2."""

    alpha_sign: int = -1
    T_model: str = "zero"
    n_max: int = 9
    half_width_fraction: float = 0.95
    n_panels: int = 24
    order: int = 10
    derivative_check_points: int = 5
    derivative_step: float = 1e-5
    derivative_tol: float = 1e-7
    symmetry_tol: float = 1e-7
    constancy_tol: float = 1e-6
    c0_tol: float = 1e-5
    jcal_tol: float = 1e-8

    def validate(self) -> None:
        if self.alpha_sign not in (1, -1):
            raise AmplitudeError("alpha_sign must be +1 or -1")
        if self.T_model not in T_MODELS:
            raise AmplitudeError(f"T_model must be one of {T_MODELS}")
        if self.n_max < 7:
            raise AmplitudeError("n_max must be at least 7 (M1 R0 M1 F has degree 6)")
        if not 0 < self.half_width_fraction < 1:
            raise AmplitudeError("half_width_fraction must lie in (0, 1)")


# ---------------------------------------------------------------------------
# oscillator data along the weight

def _weight_data(f: FieldSpec, profile: EikonalProfile, x2, sealed: bool):
    """(phi', Sigma, Sigma') at x2; the unsealed branch is phi' = -Gamma."""
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if sealed:
        seal = profile.seal
        return profile.dphi_at(x2), seal.value(x2), seal.derivative(x2)
    zero = np.zeros_like(x2)
    return -Gamma_at(f, x2), zero, zero


def _ddphi(f: FieldSpec, profile: EikonalProfile, d, x2, dsigma):
    """phi'' from the differentiated eikonal; the wells use the level-curve slope."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -(np.real(d.d2_calB) + dsigma) / np.real(1j * d.d1_calB)
    near_u = np.abs(x2 - f.c_u) < 1e-7
    near_d = np.abs(x2 - f.c_d) < 1e-7
    out = np.where(near_u, profile.ddphi_cu, out)
    return np.where(near_d & (dsigma == 0), -profile.ddphi_cu, out)


def _T_value(model: str, d1_calB, d1_alpha):
    if model == "zero":
        return np.zeros_like(d1_calB)
    return 0.25 * (d1_calB**2 + d1_alpha**2)


def oscillator_data(f: FieldSpec, profile: EikonalProfile, x2, xi2=0.0,
                    options: AmplitudeOptions = AmplitudeOptions(),
                    sealed: bool = True) -> list:
    """OscillatorData at (xi2 + i phi'(x2), x2) for every x2."""
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    dphi, sigma, dsigma = _weight_data(f, profile, x2, sealed)
    d = eval_darboux(f, xi2 + 1j * dphi, x2)
    ddphi = _ddphi(f, profile, d, x2, dsigma)
    s = options.alpha_sign
    T = _T_value(options.T_model, d.d1_calB, s * d.d1_alpha)
    out = []
    for i in range(x2.size):
        out.append(OscillatorData(
            x2=float(x2[i]), calB=complex(d.calB[i]), alpha=complex(s * d.alpha[i]),
            grad_calB=np.array([d.d1_calB[i], d.d2_calB[i]]),
            grad_alpha=s * np.array([d.d1_alpha[i], d.d2_alpha[i]]),
            hess_calB=np.array([[d.d11_calB[i], d.d12_calB[i]], [d.d12_calB[i], d.d22_calB[i]]]),
            hess_alpha=s * np.array([[d.d11_alpha[i], d.d12_alpha[i]], [d.d12_alpha[i], d.d22_alpha[i]]]),
            Sigma=float(sigma[i]), dSigma=float(dsigma[i]), dphi=float(dphi[i]),
            ddphi=float(ddphi[i]), T_value=complex(T[i]), alpha_sign=s))
    return out


# ---------------------------------------------------------------------------
# Q2 and its ingredients

def Q2pm_at(od: OscillatorData, dod_dxi2=None, dod_dx2=None, n_max: int = 9,
            z: complex | None = None) -> complex:
    """Second-order effective coefficient at (x2, 0), with z = E = calB + Sigma by default.

    dod_dxi2 and dod_dx2 are (dcalB, dalpha) pairs; they default to the chain rule
    through the stored gradients and phi''.
    """
    d_xi, d_x = od.directions()
    d_xi = d_xi if dod_dxi2 is None else dod_dxi2
    d_x = d_x if dod_dx2 is None else dod_dx2
    E = od.eigen0
    z = E if z is None else z
    F, G = gaussian_pair(od)
    basis = LadderBasis(od, n_max)
    m1F = apply_M(1, od, F)
    term_m2 = apply_M(2, od, F).inner(G)
    term_m1 = apply_M(1, od, basis.R0_apply(z, m1F)).inner(G)
    dF_xi, dG_xi = pair_derivatives(od.calB, od.alpha, *d_xi)
    dF_x, dG_x = pair_derivatives(od.calB, od.alpha, *d_x)

    def shifted_m0(s: GaussianState) -> GaussianState:
        return apply_M(0, od, s) - s.scale(E)

    bracket = (-(1 / 2j) * shifted_m0(dF_xi).inner(dG_x)
               + (1 / 2j) * shifted_m0(dF_x).inner(dG_xi))
    drift = -(1 / 1j) * od.grad_calB[0] * dF_x.inner(G)
    return complex(-term_m2 + term_m1 + bracket + drift)


def _pair_param_vector(f, profile, x2, xi2, options, sealed):
    ods = oscillator_data(f, profile, x2, xi2, options, sealed)
    rows = []
    for od in ods:
        a, C, b, c = pair_constants(od.calB, od.alpha)
        rows.append([a, C, b, c])
    return np.array(rows)


def check_pair_derivatives(f: FieldSpec, profile: EikonalProfile, x2,
                           options: AmplitudeOptions = AmplitudeOptions(),
                           sealed: bool = True) -> float:
    """Largest relative gap between analytic and finite-difference derivatives of (a, C, b, c)."""
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    step = options.derivative_step
    fd_xi = richardson_derivative(
        lambda t: _pair_param_vector(f, profile, x2, t, options, sealed), 0.0, step=step, levels=2)
    fd_x = np.array([richardson_derivative(
        lambda s: _pair_param_vector(f, profile, np.array([s]), 0.0, options, sealed)[0],
        float(x), step=step, levels=2) for x in x2])
    worst = 0.0
    for i, od in enumerate(oscillator_data(f, profile, x2, 0.0, options, sealed)):
        a, C, b, c = pair_constants(od.calB, od.alpha)
        for direction, fd in zip(od.directions(), (fd_xi[i], fd_x[i])):
            dF, dG = pair_derivatives(od.calB, od.alpha, *direction)
            analytic = np.array([-2 * dF.P[2] / C, dF.P[0], -2 * dG.P[2] / c, dG.P[0]])
            scale = np.maximum(np.abs(fd), 1.0)
            worst = max(worst, float(np.max(np.abs(analytic - fd) / scale)))
    return worst


def z2_closed_form(f: FieldSpec) -> float:
    b11, b22 = well_coefficients(f)["curvatures"]
    return float(np.sqrt(b11 * b22) / (2 * f.b0) + (np.sqrt(b11) + np.sqrt(b22)) ** 2 / (4 * f.b0))


def z2_transport(od_cu: OscillatorData, n_max: int = 9) -> float:
    """z2 = (phi''(c_u)/2) d11 calB(0, c_u) - Q2(c_u, 0)."""
    val = 0.5 * od_cu.ddphi * od_cu.hess_calB[0, 0] - Q2pm_at(od_cu, n_max=n_max)
    if abs(val.imag) > 1e-9 * max(1.0, abs(val)):
        raise AmplitudeError(f"transport z2 is not real: {val}")
    return float(val.real)


def k_values(od: OscillatorData):
    """k = i d1 calB along the weight and its x2-derivative."""
    k = 1j * od.grad_calB[0]
    dk = 1j * (1j * od.ddphi * od.hess_calB[0, 0] + od.hess_calB[0, 1])
    return k, dk


def D_value(od: OscillatorData, z2: float, n_max: int = 9) -> complex:
    _, dk = k_values(od)
    return 0.5 * dk + Q2pm_at(od, n_max=n_max) + z2


def Jcal_at(od_plus: OscillatorData, od_minus: OscillatorData):
    """(product route, defining-integral route) for Jcal at x2, given data at x2 and -x2."""
    F_plus, _ = gaussian_pair(od_plus)
    F_minus, _ = gaussian_pair(od_minus)
    product = F_minus.inner(F_plus) * od_plus.grad_calB[0] / 1j
    integral = apply_symbol(dxi_m0_symbol(od_plus), F_plus).inner(F_minus) / 1j
    return complex(product), complex(integral)


# ---------------------------------------------------------------------------
# transport amplitude and c0

@dataclass
class AmplitudeProfile:
    grid: np.ndarray
    Q2pm: np.ndarray
    D: np.ndarray
    a0: np.ndarray
    Jcal: np.ndarray
    z2: float
    c0: float
    const_check: np.ndarray
    z2_closed: float = 0.0
    c0_secondary: float = 0.0
    options: AmplitudeOptions = dc_field(default_factory=AmplitudeOptions)
    diagnostics: dict = dc_field(default_factory=dict)

    def to_columns(self) -> dict:
        cols = {"x2": self.grid}
        for name in ("Q2pm", "D", "a0", "Jcal", "const_check"):
            values = getattr(self, name)
            cols[f"{name}_re"] = np.real(values)
            cols[f"{name}_im"] = np.imag(values)
        return cols


def transport_a0(edges: np.ndarray, D_over_k, order: int = 10):
    """a0 on the panel edges, ln a0(x) = -int_{c_u}^{x} D/k with edges[0] = c_u.

    D_over_k is evaluated at Gauss nodes only, so the removable 0/0 at c_u is
    never sampled.
    """
    nodes, weights = gauss_panels(edges, order)
    vals = np.asarray(D_over_k(nodes.ravel())).reshape(nodes.shape)
    log_a0 = -np.concatenate([[0.0], np.cumsum(np.sum(vals * weights, axis=1))])
    return np.exp(log_a0)


class _Evaluator:
    """Cached D/k along the weight for one option set."""

    def __init__(self, f, profile, options, z2, sealed):
        self.f, self.profile, self.options, self.z2, self.sealed = f, profile, options, z2, sealed

    def data(self, x2):
        return oscillator_data(self.f, self.profile, x2, 0.0, self.options, self.sealed)

    def D_and_k(self, x2):
        ods = self.data(x2)
        D = np.array([D_value(od, self.z2, self.options.n_max) for od in ods])
        k = np.array([k_values(od)[0] for od in ods])
        return D, k, ods


def amplitude_profile(f: FieldSpec, profile: EikonalProfile,
                      options: AmplitudeOptions = AmplitudeOptions()) -> AmplitudeProfile:
    options.validate()
    if f.c_u <= 0:
        raise AmplitudeError("the prefactor needs two separated wells")
    n_max = options.n_max
    seal = profile.seal
    od_cu = oscillator_data(f, profile, f.c_u, 0.0, options)[0]
    z2 = z2_transport(od_cu, n_max)
    z2_cf = z2_closed_form(f)
    D_cu = D_value(od_cu, z2, n_max)
    if abs(D_cu) > 1e-9:
        raise AmplitudeError(f"D(c_u) = {D_cu:.3e} does not vanish")

    # symmetric sample grid avoiding supp Sigma and its mirror image
    X = options.half_width_fraction * (f.c_u - seal.radius - abs(seal.center - f.c_d))
    inner_edges = np.linspace(X, -X, 2 * options.n_panels + 1)
    edges = np.concatenate([[f.c_u], inner_edges])
    if np.any(seal.inside(edges)):
        raise AmplitudeError("amplitude grid meets supp Sigma")

    sealed_eval = _Evaluator(f, profile, options, z2, sealed=True)
    D_cache = {}

    def D_over_k(x):
        D, k, _ = sealed_eval.D_and_k(x)
        D_cache.setdefault("nodes", []).append((x, D, k))
        return D / k

    a0_edges = transport_a0(edges, D_over_k, options.order)
    grid = edges[1:][::-1]
    a0 = a0_edges[1:][::-1]
    D_grid, k_grid, ods = sealed_eval.D_and_k(grid)
    Q2 = np.array([Q2pm_at(od, n_max=n_max) for od in ods])
    # Jcal needs data at -x2, which is the reversed grid
    ods_mirror = ods[::-1]
    J = np.empty(grid.size, dtype=complex)
    J_gap = 0.0
    for i, (od_p, od_m) in enumerate(zip(ods, ods_mirror)):
        product, integral = Jcal_at(od_p, od_m)
        J[i] = product
        J_gap = max(J_gap, abs(product - integral) / abs(product))
    if J_gap > options.jcal_tol:
        raise AmplitudeError(f"Jcal routes disagree: relative gap {J_gap:.3e}")
    const = a0 * np.conj(a0[::-1]) * J
    spread = float(np.max(np.abs(const - const[grid.size // 2])) / abs(const[grid.size // 2]))

    # symmetry relation Q2(x) - conj Q2(-x) = i d1 calB(x) d/dx ln <F_-x, F_x>
    sym_points = grid[1:-1:max(1, grid.size // 20)]
    sym_gap = symmetry_gap(f, profile, sym_points, options)

    # primary c0 at x* = 0
    mid = grid.size // 2
    c0 = float(2.0 * np.sqrt(profile.ddphi_cu) * abs(const[mid]))
    c0_sec = prefactor_c0_secondary(f, profile, options, z2)
    c0_gap = abs(c0 - c0_sec) / c0
    deriv_points = np.linspace(-X, X, options.derivative_check_points + 2)[1:-1]
    deriv_gap = check_pair_derivatives(f, profile, deriv_points, options)

    diagnostics = {
        "z2_transport": z2, "z2_closed_form": z2_cf,
        "z2_rel_diff": abs(z2 - z2_cf) / abs(z2_cf),
        "D_cu_abs": float(abs(D_cu)),
        "const_spread": spread,
        "Jcal_route_gap": float(J_gap),
        "Q2_symmetry_gap": float(sym_gap),
        "c0_primary": c0, "c0_secondary": float(c0_sec), "c0_rel_diff": float(c0_gap),
        "pair_derivative_gap": float(deriv_gap),
        "alpha_sign": options.alpha_sign, "T_model": options.T_model,
    }
    if spread > options.constancy_tol:
        raise AmplitudeError(f"invariant const_spread violated: {spread:.3e}")
    if sym_gap > options.symmetry_tol:
        raise AmplitudeError(f"invariant Q2_symmetry_gap violated: {sym_gap:.3e}")
    if deriv_gap > options.derivative_tol:
        raise AmplitudeError(f"pair derivatives fail the finite-difference check: {deriv_gap:.3e}")
    if c0_gap > options.c0_tol:
        raise AmplitudeError(f"c0 routes disagree: primary {c0:.12g}, secondary {c0_sec:.12g}")
    return AmplitudeProfile(grid=grid, Q2pm=Q2, D=D_grid, a0=a0, Jcal=J, z2=z2, c0=c0,
                            const_check=const, z2_closed=z2_cf, c0_secondary=float(c0_sec),
                            options=options, diagnostics=diagnostics)


def _log_overlap(f, profile, x, options):
    od_p, od_m = oscillator_data(f, profile, np.array([x, -x]), 0.0, options)
    F_p, _ = gaussian_pair(od_p)
    F_m, _ = gaussian_pair(od_m)
    return np.log(F_m.inner(F_p))


def symmetry_gap(f: FieldSpec, profile: EikonalProfile, points,
                 options: AmplitudeOptions = AmplitudeOptions()) -> float:
    """Largest |Q2(x) - conj Q2(-x) - i d1 calB(x) d/dx ln<F_-x, F_x>| over points."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    worst = 0.0
    for x in points:
        od_p, od_m = oscillator_data(f, profile, np.array([x, -x]), 0.0, options)
        lhs = Q2pm_at(od_p, n_max=options.n_max) - np.conj(Q2pm_at(od_m, n_max=options.n_max))
        dlog = richardson_derivative(lambda s: _log_overlap(f, profile, s, options), x,
                                     step=1e-3, levels=4)
        rhs = 1j * od_p.grad_calB[0] * dlog
        worst = max(worst, float(abs(lhs - rhs)))
    return worst


def prefactor_c0_secondary(f: FieldSpec, profile: EikonalProfile,
                           options: AmplitudeOptions, z2: float, n_panels: int = 24) -> float:
    """c0 from the exponent int_{c_d}^{c_u} conj D(-s) / k(s) ds on the unsealed branch.

    The integrand has a simple pole at c_u with residue -1; it is removed
    analytically, leaving ln(2 c_u |k'(c_u)|) plus a regular integral.
    """
    ev = _Evaluator(f, profile, options, z2, sealed=False)
    edges = np.linspace(f.c_d, f.c_u, n_panels + 1)
    nodes, weights = gauss_panels(edges, options.order)
    s = nodes.ravel()
    D_minus, _, _ = ev.D_and_k(-s)
    _, k_plus, _ = ev.D_and_k(s)
    vals = np.conj(D_minus) / k_plus + 1.0 / (s - f.c_u)
    regular = np.sum(vals.reshape(nodes.shape) * weights)
    od_cu = ev.data(np.array([f.c_u]))[0]
    od_cd = ev.data(np.array([f.c_d]))[0]
    _, dk_cu = k_values(od_cu)
    F_u, _ = gaussian_pair(od_cu)
    F_d, _ = gaussian_pair(od_cd)
    log_K = (np.log(abs(dk_cu)) + np.log(f.c_u - f.c_d) + regular.real
             + np.log(abs(F_d.inner(F_u))))
    return float(2.0 * np.sqrt(profile.ddphi_cu) * np.exp(log_K))
