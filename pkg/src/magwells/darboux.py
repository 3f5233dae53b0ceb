"""Gauge potential A2, the Darboux map x = (A2(q), q2) and the transported
field data calB = B o iota^-1 and alpha = d2A2 o iota^-1 with their
first and second derivatives in Darboux variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec

from .field_model import FieldSpec


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


class InversionError(RuntimeError):
    def __init__(self, message: str, x1):
        super().__init__(message)
        self.x1 = x1


def segment_integrals(f: FieldSpec, q1, q2, kinds=("B", "B2"), rtol: float = 1e-12):
    """Integrals along the straight segment [0, q1] at fixed q2.

    kinds selects the integrands among B, B2 (=d2B), B22 and B222; the
    results are A2, d2A2, d2^2 A2 and d2^3 A2 respectively.  Vectorized over
    points: one adaptive run covers every (q1, q2) pair.
    """
    q1 = np.atleast_1d(np.asarray(q1, dtype=complex))
    q2 = np.atleast_1d(np.asarray(q2, dtype=float))
    q1, q2 = np.broadcast_arrays(q1, q2)
    shape = q1.shape
    q1, q2 = q1.ravel(), q2.ravel()
    maps = {"B": f.eval, "B2": f.d2B, "B22": f.d22B, "B222": f.d222B}
    for kind in kinds:
        if maps[kind] is None:
            raise ValueError(f"field '{f.name}' does not provide {kind}")
    n = q1.size

    def integrand(t):
        z = t * q1
        return np.concatenate([maps[k](z, q2) for k in kinds])

    res, err, info = quad_vec(integrand, 0.0, 1.0, epsabs=1e-300, epsrel=rtol,
                              norm="max", limit=400, full_output=True)
    scale = max(np.max(np.abs(res)), 1e-300)
    if not info.success and err > 10 * rtol * scale:
        raise QuadratureError(f"segment quadrature did not converge ({info.message})", err / scale)
    out = res.reshape(len(kinds), n) * q1[None, :]
    return tuple(out[i].reshape(shape) for i in range(len(kinds)))


def A2(f: FieldSpec, q1, q2):
    """A2(q) = int_0^{q1} B(s, q2) ds and d2A2, both by adaptive quadrature."""
    a2, p = segment_integrals(f, q1, q2, ("B", "B2"))
    return a2, p


def iota_inv(f: FieldSpec, x1, x2, tol: float = 1e-12, max_iter: int = 60):
    """Solve A2(q1, x2) = x1 for q1 by Newton, using d(q1)A2 = B."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=complex))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    x1, x2 = np.broadcast_arrays(x1, x2)
    outside = np.abs(x1.imag) >= f.r_tilde
    if np.any(outside):
        raise InversionError(
            f"x1 = {x1[outside][0]} lies outside the Darboux strip |Im x1| < {f.r_tilde:.6g}",
            x1[outside][0])
    q1 = x1 / f.b0
    target = tol * np.maximum(1.0, np.abs(x1))
    for _ in range(max_iter):
        res = segment_integrals(f, q1, x2, ("B",))[0] - x1
        if np.all(np.abs(res) <= target):
            return q1
        step = res / f.eval(q1, x2)
        q1 = q1 - step
        bad = np.abs(q1.imag) >= f.strip_r
        if np.any(bad):
            raise InversionError(
                f"Newton iterate left the strip |Im q1| < {f.strip_r} for x1 = {x1[bad][0]}",
                x1[bad][0])
    worst = int(np.argmax(np.abs(res) / target))
    raise InversionError(f"Newton did not converge for x1 = {x1.flat[worst]}", x1.flat[worst])


@dataclass
class DarbouxEval:
    x1: np.ndarray
    x2: np.ndarray
    q1: np.ndarray
    calB: np.ndarray
    alpha: np.ndarray
    d1_calB: np.ndarray
    d2_calB: np.ndarray
    d11_calB: np.ndarray
    d22_calB: np.ndarray
    d12_calB: np.ndarray
    d1_alpha: np.ndarray
    d2_alpha: np.ndarray
    d11_alpha: np.ndarray
    d22_alpha: np.ndarray
    d12_alpha: np.ndarray

    def take(self, i) -> "DarbouxEval":
        return DarbouxEval(**{k: np.asarray(v)[i] for k, v in self.__dict__.items()})


def eval_darboux(f: FieldSpec, x1, x2, q1=None) -> DarbouxEval:
    """calB, alpha and their Darboux derivatives at (x1, x2).

    With d/dx1 = (1/B) d/dq1 and d/dx2 = d/dq2 - (P/B) d/dq1 (P = d2A2),
    everything reduces to B's derivatives and three segment integrals.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=complex))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    x1, x2 = np.broadcast_arrays(x1, x2)
    if q1 is None:
        q1 = iota_inv(f, x1, x2)
    P, P2, P22 = segment_integrals(f, q1, x2, ("B2", "B22", "B222"))
    B = f.eval(q1, x2)
    B1, B2 = f.d1B(q1, x2), f.d2B(q1, x2)
    B11, B22, B12 = f.d11B(q1, x2), f.d22B(q1, x2), f.d12B(q1, x2)
    r = P / B

    d1_calB = B1 / B
    d2_calB = B2 - r * B1
    d11_calB = B11 / B**2 - B1**2 / B**3
    d12_calB = (B12 / B - B1 * B2 / B**2) - r * (B11 / B - B1**2 / B**2)
    d22_calB = ((B22 - P2 * B1 / B - r * B12 + r * B1 * B2 / B)
                - r * (B12 - B2 * B1 / B - r * B11 + r * B1**2 / B))

    d1_alpha = B2 / B
    d2_alpha = P2 - r * B2
    d11_alpha = (B12 / B - B2 * B1 / B**2) / B
    d12_alpha = (B22 / B - B2**2 / B**2) - r * (B12 / B - B2 * B1 / B**2)
    d22_alpha = ((P22 - P2 * B2 / B - r * B22 + r * B2**2 / B)
                 - r * (B22 - B2**2 / B - r * B12 + r * B2 * B1 / B))

    return DarbouxEval(x1=x1, x2=x2, q1=q1, calB=B, alpha=P,
                       d1_calB=d1_calB, d2_calB=d2_calB, d11_calB=d11_calB,
                       d22_calB=d22_calB, d12_calB=d12_calB,
                       d1_alpha=d1_alpha, d2_alpha=d2_alpha, d11_alpha=d11_alpha,
                       d22_alpha=d22_alpha, d12_alpha=d12_alpha)
