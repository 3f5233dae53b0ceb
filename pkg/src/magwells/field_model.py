"""Magnetic fields with two symmetric wells and numerical checks of the
structural assumptions (symmetry, mild variation on a complex strip,
monotonicity in q1, non-degenerate wells).

Every field map takes a complex ``q1`` (inside the strip ``|Im q1| < r``)
and a real ``q2``; all maps broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

FieldMap = Callable[[np.ndarray, np.ndarray], np.ndarray]


class FieldError(ValueError):
    """Raised for inadmissible field parameters or degenerate wells."""


@dataclass(frozen=True)
class FieldSpec:
    b0: float
    eps: float
    strip_r: float
    c_u: float
    eval: FieldMap
    d1B: FieldMap
    d2B: FieldMap
    d11B: FieldMap
    d22B: FieldMap
    d12B: FieldMap
    # third q2-derivative; the second Darboux derivative of alpha needs it
    d222B: Optional[FieldMap] = None
    # B - b0 without cancellation, used where B is compared against b0
    excess: Optional[FieldMap] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def c_d(self) -> float:
        return -self.c_u

    @property
    def r_tilde(self) -> float:
        """Half-width of the Darboux strip that the inverse map provably covers."""
        return (1.0 - self.eps) * self.b0 * self.strip_r

    def B_minus_b0(self, q1, q2):
        if self.excess is not None:
            return self.excess(q1, q2)
        return self.eval(q1, q2) - self.b0


@dataclass(frozen=True)
class ExampleFieldParams:
    b0: float = 1.0
    eps1: float = 0.1
    eps2: float = 0.06
    c_u: float = 1.0
    beta: float = 0.25
    strip_r: float = 0.5

    @property
    def eps3(self) -> float:
        return self.eps2 / self.eps1

    def validate(self) -> None:
        if not self.b0 > 0:
            raise FieldError(f"b0 must be positive, got {self.b0}")
        for label, value in (("eps1", self.eps1), ("eps2", self.eps2)):
            if not 0 < value <= 1:
                raise FieldError(f"{label} must lie in (0, 1], got {value}")
        if self.eps2 > self.eps1:
            raise FieldError(
                f"eps2={self.eps2} exceeds eps1={self.eps1}; monotonicity in q1 needs eps2 <= eps1")
        if not self.c_u > 0:
            raise FieldError(f"c_u must be positive, got {self.c_u}")
        if not self.beta > 0:
            raise FieldError(f"beta must be positive, got {self.beta}")
        if not 0 < self.strip_r < 1:
            raise FieldError(f"strip_r must lie in (0, 1), got {self.strip_r}")


def well_profile(q2, c_u: float, beta: float):
    """Default W and its first three derivatives.

    W = (1 - exp(-beta p^2))/2 with p = q2^2 - c_u^2.  Evaluated through
    expm1 so that W stays accurate next to its zeros at +-c_u.
    """
    q2 = np.asarray(q2, dtype=float)
    p = q2 * q2 - c_u * c_u
    decay = np.exp(-beta * p * p)
    W = -0.5 * np.expm1(-beta * p * p)
    dW = 2.0 * beta * q2 * p * decay
    shape = p + 2.0 * q2 * q2 - 4.0 * beta * q2 * q2 * p * p
    ddW = 2.0 * beta * decay * shape
    dshape = 6.0 * q2 - 8.0 * beta * q2 * p * p - 16.0 * beta * q2 ** 3 * p
    dddW = 2.0 * beta * decay * (dshape - 4.0 * beta * q2 * p * shape)
    return W, dW, ddW, dddW


def make_example_field(p: ExampleFieldParams) -> FieldSpec:
    """B = b0 (1 + eps1 g(q1) + eps2 W(q2) / (1 + q1^2)), g = q1^2/(1+q1^2)."""
    p.validate()
    b0, e1, e2 = p.b0, p.eps1, p.eps2
    r = p.strip_r

    def parts(q1, q2):
        q1 = np.asarray(q1, dtype=complex)
        u = 1.0 / (1.0 + q1 * q1)
        W, dW, ddW, dddW = well_profile(q2, p.c_u, p.beta)
        return q1, u, W, dW, ddW, dddW

    def excess(q1, q2):
        q1, u, W, *_ = parts(q1, q2)
        return b0 * u * (e1 * q1 * q1 + e2 * W)

    def B(q1, q2):
        return b0 + excess(q1, q2)

    def d1B(q1, q2):
        q1, u, W, *_ = parts(q1, q2)
        return 2.0 * b0 * (e1 - e2 * W) * q1 * u * u

    def d11B(q1, q2):
        q1, u, W, *_ = parts(q1, q2)
        return b0 * (e1 - e2 * W) * (2.0 * u * u - 8.0 * q1 * q1 * u ** 3)

    def d2B(q1, q2):
        q1, u, W, dW, *_ = parts(q1, q2)
        return b0 * e2 * dW * u

    def d22B(q1, q2):
        q1, u, W, dW, ddW, _ = parts(q1, q2)
        return b0 * e2 * ddW * u

    def d222B(q1, q2):
        q1, u, W, dW, ddW, dddW = parts(q1, q2)
        return b0 * e2 * dddW * u

    def d12B(q1, q2):
        q1, u, W, dW, *_ = parts(q1, q2)
        return -2.0 * b0 * e2 * dW * q1 * u * u

    # sup |B - b0| on the strip: |q1^2 u| <= 1 and |u| <= 1/(1 - r^2)
    eps = e1 + e2 / (2.0 * (1.0 - r * r))
    return FieldSpec(
        b0=b0, eps=eps, strip_r=r, c_u=p.c_u,
        eval=B, d1B=d1B, d2B=d2B, d11B=d11B, d22B=d22B, d12B=d12B,
        d222B=d222B, excess=excess, name="example",
        params={"b0": b0, "eps1": e1, "eps2": e2, "c_u": p.c_u, "beta": p.beta,
                "strip_r": r},
    )


def constant_field(b0: float, c_u: float = 1.0, strip_r: float = 0.5) -> FieldSpec:
    """B identically b0.  Has no well; useful for calibration."""

    def const(q1, q2):
        return np.full(np.broadcast(np.asarray(q1), np.asarray(q2)).shape, b0, dtype=complex)

    def zero(q1, q2):
        return np.zeros(np.broadcast(np.asarray(q1), np.asarray(q2)).shape, dtype=complex)

    return FieldSpec(b0=b0, eps=0.0, strip_r=strip_r, c_u=c_u, eval=const,
                     d1B=zero, d2B=zero, d11B=zero, d22B=zero, d12B=zero,
                     d222B=zero, excess=zero, name="constant", params={"b0": b0})


def well_coefficients(f: FieldSpec) -> dict:
    """Curvature data of the upper well: H = Hess(B)/2, d0 and d1."""
    k1 = float(np.real(f.d11B(0.0, f.c_u)))
    k2 = float(np.real(f.d22B(0.0, f.c_u)))
    if k1 <= 0 or k2 <= 0:
        raise FieldError(f"degenerate well: curvatures ({k1:.3e}, {k2:.3e}) must be positive")
    H = np.diag([0.5 * k1, 0.5 * k2])
    d0 = np.sqrt(H[0, 0] * H[1, 1]) / f.b0
    d1 = (np.sqrt(H[0, 0]) + np.sqrt(H[1, 1])) ** 2 / (2.0 * f.b0)
    return {"H": H, "d0": float(d0), "d1": float(d1), "curvatures": (k1, k2)}


# ---------------------------------------------------------------------------
# assumption checks

@dataclass(frozen=True)
class Sampling:
    q_max: float = 3.0
    n_real: int = 61
    n_imag: int = 9
    margin: float = 0.05
    n_random: int = 400
    seed: int = 0
    sym_tol: float = 1e-12
    well_tol: float = 1e-9


@dataclass
class CheckResult:
    passed: bool
    margin: float
    where: tuple

    def as_dict(self) -> dict:
        q1, q2 = self.where
        return {"passed": bool(self.passed), "margin": float(self.margin),
                "q1": [float(np.real(q1)), float(np.imag(q1))], "q2": float(q2)}


@dataclass
class AssumptionReport:
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list:
        return [name for name, c in self.checks.items() if not c.passed]

    def as_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": {name: c.as_dict() for name, c in self.checks.items()}}


def _worst(slack: np.ndarray, q1: np.ndarray, q2: np.ndarray) -> CheckResult:
    """slack >= 0 means the condition holds at that sample."""
    slack = np.broadcast_to(np.asarray(slack, dtype=float), np.broadcast(q1, q2).shape)
    q1b, q2b = np.broadcast_arrays(q1, q2)
    i = int(np.argmin(slack))
    return CheckResult(bool(slack.flat[i] >= 0), float(slack.flat[i]),
                       (complex(q1b.flat[i]), float(q2b.flat[i])))


def _sample_points(f: FieldSpec, s: Sampling):
    depth = f.strip_r * (1.0 - s.margin)
    x = np.linspace(-s.q_max, s.q_max, s.n_real)
    y = np.linspace(-depth, depth, s.n_imag)
    X, Y, Q2 = np.meshgrid(x, y, x, indexing="ij")
    rng = np.random.default_rng(s.seed)
    rx = rng.uniform(-s.q_max, s.q_max, s.n_random)
    ry = rng.uniform(-depth, depth, s.n_random)
    r2 = rng.uniform(-s.q_max, s.q_max, s.n_random)
    strip_q1 = np.concatenate([(X + 1j * Y).ravel(), rx + 1j * ry])
    strip_q2 = np.concatenate([Q2.ravel(), r2])
    real_q1, real_q2 = np.meshgrid(x, x, indexing="ij")
    real_q1 = np.concatenate([real_q1.ravel(), rx])
    real_q2 = np.concatenate([real_q2.ravel(), r2])
    return strip_q1, strip_q2, real_q1.astype(complex), real_q2


def check_assumptions(f: FieldSpec, sampling: Sampling = Sampling()) -> AssumptionReport:
    s = sampling
    b0, eps, r = f.b0, f.eps, f.strip_r
    zq1, zq2, xq1, xq2 = _sample_points(f, s)
    checks = {}

    Bx = f.eval(xq1, xq2)
    scale = np.maximum(np.abs(Bx), b0)
    checks["symmetry_q1"] = _worst(
        s.sym_tol - np.abs(f.eval(-xq1, xq2) - Bx) / scale, xq1, xq2)
    checks["symmetry_q2"] = _worst(
        s.sym_tol - np.abs(f.eval(xq1, -xq2) - Bx) / scale, xq1, xq2)
    checks["real_on_real_axis"] = _worst(s.sym_tol - np.abs(Bx.imag) / scale, xq1, xq2)
    t = 1j * np.imag(zq1)
    Bt = f.eval(t, zq2)
    checks["real_on_imaginary_axis"] = _worst(
        s.sym_tol - np.abs(Bt.imag) / np.maximum(np.abs(Bt), b0), t, zq2)

    excess = f.B_minus_b0(zq1, zq2)
    checks["variation_bound"] = _worst(eps * b0 - np.abs(excess), zq1, zq2)
    checks["gradient_bound"] = _worst(
        (1.0 - eps) * b0 / (2.0 * r) - np.abs(f.d2B(zq1, zq2)), zq1, zq2)
    Bz = b0 + excess
    checks["positivity"] = _worst(Bz.real - (1.0 - eps) * b0, zq1, zq2)
    right = zq1.real >= 0
    mono = np.real(f.d1B(zq1[right], zq2[right]) / Bz[right])
    checks["monotonicity"] = _worst(mono + s.sym_tol, zq1[right], zq2[right])

    # wells: minimum value b0 at (0, +-c_u), vanishing gradient, positive curvatures
    cu = f.c_u
    pts = np.array([cu, -cu])
    z = np.zeros(2, dtype=complex)
    pos_err = np.max(np.abs(f.B_minus_b0(z, pts))) / b0
    grad_err = np.max(np.abs(f.d1B(z, pts)) + np.abs(f.d2B(z, pts))) / b0
    below = np.real(f.B_minus_b0(xq1, xq2)) / b0
    checks["well_position"] = CheckResult(
        pos_err <= s.well_tol and grad_err <= s.well_tol and below.min() >= -s.well_tol,
        float(min(s.well_tol - pos_err, s.well_tol - grad_err, below.min() + s.well_tol)),
        (0j, cu))
    k1 = np.real(f.d11B(z, pts))
    k2 = np.real(f.d22B(z, pts))
    k12 = np.abs(f.d12B(z, pts))
    curv = float(min(k1.min(), k2.min())) / b0
    offdiag = float(k12.max()) / b0
    checks["well_nondegenerate"] = CheckResult(
        curv > s.well_tol and offdiag <= s.well_tol,
        float(min(curv - s.well_tol, s.well_tol - offdiag)), (0j, cu))
    return AssumptionReport(checks)
