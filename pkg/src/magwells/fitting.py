"""Regression of the tunneling gap against c0 h^{3/2} exp(-S/h)."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitWindow:
    """noise_factor: keep points whose gap exceeds noise_factor * solver noise.
    smallest: if set, fit only that many usable points with the smallest h."""

    noise_factor: float = 100.0
    smallest: int | None = None
    min_points: int = 4
    max_condition: float = 1e8

    def validate(self) -> None:
        if self.noise_factor < 1:
            raise FitError("noise_factor must be at least 1")
        if self.min_points < 3:
            raise FitError("min_points must be at least 3")
        if self.smallest is not None and self.smallest < self.min_points:
            raise FitError("smallest must not be below min_points")


@dataclass
class GapFit:
    S_fit: float
    c0_fit: float
    S_err: float
    log_c0_err: float
    residuals: list
    condition: float
    h_used: list
    discarded: list
    p_hat: float
    p_err: float
    S_free: float
    S_pred: float | None = None
    c0_pred: float | None = None
    diagnostics: dict = dc_field(default_factory=dict)

    @property
    def S_rel_err(self) -> float | None:
        return None if self.S_pred is None else abs(self.S_fit - self.S_pred) / abs(self.S_pred)

    @property
    def c0_ratio(self) -> float | None:
        return None if self.c0_pred is None else self.c0_fit / self.c0_pred

    def as_dict(self) -> dict:
        return {"S_fit": self.S_fit, "c0_fit": self.c0_fit, "S_err": self.S_err,
                "log_c0_err": self.log_c0_err, "residuals": self.residuals,
                "condition": self.condition, "h_used": self.h_used, "discarded": self.discarded,
                "p_hat": self.p_hat, "p_err": self.p_err, "S_free": self.S_free,
                "S_pred": self.S_pred, "c0_pred": self.c0_pred,
                "S_rel_err": self.S_rel_err, "c0_ratio": self.c0_ratio,
                "diagnostics": self.diagnostics}


def _weighted_lstsq(design, y, weights):
    sw = np.sqrt(weights)
    A = design * sw[:, None]
    b = y * sw
    # column scaling keeps the reported condition number meaningful
    scale = np.linalg.norm(A, axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, b, rcond=None)
    coef = coef / scale
    cond = float(np.linalg.cond(A / scale))
    resid = y - design @ coef
    dof = y.size - design.shape[1]
    chi2 = float(np.sum(weights * resid**2))
    sigma2 = chi2 / dof if dof > 0 else 0.0
    cov = np.linalg.pinv(A.T @ A) * (sigma2 if dof > 0 else 1.0)
    return coef, resid, cov, cond


def select_window(h, gap, noise, window: FitWindow):
    """Indices kept for fitting, plus (h, reason) for discarded points."""
    h = np.asarray(h, dtype=float)
    gap = np.asarray(gap, dtype=float)
    noise = np.zeros_like(h) if noise is None else np.asarray(noise, dtype=float)
    discarded = []
    keep = []
    for i in np.argsort(-h):
        if not np.isfinite(gap[i]) or gap[i] <= 0:
            discarded.append({"h": float(h[i]), "reason": "non-positive or missing gap"})
        elif gap[i] < window.noise_factor * noise[i]:
            discarded.append({"h": float(h[i]),
                              "reason": f"gap below {window.noise_factor:g} x solver noise"})
        else:
            keep.append(int(i))
    if window.smallest is not None and len(keep) > window.smallest:
        for i in keep[:-window.smallest]:
            discarded.append({"h": float(h[i]), "reason": "outside the small-h window"})
        keep = keep[-window.smallest:]
    return np.array(keep, dtype=int), discarded


def fit_gap(h, gap, noise=None, window: FitWindow = FitWindow(), S_pred=None, c0_pred=None,
            rel_sigma: float = 1e-3) -> GapFit:
    """Weighted least squares of ln(gap) - 1.5 ln h = ln c0 - S/h.

    Each point is weighted by its inverse log-variance, built from the solver
    noise relative to the gap plus a relative floor rel_sigma.
    """
    window.validate()
    h = np.asarray(h, dtype=float)
    gap = np.asarray(gap, dtype=float)
    keep, discarded = select_window(h, gap, noise, window)
    if keep.size < window.min_points:
        raise FitError(f"only {keep.size} usable points (need {window.min_points}); "
                       f"discarded: {discarded}")
    hk, gk = h[keep], gap[keep]
    nk = np.zeros_like(hk) if noise is None else np.asarray(noise, dtype=float)[keep]
    sigma = np.sqrt((nk / gk) ** 2 + rel_sigma**2)
    weights = 1.0 / sigma**2
    y = np.log(gk) - 1.5 * np.log(hk)
    design = np.stack([np.ones_like(hk), -1.0 / hk], axis=1)
    coef, resid, cov, cond = _weighted_lstsq(design, y, weights)
    if cond > window.max_condition or hk.max() / hk.min() < 1.2:
        raise FitError(f"ill-conditioned fit: condition {cond:.3e}, h range "
                       f"[{hk.min():.4g}, {hk.max():.4g}] too narrow")
    log_c0, S = coef
    if keep.size >= 4:
        design3 = np.stack([np.ones_like(hk), np.log(hk), -1.0 / hk], axis=1)
        coef3, _, cov3, cond3 = _weighted_lstsq(design3, np.log(gk), weights)
        p_hat, S_free = float(coef3[1]), float(coef3[2])
        p_err = float(np.sqrt(max(cov3[1, 1], 0.0)))
    else:
        p_hat, S_free, p_err, cond3 = float("nan"), float("nan"), float("nan"), float("nan")
    order = np.argsort(-hk)
    scaled = None
    if S_pred is not None:
        scaled = (gk * np.exp(S_pred / hk) * hk**-1.5)[order]
    diagnostics = {"weights": weights[order].tolist(), "free_exponent_condition": cond3,
                   "rule": (f"gap >= {window.noise_factor:g} x solver noise"
                            + ("" if window.smallest is None else f"; {window.smallest} smallest h"))}
    if scaled is not None:
        last = scaled[-3:]
        diffs = np.diff(last)
        diagnostics["scaled_gap"] = scaled.tolist()
        diagnostics["scaled_gap_monotone_last3"] = bool(np.all(diffs > 0) or np.all(diffs < 0))
    return GapFit(S_fit=float(S), c0_fit=float(np.exp(log_c0)),
                  S_err=float(np.sqrt(max(cov[1, 1], 0.0))),
                  log_c0_err=float(np.sqrt(max(cov[0, 0], 0.0))),
                  residuals=resid[order].tolist(), condition=cond,
                  h_used=hk[order].tolist(), discarded=discarded,
                  p_hat=p_hat, p_err=p_err, S_free=S_free, S_pred=S_pred, c0_pred=c0_pred,
                  diagnostics=diagnostics)
