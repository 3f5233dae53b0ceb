"""Direct diagonalization of the magnetic Laplacian (-ih grad - A)^2 on a
Dirichlet box with a gauge-covariant (Peierls link) five-point stencil.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .field_model import FieldError, FieldSpec, well_coefficients

_GAUSS_C = np.sqrt(0.6)


class SpectraError(RuntimeError):
    pass


class GaugeChoice(str, Enum):
    landau_x = "landau_x"
    landau_y = "landau_y"
    symmetric = "symmetric"


@dataclass(frozen=True)
class GridSpec:
    """Interior nodes (k - (N+1)/2) * spacing, k = 1..N, with N odd and Dirichlet data at +-L."""

    half_widths: tuple
    points: tuple

    def __post_init__(self):
        for n in self.points:
            if n % 2 == 0 or n < 3:
                raise SpectraError(f"point counts must be odd and >= 3, got {self.points}")

    @property
    def spacing(self) -> tuple:
        return tuple(2.0 * L / (n + 1) for L, n in zip(self.half_widths, self.points))

    def axes(self):
        return tuple(np.arange(1 - (n + 1) // 2, (n + 1) // 2) * d
                     for n, d in zip(self.points, self.spacing))

    @property
    def size(self) -> int:
        return self.points[0] * self.points[1]

    def validate(self, h: float) -> None:
        limit = min(self.half_widths) / 50.0
        for d in self.spacing:
            if d > limit:
                raise SpectraError(f"grid spacing {d:.4g} exceeds min(L)/50 = {limit:.4g}")
            if d > 0.15 * np.sqrt(h):
                raise SpectraError(
                    f"grid spacing {d:.4g} exceeds 0.15*sqrt(h) = {0.15 * np.sqrt(h):.4g}: too coarse for h = {h}")

    def refined(self, factor: float) -> "GridSpec":
        """Same box with spacing divided by about factor (counts kept odd)."""
        pts = []
        for n in self.points:
            m = int(round((n + 1) * factor))
            pts.append(m - 1 if m % 2 == 0 else m)
        return GridSpec(self.half_widths, tuple(pts))


def grid_for(f: FieldSpec, h: float, spacing_factor: float = 0.1, width: float = 7.0) -> GridSpec:
    """Box reaching `width` magnetic lengths past the wells, spacing = spacing_factor*sqrt(h)."""
    ell = np.sqrt(h / f.b0)
    L1 = width * ell
    L2 = abs(f.c_u) + width * ell
    d = spacing_factor * np.sqrt(h)
    # N + 1 a multiple of 8 keeps the refinements 1.25, 1.5 and 2 exact on both
    # axes, so the discretization error is a clean series in spacing^2
    points = tuple(8 * int(np.ceil(2 * L / d / 8)) - 1 for L in (L1, L2))
    return GridSpec((L1, L2), points)


# ---------------------------------------------------------------------------
# link phases

def _pair_gauss(fun, left, right):
    """3-point Gauss rule on [left, right], summed in mirror-symmetric order."""
    mid = 0.5 * (left + right)
    half = 0.5 * (right - left)
    off = _GAUSS_C * half
    total = (5.0 / 9.0) * (fun(mid - off) + fun(mid + off)) + (8.0 / 9.0) * fun(mid)
    return half.reshape(half.shape + (1,) * (total.ndim - 1)) * total


def _cumulative_from_zero(axis: np.ndarray, cell_integral):
    """int_0^{axis[k]} along a symmetric axis containing 0, accumulated outward.

    cell_integral(lo, hi) returns the integral over each cell, broadcasting
    over trailing dimensions.
    """
    n = axis.size
    c = n // 2
    right = cell_integral(axis[c:-1], axis[c + 1:])
    left = cell_integral(axis[1:c + 1], axis[:c])
    shape = (n,) + right.shape[1:]
    out = np.zeros(shape)
    out[c + 1:] = np.cumsum(right, axis=0)
    out[:c][::-1] = np.cumsum(left[::-1], axis=0)
    return out


def _landau_x_phases(f: FieldSpec, grid: GridSpec):
    """Line integrals of A = (0, A2) along vertical links (q1 fixed)."""
    x, y = grid.axes()
    lo, hi = y[:-1], y[1:]
    mid = 0.5 * (lo + hi)
    off = _GAUSS_C * 0.5 * (hi - lo)
    s_points = np.stack([mid - off, mid, mid + off])  # (3, ny-1)

    def cell(a, b):
        return _pair_gauss(lambda t: np.real(f.eval(t[:, None, None], s_points[None])), a, b)

    A2 = _cumulative_from_zero(x, cell)  # (nx, 3, ny-1)
    half = 0.5 * (hi - lo)
    return half * ((5.0 / 9.0) * (A2[:, 0] + A2[:, 2]) + (8.0 / 9.0) * A2[:, 1])


def _landau_y_phases(f: FieldSpec, grid: GridSpec):
    """Line integrals of A = (-int_0^{q2} B(q1, s) ds, 0) along horizontal links (q2 fixed)."""
    x, y = grid.axes()
    lo, hi = x[:-1], x[1:]
    mid = 0.5 * (lo + hi)
    off = _GAUSS_C * 0.5 * (hi - lo)
    t_points = np.stack([mid - off, mid, mid + off])  # (3, nx-1)

    def cell(a, b):
        return _pair_gauss(lambda s: np.real(f.eval(t_points[None], s[:, None, None])), a, b)

    A1 = -_cumulative_from_zero(y, cell)  # (ny, 3, nx-1)
    half = 0.5 * (hi - lo)
    return half * ((5.0 / 9.0) * (A1[:, 0] + A1[:, 2]) + (8.0 / 9.0) * A1[:, 1])


def link_phases(f: FieldSpec, gauge: GaugeChoice, grid: GridSpec):
    """(horizontal, vertical) line integrals of A along links toward increasing index.

    horizontal has shape (ny, nx-1), vertical (nx, ny-1).
    """
    gauge = GaugeChoice(gauge)
    nx, ny = grid.points
    zero_h, zero_v = np.zeros((ny, nx - 1)), np.zeros((nx, ny - 1))
    if gauge is GaugeChoice.landau_x:
        return zero_h, _landau_x_phases(f, grid)
    if gauge is GaugeChoice.landau_y:
        return _landau_y_phases(f, grid), zero_v
    return 0.5 * _landau_y_phases(f, grid), 0.5 * _landau_x_phases(f, grid)


def plaquette_circulation(f: FieldSpec, gauge: GaugeChoice, grid: GridSpec) -> np.ndarray:
    """Discrete circulation of A around every interior plaquette, shape (ny-1, nx-1)."""
    hor, ver = link_phases(f, gauge, grid)
    return hor[:-1, :] + ver[1:, :].T - hor[1:, :] - ver[:-1, :].T


# ---------------------------------------------------------------------------
# operator

def _index(grid: GridSpec):
    nx, ny = grid.points
    return np.arange(nx * ny).reshape(ny, nx)


def assemble(f: FieldSpec, gauge: GaugeChoice, grid: GridSpec, h: float,
             check_grid: bool = True) -> sp.csr_matrix:
    """Sparse Hermitian matrix of (-ih grad - A)^2; node (i1, i2) has index i2*N1 + i1."""
    if check_grid:
        grid.validate(h)
    d1, d2 = grid.spacing
    hor, ver = link_phases(f, gauge, grid)
    idx = _index(grid)
    n = grid.size
    # hopping p -> q carries -(h/d)^2 exp(-(i/h) int_p^q A.dl)
    rows = [idx[:, :-1].ravel(), idx[:-1, :].ravel()]
    cols = [idx[:, 1:].ravel(), idx[1:, :].ravel()]
    vals = [-(h / d1) ** 2 * np.exp(-1j * hor.ravel() / h),
            -(h / d2) ** 2 * np.exp(-1j * ver.T.ravel() / h)]
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    diag = np.full(n, 2.0 * (h / d1) ** 2 + 2.0 * (h / d2) ** 2, dtype=complex)
    H = sp.coo_matrix((np.concatenate([v, np.conj(v), diag]),
                       (np.concatenate([r, c, np.arange(n)]),
                        np.concatenate([c, r, np.arange(n)]))), shape=(n, n))
    return H.tocsr()


def parity_permutation(grid: GridSpec) -> np.ndarray:
    """Index map of U f(q) = f(-q)."""
    return _index(grid)[::-1, ::-1].ravel()


def parity_matrix(grid: GridSpec) -> sp.csr_matrix:
    perm = parity_permutation(grid)
    n = perm.size
    return sp.csr_matrix((np.ones(n), (np.arange(n), perm)), shape=(n, n))


def parity_projectors(grid: GridSpec):
    """Isometries onto the even and odd subspaces of U."""
    perm = parity_permutation(grid)
    n = perm.size
    idx = np.arange(n)
    low = idx[idx < perm]
    center = idx[idx == perm]
    s = 1.0 / np.sqrt(2.0)
    ne = low.size + center.size
    even = sp.csr_matrix((np.concatenate([np.full(2 * low.size, s), np.ones(center.size)]),
                          (np.concatenate([low, perm[low], center]),
                           np.concatenate([np.arange(low.size), np.arange(low.size),
                                           low.size + np.arange(center.size)]))), shape=(n, ne))
    odd = sp.csr_matrix((np.concatenate([np.full(low.size, s), np.full(low.size, -s)]),
                         (np.concatenate([low, perm[low]]),
                          np.concatenate([np.arange(low.size), np.arange(low.size)]))),
                        shape=(n, low.size))
    return even, odd


# ---------------------------------------------------------------------------
# eigenpairs

@dataclass
class SpectrumResult:
    h: float
    eigenvalues: np.ndarray
    residual_norms: np.ndarray
    parities: np.ndarray
    gap: float
    grid: GridSpec
    gauge: str = "landau_x"
    diagnostics: dict = dc_field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"h": self.h, "eigenvalues": [float(x) for x in self.eigenvalues],
                "residual_norms": [float(x) for x in self.residual_norms],
                "parities": [int(x) for x in self.parities], "gap": float(self.gap),
                "grid": {"half_widths": list(self.grid.half_widths), "points": list(self.grid.points)},
                "gauge": self.gauge, "diagnostics": self.diagnostics}


def shift_invert_subspace(H, k: int, sigma: float, tol: float = 1e-13, block: int | None = None,
                          max_iter: int = 500, seed: int = 0):
    """Lowest k eigenpairs above sigma by shift-invert block iteration.

    One sparse LU of H - sigma; each sweep applies the inverse to the block,
    re-orthonormalizes and performs a Rayleigh-Ritz step with H itself, so
    clustered pairs are separated exactly within the converged subspace.
    Converged leading vectors are locked (kept but no longer counted).
    """
    n = H.shape[0]
    block = max(k + 6, 2 * k) if block is None else block
    block = min(block, n)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n, block)) + 1j * rng.standard_normal((n, block))
    V, _ = np.linalg.qr(V)
    shifted = (H - sigma * sp.identity(n, dtype=H.dtype, format="csc")).tocsc()
    try:
        lu = splu(shifted)
    except RuntimeError as exc:
        raise SpectraError(f"factorization of H - sigma failed: {exc}") from exc
    scale = _norm_estimate(H)
    res = np.full(k, np.inf)
    for it in range(max_iter):
        W = lu.solve(V)
        W, _ = np.linalg.qr(W)
        HW = H @ W
        small = W.conj().T @ HW
        small = 0.5 * (small + small.conj().T)
        theta, Y = np.linalg.eigh(small)
        V = W @ Y
        HV = HW @ Y
        res = np.linalg.norm(HV[:, :k] - V[:, :k] * theta[:k], axis=0)
        if np.all(res <= tol * scale):
            return theta[:k], V[:, :k], res
    raise SpectraError(
        f"shift-invert iteration did not converge in {max_iter} sweeps: "
        f"relative residuals {np.array2string(res / scale, precision=2)}, Ritz values {theta[:k]}")


def _eigsh_lowest(H, k, sigma, tol, seed):
    return shift_invert_subspace(H, k, sigma, tol=tol, seed=seed)


def _norm_estimate(H) -> float:
    """Gershgorin bound, exact enough for relative residuals."""
    return float(np.max(np.asarray(abs(H).sum(axis=1)).ravel()))


def lowest_eigenpairs(H, k: int = 4, sigma: float = 0.0, tol: float = 1e-11,
                      grid: GridSpec | None = None, h: float = float("nan"),
                      seed: int = 0, block: int | None = None) -> SpectrumResult:
    """k lowest eigenpairs above sigma; a block larger than the default is
    needed when a degenerate cluster (a Landau level) exceeds it."""
    vals, vecs, res = shift_invert_subspace(H, k, sigma, tol=min(tol, 1e-13), block=block,
                                            seed=seed)
    norm = _norm_estimate(H)
    rel = res / norm
    if np.any(rel > tol):
        raise SpectraError(f"eigen-residuals {rel} exceed tolerance {tol}")
    parities = np.zeros(k, dtype=int)
    if grid is not None:
        perm = parity_permutation(grid)
        overlap = np.real(np.sum(vecs[perm] * np.conj(vecs), axis=0))
        parities = np.sign(np.round(overlap, 6)).astype(int)
    return SpectrumResult(h=h, eigenvalues=vals, residual_norms=rel, parities=parities,
                          gap=float(vals[1] - vals[0]) if k > 1 else float("nan"), grid=grid,
                          diagnostics={"norm_estimate": norm,
                                       "absolute_residuals": [float(r) for r in res]})


@dataclass
class ParityPair:
    """Lowest eigenvalue in each parity sector, with absolute residuals."""

    even: float
    odd: float
    even_residual: float
    odd_residual: float
    third: float = float("nan")

    @property
    def ground(self) -> float:
        return min(self.even, self.odd)

    @property
    def gap(self) -> float:
        return abs(self.odd - self.even)

    @property
    def noise(self) -> float:
        return max(self.even_residual, self.odd_residual)


SOLVER_TOL = 2e-15


def parity_pair(H, grid: GridSpec, sigma: float, seed: int = 0, with_third: bool = False,
                tol: float = SOLVER_TOL) -> ParityPair:
    """Lowest even and odd eigenvalues from the two parity blocks of H.

    tol bounds the residual relative to the Gershgorin norm of each block; the
    absolute residuals are kept as the noise scale of the gap.
    """
    even, odd = parity_projectors(grid)
    out = []
    k = 2 if with_third else 1
    for P in (even, odd):
        block = (P.T @ H @ P).tocsc()
        vals, _, res = _eigsh_lowest(block, k, sigma, tol=tol, seed=seed)
        out.append((vals, res))
    (ve, re_), (vo, ro) = out
    third = float(np.sort(np.concatenate([ve, vo]))[2]) if with_third else float("nan")
    return ParityPair(even=float(ve[0]), odd=float(vo[0]), even_residual=float(re_[0]),
                      odd_residual=float(ro[0]), third=third)


def neville_zero(nodes, values) -> tuple:
    """Polynomial extrapolation to 0 (Neville); returns (value, last correction)."""
    nodes = np.asarray(nodes, dtype=float)
    p = list(np.asarray(values, dtype=float))
    n = len(p)
    last = 0.0
    for m in range(1, n):
        for i in range(n - m):
            new = (nodes[i + m] * p[i] - nodes[i] * p[i + 1]) / (nodes[i + m] - nodes[i])
            if i == n - m - 1:
                last = new - p[i + 1]
            p[i] = new
    return float(p[0]), float(abs(last))


@dataclass
class ExtrapolatedPair:
    h: float
    ground: float
    excited: float
    gap: float
    ground_parity: int
    noise: float
    third: float
    levels: list
    correction: dict

    def as_dict(self) -> dict:
        return {"h": self.h, "lambda1": self.ground, "lambda2": self.excited, "gap": self.gap,
                "parities": [self.ground_parity, -self.ground_parity], "noise": self.noise,
                "lambda3": self.third, "levels": self.levels, "correction": self.correction}


def extrapolated_pair(f: FieldSpec, h: float, base: GridSpec, factors=(1.0, 1.25, 1.5, 2.0),
                      gauge: GaugeChoice = GaugeChoice.landau_x, seed: int = 0,
                      with_third: bool = True, tol: float = SOLVER_TOL) -> ExtrapolatedPair:
    """Richardson (polynomial in spacing^2) extrapolation of lambda1, lambda2 and ln(gap)."""
    sigma = 0.9 * f.b0 * h
    nodes, ground, excited, log_gap, thirds, levels, parities = [], [], [], [], [], [], []
    noise = 0.0
    for factor in factors:
        grid = base.refined(factor)
        H = assemble(f, gauge, grid, h)
        pair = parity_pair(H, grid, sigma, seed=seed, with_third=with_third, tol=tol)
        if not pair.odd > pair.even:
            raise SpectraError(f"h={h}: even state is not the ground state ({pair.even}, {pair.odd})")
        nodes.append(grid.spacing[1] ** 2)
        ground.append(pair.even)
        excited.append(pair.odd)
        log_gap.append(np.log(pair.gap))
        thirds.append(pair.third)
        noise = max(noise, pair.noise)
        parities.append(1)
        levels.append({"points": list(grid.points), "lambda1": pair.even, "lambda2": pair.odd,
                       "gap": pair.gap, "noise": pair.noise, "lambda3": pair.third})
    g, cg = neville_zero(nodes, ground)
    e, ce = neville_zero(nodes, excited)
    lg, clg = neville_zero(nodes, log_gap)
    t, _ = neville_zero(nodes, thirds) if with_third else (float("nan"), 0.0)
    return ExtrapolatedPair(h=h, ground=g, excited=e, gap=float(np.exp(lg)), ground_parity=1,
                            noise=noise, third=t, levels=levels,
                            correction={"lambda1": cg, "lambda2": ce, "log_gap": clg})


# ---------------------------------------------------------------------------
# two-term expansion

@dataclass
class ExpansionFit:
    c_lin: float
    c_quad: float
    covariance: np.ndarray
    residual_rms: float
    candidates: dict
    matches: str
    h: np.ndarray
    mean_levels: np.ndarray

    def as_dict(self) -> dict:
        return {"c_lin": self.c_lin, "c_quad": self.c_quad,
                "covariance": self.covariance.tolist(), "residual_rms": self.residual_rms,
                "candidates": self.candidates, "matches": self.matches,
                "h": self.h.tolist(), "mean_levels": self.mean_levels.tolist()}


def expansion_candidates(f: FieldSpec) -> dict:
    w = well_coefficients(f)
    d0, d1 = w["d0"], w["d1"]
    # single-well harmonic expansion, closed form of z2, transport value of z2
    return {"2d0+d1": 2 * d0 + d1, "d0+d1": d0 + d1, "d1": d1}


def fit_expansion(h, levels, f: FieldSpec, extra_orders: int = 0,
                  max_residual: float = 1e-6) -> ExpansionFit:
    """Least squares of lambda(h) = c_lin h + c_quad h^2 (+ higher powers if requested)."""
    h = np.asarray(h, dtype=float)
    y = np.asarray(levels, dtype=float)
    design = np.stack([h**p for p in range(1, 3 + extra_orders)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = max(1, h.size - design.shape[1])
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    rms = float(np.sqrt(np.mean(resid**2)))
    if rms > max_residual * np.max(np.abs(y)):
        raise SpectraError(f"expansion fit residual {rms:.3e} too large: grid under-resolved")
    try:
        cand = expansion_candidates(f)
    except FieldError:
        # no well (e.g. a constant field): nothing to compare against
        cand = {}
    c_quad = float(coef[1])
    rel = {k: abs(c_quad - v) / abs(v) for k, v in cand.items()}
    matches = min(rel, key=rel.get) if rel else "none"
    return ExpansionFit(c_lin=float(coef[0]), c_quad=c_quad, covariance=cov[:2, :2],
                        residual_rms=rms,
                        candidates={k: {"value": v, "rel_diff": rel[k]} for k, v in cand.items()},
                        matches=matches, h=h, mean_levels=y)


def single_well_expansion_check(f: FieldSpec, h_list, spacing_factor: float = 0.1,
                                factors=(1.0, 1.25, 1.5, 2.0), extra_orders: int = 0,
                                seed: int = 0) -> ExpansionFit:
    """Fit the mean of the tunneling pair over h_list."""
    means = []
    for h in h_list:
        pair = extrapolated_pair(f, h, grid_for(f, h, spacing_factor), factors, seed=seed,
                                 with_third=False)
        means.append(0.5 * (pair.ground + pair.excited))
    return fit_expansion(h_list, means, f, extra_orders=extra_orders)
