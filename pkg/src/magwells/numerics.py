"""Small numerical helpers shared by the pipeline modules."""

from __future__ import annotations

import numpy as np


def richardson_derivative(fun, x: float, step: float = 1e-2, levels: int = 4) -> complex:
    """Central-difference derivative refined by Richardson extrapolation.

    fun may return a scalar or an array; the tableau is built on step/2^k.
    """
    table = []
    for k in range(levels):
        h = step / 2**k
        row = [(np.asarray(fun(x + h)) - np.asarray(fun(x - h))) / (2 * h)]
        for j in range(1, k + 1):
            prev = table[k - 1][j - 1]
            row.append(row[j - 1] + (row[j - 1] - prev) / (4**j - 1))
        table.append(row)
    return table[-1][-1]


def gauss_panels(edges: np.ndarray, order: int = 8):
    """Gauss-Legendre nodes and weights on consecutive panels [edges[i], edges[i+1]].

    Returns (nodes, weights) shaped (n_panels, order).
    """
    xg, wg = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * xg[None, :], half * wg[None, :]


def cumulative_integral(fun, edges: np.ndarray, order: int = 8) -> np.ndarray:
    """int_{edges[0]}^{edges[i]} fun for every i, by panelwise Gauss-Legendre."""
    nodes, weights = gauss_panels(edges, order)
    vals = np.asarray(fun(nodes.ravel())).reshape(nodes.shape)
    panel = np.sum(vals * weights, axis=1)
    return np.concatenate([[0.0], np.cumsum(panel)])
