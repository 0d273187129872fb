"""Exact solutions of the Poisson problem with a sum of point sources.

As the basis grows, the sampled R-G system solves ``-Lap u = sum_i w_i f_i delta(x - x_i)``
with homogeneous Dirichlet data. In 1D that solution is piecewise linear;
on a rectangle it is the (pointwise divergent at the sources) Green's
function series, available here in truncated form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rg_solver import axis_matrix
from .sampling import Domain, SampleSet

__all__ = [
    "LimitSolution1D",
    "GreenSeries2D",
    "limit_solution_1d",
    "eval_limit_1d",
    "green_series_2d",
    "eval_green_2d",
]


@dataclass(frozen=True, eq=False)
class LimitSolution1D:
    """Continuous piecewise-linear function on ``[a, b]``.

    Piece ``j`` covers ``[breakpoints[j-1], breakpoints[j])`` (with ``a`` and ``b``
    as outer ends); a sample point belongs to the piece on its right, i.e.
    the Heaviside convention ``H(0) = 1``.
    """

    a: float
    b: float
    breakpoints: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return eval_limit_1d(self, x)

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.slopes[np.searchsorted(self.breakpoints, x, side="right")]

    def to_dict(self) -> dict:
        return {
            "kind": "limit",
            "dim": 1,
            "a": self.a,
            "b": self.b,
            "breakpoints": self.breakpoints.tolist(),
            "slopes": self.slopes.tolist(),
            "intercepts": self.intercepts.tolist(),
        }


def limit_solution_1d(samples: SampleSet) -> LimitSolution1D:
    """Build the exact point-source solution

    ``u(x) = S (x - a)/(b - a) - sum_i g_i (x - x_i) H(x - x_i)``,
    ``g_i = w_i f(x_i)`` and ``S = sum_i g_i (b - x_i)``.
    """
    if samples.dim != 1:
        raise ValueError("limit_solution_1d needs a 1D sample set")
    (a, b), = samples.domain.bounds
    x = samples.points[:, 0]
    g = samples.weights * samples.values
    order = np.argsort(x, kind="stable")
    x, g = x[order], g[order]
    S = float(np.sum(g * (b - x)))
    cum_g = np.concatenate([[0.0], np.cumsum(g)])
    cum_gx = np.concatenate([[0.0], np.cumsum(g * x)])
    slopes = S / (b - a) - cum_g
    intercepts = -S * a / (b - a) + cum_gx
    return LimitSolution1D(float(a), float(b), x, slopes, intercepts)


def eval_limit_1d(u: LimitSolution1D, grid) -> np.ndarray:
    x = np.asarray(grid, dtype=float)
    if np.any((x < u.a) | (x > u.b)):
        raise ValueError("grid point outside [a, b]")
    piece = np.searchsorted(u.breakpoints, x, side="right")
    out = u.slopes[piece] * x + u.intercepts[piece]
    return np.where((x == u.a) | (x == u.b), 0.0, out)


@dataclass(frozen=True, eq=False)
class GreenSeries2D:
    """Truncated Dirichlet Green's series on ``[x0, x0 + a] x [y0, y0 + b]``.

    ``coefficients[k-1, l-1] = 4/(a b) * sum_i w_i f_i sin(p_k x_i) sin(q_l y_i) / (p_k^2 + q_l^2)``
    with ``p_k = pi k / a`` and ``q_l = pi l / b`` (coordinates relative to the corner).
    """

    domain: Domain
    K: int
    L: int
    coefficients: np.ndarray

    @property
    def a(self) -> float:
        return float(self.domain.lengths[0])

    @property
    def b(self) -> float:
        return float(self.domain.lengths[1])

    def __call__(self, points) -> np.ndarray:
        return eval_green_2d(self, points)

    def to_dict(self) -> dict:
        return {
            "kind": "limit",
            "dim": 2,
            "bounds": [list(ab) for ab in self.domain.bounds],
            "K": self.K,
            "L": self.L,
            "coefficients": self.coefficients.tolist(),
        }


def green_series_2d(samples: SampleSet, K: int, L: int | None = None) -> GreenSeries2D:
    L = K if L is None else L
    if samples.dim != 2:
        raise ValueError("green_series_2d needs a 2D sample set")
    if K < 1 or L < 1:
        raise ValueError("truncation orders must be >= 1")
    dom = samples.domain
    (x0, x1), (y0, y1) = dom.bounds
    a, b = x1 - x0, y1 - y0
    p = np.pi * np.arange(1, K + 1) / a
    q = np.pi * np.arange(1, L + 1) / b
    Sx = axis_matrix("sine", K, samples.points[:, 0], x0, x1)
    Sy = axis_matrix("sine", L, samples.points[:, 1], y0, y1)
    g = samples.weights * samples.values
    num = Sx.T @ (g[:, None] * Sy)
    coef = 4.0 / (a * b) * num / (p[:, None] ** 2 + q[None, :] ** 2)
    coef.setflags(write=False)
    return GreenSeries2D(dom, K, L, coef)


def eval_green_2d(series: GreenSeries2D, grid) -> np.ndarray:
    pts = series.domain.as_points(grid)
    (x0, x1), (y0, y1) = series.domain.bounds
    Sx = axis_matrix("sine", series.K, pts[:, 0], x0, x1)
    Sy = axis_matrix("sine", series.L, pts[:, 1], y0, y1)
    return np.einsum("ij,ij->i", Sx @ series.coefficients, Sy)
