"""Solution-quality metrics on evaluation grids.

1D grids are increasing coordinate vectors. 2D grids are tensor grids
stored flat in ``ij`` order (x outer, y inner), i.e. ``values.reshape(nx, ny)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .fprinciple import _phase

__all__ = [
    "ComparisonReport",
    "uniform_grid",
    "grid_axes",
    "l2_distance",
    "linf_distance",
    "hf_energy_fraction",
    "derivative_tv",
    "boundary_violation",
    "l2_distance_quadrature",
    "compare_values",
]


def uniform_grid(domain, size: int) -> np.ndarray:
    """``size`` equispaced points per axis including the boundary; ``(N, dim)``."""
    if size < 2:
        raise ValueError("grid size must be >= 2")
    axes = [np.linspace(a, b, size) for a, b in domain.bounds]
    if len(axes) == 1:
        return axes[0].reshape(-1, 1)
    X, Y = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def grid_axes(grid) -> list[np.ndarray]:
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1 or g.shape[1] == 1:
        return [g.ravel()]
    xs, ys = np.unique(g[:, 0]), np.unique(g[:, 1])
    if xs.size * ys.size != g.shape[0]:
        raise ValueError("2D grid is not a tensor grid")
    return [xs, ys]


def _integrate(values: np.ndarray, axes: list[np.ndarray]) -> float:
    if len(axes) == 1:
        return float(np.trapezoid(values, axes[0]))
    V = values.reshape(axes[0].size, axes[1].size)
    return float(np.trapezoid(np.trapezoid(V, axes[1], axis=1), axes[0]))


def l2_distance(u, v, grid) -> float:
    """Trapezoidal ``||u - v||_{L^2}`` over the grid."""
    d = np.asarray(u, dtype=float) - np.asarray(v, dtype=float)
    return float(np.sqrt(_integrate(d * d, grid_axes(grid))))


def linf_distance(u, v) -> float:
    return float(np.max(np.abs(np.asarray(u, dtype=float) - np.asarray(v, dtype=float))))


def hf_energy_fraction(values, grid, cutoff: float = 10.0) -> float:
    """Share of spectral energy at ``|xi| > cutoff`` (cycles per unit length).

    The spectrum is the nonuniform DFT of the grid samples at frequencies
    ``k / L`` up to the grid Nyquist rate.
    """
    values = np.asarray(values, dtype=float)
    axes = grid_axes(grid)
    freq_axes = []
    for ax in axes:
        L = ax[-1] - ax[0]
        kmax = (ax.size - 1) // 2
        freq_axes.append(np.arange(-kmax, kmax + 1) / L)
    if len(axes) == 1:
        F = _phase(axes[0].reshape(-1, 1), freq_axes[0]) @ values / values.size
        power = np.abs(F) ** 2
        norms = np.abs(freq_axes[0])
    else:
        V = values.reshape(axes[0].size, axes[1].size)
        Px = _phase(axes[0].reshape(-1, 1), freq_axes[0])
        Py = _phase(axes[1].reshape(-1, 1), freq_axes[1])
        F = Px @ V @ Py.T / values.size
        power = np.abs(F) ** 2
        norms = np.hypot(*np.meshgrid(freq_axes[0], freq_axes[1], indexing="ij"))
    total = float(power.sum())
    if total == 0.0:
        return 0.0
    return float(power[norms > cutoff].sum() / total)


def _tv_of_derivative_1d(u: np.ndarray, x: np.ndarray) -> float:
    du = np.diff(u) / np.diff(x)
    return float(np.sum(np.abs(np.diff(du))))


def derivative_tv(values, grid) -> float:
    """Total variation of the finite-difference first derivative.

    In 2D: the mean over grid lines of the 1D value, averaged over both axes.
    """
    values = np.asarray(values, dtype=float)
    axes = grid_axes(grid)
    if len(axes) == 1:
        return _tv_of_derivative_1d(values, axes[0])
    V = values.reshape(axes[0].size, axes[1].size)
    tx = np.mean([_tv_of_derivative_1d(V[:, j], axes[0]) for j in range(axes[1].size)])
    ty = np.mean([_tv_of_derivative_1d(V[i, :], axes[1]) for i in range(axes[0].size)])
    return float(0.5 * (tx + ty))


def boundary_violation(values, grid) -> float:
    """Largest ``|u|`` at grid points on the outer boundary."""
    values = np.asarray(values, dtype=float)
    axes = grid_axes(grid)
    if len(axes) == 1:
        return float(max(abs(values[0]), abs(values[-1])))
    V = values.reshape(axes[0].size, axes[1].size)
    edge = np.concatenate([V[0], V[-1], V[:, 0], V[:, -1]])
    return float(np.max(np.abs(edge)))


def l2_distance_quadrature(u, v, a: float, b: float, breaks=(), panels: int = 2000, order: int = 10) -> float:
    """``||u - v||_{L^2(a, b)}`` by composite Gauss-Legendre.

    ``breaks`` (e.g. kinks of a piecewise-linear function) become panel
    boundaries so each panel integrates a smooth integrand.
    """
    knots = np.unique(np.concatenate([[a, b], [t for t in breaks if a < t < b]]))
    nodes, weights = leggauss(order)
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        k = max(1, int(round(panels * (hi - lo) / (b - a))))
        edges = np.linspace(lo, hi, k + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        wts = (half[:, None] * weights[None, :]).ravel()
        d = np.asarray(u(x), dtype=float) - np.asarray(v(x), dtype=float)
        total += float(np.sum(wts * d * d))
    return float(np.sqrt(total))


@dataclass
class ComparisonReport:
    l2: float | None
    linf: float | None
    hf_fraction: float
    derivative_tv: float
    boundary_violation: float
    cutoff: float = 10.0

    def to_dict(self) -> dict:
        return asdict(self)


def compare_values(values, grid, reference=None, cutoff: float = 10.0) -> ComparisonReport:
    values = np.asarray(values, dtype=float)
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        if reference.shape != values.shape:
            raise ValueError("reference is sampled on a different grid")
        l2, linf = l2_distance(values, reference, grid), linf_distance(values, reference)
    else:
        l2 = linf = None
    return ComparisonReport(
        l2=l2,
        linf=linf,
        hf_fraction=hf_energy_fraction(values, grid, cutoff),
        derivative_tv=derivative_tv(values, grid),
        boundary_violation=boundary_violation(values, grid),
        cutoff=cutoff,
    )
