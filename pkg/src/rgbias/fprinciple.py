"""Frequency-domain view of network training.

Fourier convention: ``F[g](xi) = int g(x) exp(-2 pi i xi.x) dx`` with ``xi`` in
cycles per unit length. For point data the integral is taken against the
empirical measure ``(1/n) sum_i delta(x - x_i)``.

The linearized dynamics of a wide two-layer network are

    d/dt F[h](xi) = -Gamma(xi) F[(h - f) rho](xi),
    Gamma(xi) = A / |xi|^(d+3) + B / |xi|^(d+1),

whose long-time limit (from ``h = 0``) is the interpolant minimizing
``sum_xi |F[h](xi)|^2 / Gamma(xi)``. Both are realized here on a periodic
grid; the zero mode, where ``Gamma`` is singular, is given the value at the
smallest nonzero grid frequency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import scipy.linalg

from .dnn_solver import NetworkParams, TrainingTrace
from .io import write_table_csv
from .sampling import SampleSet

__all__ = [
    "Spectrum",
    "GammaKernel",
    "BandReport",
    "PeriodicGrid",
    "GridFunction",
    "FPMinResult",
    "FlowTrajectory",
    "FlowInstabilityError",
    "nudft",
    "gamma",
    "dyadic_edges",
    "band_errors",
    "band_convergence",
    "fp_norm",
    "fp_norm_minimize",
    "simulate_gradient_flow",
]


@dataclass(frozen=True, eq=False)
class Spectrum:
    freqs: np.ndarray
    amplitudes: np.ndarray

    @property
    def norms(self) -> np.ndarray:
        f = np.asarray(self.freqs, dtype=float)
        return np.abs(f) if f.ndim == 1 else np.linalg.norm(f, axis=1)

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_csv(self, path) -> None:
        f = np.asarray(self.freqs, dtype=float)
        cols = ["xi"] if f.ndim == 1 else [f"xi{i + 1}" for i in range(f.shape[1])]
        rows = (
            (*np.atleast_1d(fi), a.real, a.imag, abs(a) ** 2) for fi, a in zip(f, self.amplitudes)
        )
        write_table_csv(path, cols + ["re", "im", "power"], rows)


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return pts.reshape(-1, 1) if pts.ndim <= 1 else pts


def _phase(points: np.ndarray, freqs) -> np.ndarray:
    """``exp(-2 pi i xi_k . x_j)`` with shape ``(K, n)``."""
    fr = np.asarray(freqs, dtype=float)
    fr = fr.reshape(-1, 1) if fr.ndim <= 1 else fr
    return np.exp(-2j * np.pi * (fr @ points.T))


def nudft(points, values, freqs) -> Spectrum:
    """``F(xi) = (1/n) sum_i v_i exp(-2 pi i xi . x_i)`` for arbitrary (nonuniform) points."""
    pts = _as_points(points)
    vals = np.asarray(values)
    if vals.shape[0] != pts.shape[0]:
        raise ValueError(f"{pts.shape[0]} points but {vals.shape[0]} values")
    amp = _phase(pts, freqs) @ vals / pts.shape[0]
    return Spectrum(np.asarray(freqs, dtype=float), amp)


@dataclass(frozen=True)
class GammaKernel:
    """``Gamma(xi) = A / |xi|^p + B / |xi|^q`` with ``(p, q) = (d + 3, d + 1)`` unless overridden."""

    A: float
    B: float
    d: int = 1
    p: float | None = None
    q: float | None = None

    def __post_init__(self):
        if self.A < 0 or self.B < 0 or (self.A == 0 and self.B == 0):
            raise ValueError("need A, B >= 0, not both zero")

    @property
    def exponents(self) -> tuple[float, float]:
        return (self.d + 3 if self.p is None else self.p, self.d + 1 if self.q is None else self.q)

    def __call__(self, xi):
        return gamma(self, xi)

    @classmethod
    def from_network(cls, params: NetworkParams) -> "GammaKernel":
        """Coefficients from initial parameters (output weights ``c`` play the role of ``a``)."""
        wsq = np.sum(params.w**2, axis=1)
        csq = params.c**2
        return cls(float(np.mean(wsq + csq)), float(4 * np.pi**2 * np.mean(wsq * csq)), params.d)

    def to_dict(self) -> dict:
        p, q = self.exponents
        return {"A": self.A, "B": self.B, "d": self.d, "p": p, "q": q}


def gamma(kernel: GammaKernel, xi):
    xi = np.asarray(xi, dtype=float)
    r = np.abs(xi) if (xi.ndim <= 1 or kernel.d == 1) else np.linalg.norm(xi, axis=-1)
    if np.any(r == 0):
        raise ValueError("Gamma is singular at xi = 0")
    p, q = kernel.exponents
    return kernel.A / r**p + kernel.B / r**q


# ---------------------------------------------------------------------------
# band analysis


def dyadic_edges(base: float, n_bands: int = 5) -> np.ndarray:
    """``[0, base, 2 base, 4 base, ...]`` with ``n_bands`` bands."""
    return np.concatenate([[0.0], base * 2.0 ** np.arange(n_bands)])


@dataclass
class BandReport:
    edges: np.ndarray
    iterations: np.ndarray
    errors: np.ndarray  # (snapshots, bands); NaN for flagged bands
    first_passage: list
    flagged: list
    threshold: float = 0.5

    @property
    def active(self) -> list[int]:
        return [j for j in range(len(self.edges) - 1) if j not in self.flagged]

    def is_ordered(self) -> bool:
        """Every active band passes, and first passages are non-decreasing in frequency."""
        fp = [self.first_passage[j] for j in self.active]
        if any(v is None for v in fp):
            return False
        return all(a <= b for a, b in zip(fp[:-1], fp[1:]))

    def to_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "threshold": self.threshold,
            "first_passage": self.first_passage,
            "flagged": self.flagged,
            "iterations": self.iterations.tolist(),
            "errors": [[None if math.isnan(v) else v for v in row] for row in self.errors.tolist()],
        }


def band_errors(
    norms: np.ndarray,
    err_amplitudes: np.ndarray,
    target_amplitudes: np.ndarray,
    edges: Sequence[float],
    iterations,
    threshold: float = 0.5,
) -> BandReport:
    """Relative band energies ``sum_B |E|^2 / sum_B |T|^2`` for each row of ``err_amplitudes``.

    Bands are half-open ``[e_j, e_{j+1})``. A band whose target energy is
    (numerically) zero is flagged and left out of the ordering.
    """
    edges = np.asarray(edges, dtype=float)
    err_pow = np.abs(np.atleast_2d(err_amplitudes)) ** 2
    tgt_pow = np.abs(target_amplitudes) ** 2
    total = float(tgt_pow.sum())
    nb = len(edges) - 1
    errors = np.full((err_pow.shape[0], nb), np.nan)
    first, flagged = [], []
    iterations = np.asarray(iterations)
    for j in range(nb):
        sel = (norms >= edges[j]) & (norms < edges[j + 1])
        energy = float(tgt_pow[sel].sum())
        if not sel.any() or energy <= 1e-30 * max(total, 1e-300):
            flagged.append(j)
            first.append(None)
            continue
        errors[:, j] = err_pow[:, sel].sum(axis=1) / energy
        hit = np.flatnonzero(errors[:, j] < threshold)
        first.append(int(iterations[hit[0]]) if hit.size else None)
    return BandReport(edges, iterations, errors, first, flagged, threshold)


def band_convergence(
    trace: TrainingTrace,
    target,
    grid=None,
    edges: Sequence[float] | None = None,
    threshold: float = 0.5,
    freqs=None,
) -> BandReport:
    """Per-band convergence of training snapshots toward ``target`` on the trace's grid.

    Defaults: frequencies ``0, 1/(2L), 1/L, ...`` up to the top edge, and five
    dyadic bands starting at ``1/L`` (one cycle across the grid's extent ``L``).
    """
    grid = trace.grid if grid is None else np.asarray(grid, dtype=float)
    if grid is None:
        raise ValueError("trace has no evaluation grid")
    snaps = trace.grid_array()
    target = np.asarray(target, dtype=float).ravel()
    if snaps.ndim != 2 or snaps.shape[1] != target.size or grid.shape[0] != target.size:
        raise ValueError("snapshots, target and grid must share the same grid")
    pts = _as_points(grid)
    if pts.shape[1] != 1:
        raise ValueError("band_convergence supports 1D grids")
    extent = float(pts.max() - pts.min())
    if edges is None:
        edges = dyadic_edges(1.0 / extent)
    edges = np.asarray(edges, dtype=float)
    if freqs is None:
        step = 1.0 / (2.0 * extent)
        freqs = np.arange(0.0, edges[-1], step)
    freqs = np.asarray(freqs, dtype=float)
    P = _phase(pts, freqs) / pts.shape[0]
    err = (snaps - target) @ P.T
    tgt = P @ target
    return band_errors(np.abs(freqs), err, tgt, edges, trace.snapshot_iters, threshold)


# ---------------------------------------------------------------------------
# periodic grid machinery


@dataclass(frozen=True)
class PeriodicGrid:
    """``N`` equispaced nodes on a period enclosing ``[a, b]`` plus ``padding`` of its length.

    Spectral coefficients refer to absolute coordinates,
    ``h(x) = sum_k hk[k] exp(2 pi i xi_k x)`` with ``xi_k = k / P`` and
    ``|k| < N/2`` (the unpaired Nyquist mode is left out so every grid
    function is real).
    """

    a: float
    b: float
    N: int = 1024
    padding: float = 0.25

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")
        if self.N < 64 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two >= 64")
        if self.padding < 0:
            raise ValueError("padding must be non-negative")

    @property
    def period(self) -> float:
        return (self.b - self.a) * (1.0 + self.padding)

    @property
    def x0(self) -> float:
        return self.a - 0.5 * (self.period - (self.b - self.a))

    @property
    def points(self) -> np.ndarray:
        return self.x0 + np.arange(self.N) * (self.period / self.N)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-(self.N // 2 - 1), self.N // 2)

    @property
    def freqs(self) -> np.ndarray:
        return self.wavenumbers / self.period

    @property
    def xi_min(self) -> float:
        return 1.0 / self.period

    def synthesis_matrix(self, x) -> np.ndarray:
        """``exp(2 pi i xi_k x_j)``, shape ``(len(x), K)``."""
        return np.exp(2j * np.pi * np.outer(np.ravel(np.asarray(x, dtype=float)), self.freqs))

    def synthesize(self, hk, x) -> np.ndarray:
        return (self.synthesis_matrix(x) @ hk).real

    def analyze(self, values) -> np.ndarray:
        """Coefficients of a grid function (the Nyquist component is dropped)."""
        values = np.asarray(values, dtype=float)
        return self.synthesis_matrix(self.points).conj().T @ values / self.N


GammaSpec = Union[GammaKernel, Callable, np.ndarray, Sequence[float]]


def gamma_on_grid(grid: PeriodicGrid, spec: GammaSpec) -> np.ndarray:
    """Gamma at the grid frequencies; the zero mode takes ``Gamma(xi_min)``.

    ``spec`` may be a kernel, a callable of ``|xi|``, or explicit values
    (one per grid frequency, used as given).
    """
    xi = grid.freqs
    if isinstance(spec, GammaKernel) or callable(spec):
        fn = spec
        out = np.empty_like(xi)
        nz = xi != 0
        out[nz] = fn(np.abs(xi[nz]))
        out[~nz] = fn(np.array([grid.xi_min]))[0]
    else:
        out = np.asarray(spec, dtype=float).ravel()
        if out.shape != xi.shape:
            raise ValueError(f"expected {xi.size} Gamma values, got {out.size}")
    if np.any(out < 0) or not np.all(np.isfinite(out)):
        raise ValueError("Gamma values must be finite and non-negative")
    return out


def fp_norm(gamma_values: np.ndarray, hk: np.ndarray) -> float:
    """``sum_k |hk|^2 / Gamma_k``; modes with ``Gamma_k = 0`` must vanish."""
    pos = gamma_values > 0
    if np.any(np.abs(hk[~pos]) > 0):
        return math.inf
    return float(np.sum(np.abs(hk[pos]) ** 2 / gamma_values[pos]))


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: PeriodicGrid
    coefficients: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.grid.synthesize(self.coefficients, self.grid.points)

    def __call__(self, x) -> np.ndarray:
        return self.grid.synthesize(self.coefficients, x)


@dataclass(frozen=True, eq=False)
class FPMinResult:
    h: GridFunction
    weights: np.ndarray  # kernel expansion weights lambda_i
    gamma_values: np.ndarray

    @property
    def objective(self) -> float:
        return fp_norm(self.gamma_values, self.h.coefficients)


def _sample_points_1d(samples: SampleSet) -> np.ndarray:
    if samples.dim != 1:
        raise ValueError("only 1D sample sets are supported")
    return samples.points[:, 0]


def fp_norm_minimize(
    samples: SampleSet,
    kernel: GammaSpec,
    N: int = 1024,
    padding: float = 0.25,
) -> FPMinResult:
    """Interpolant of the samples with least ``sum |hk|^2 / Gamma``.

    The minimizer is ``h = sum_i lambda_i K(x - x_i)`` where ``K`` has
    coefficients ``Gamma`` and ``K(x_i - x_j) lambda = f``.
    """
    (a, b), = samples.domain.bounds
    grid = PeriodicGrid(a, b, N, padding)
    g = gamma_on_grid(grid, kernel)
    x = _sample_points_1d(samples)
    E = grid.synthesis_matrix(x)  # (n, K)
    gram = ((E * g) @ E.conj().T).real
    try:
        lam = scipy.linalg.solve(gram, samples.values, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
        raise np.linalg.LinAlgError(f"singular interpolation matrix: {exc}") from exc
    hk = g * (E.conj().T @ lam)
    return FPMinResult(GridFunction(grid, hk), lam, g)


class FlowInstabilityError(FloatingPointError):
    def __init__(self, step: int, history: np.ndarray):
        super().__init__(
            f"residual grew for {len(history) - 1} consecutive steps up to step {step} "
            f"(sum of squares {history[0]:.3e} -> {history[-1]:.3e}); reduce dt"
        )
        self.step = step
        self.history = history


@dataclass
class FlowTrajectory:
    grid: PeriodicGrid
    gamma_values: np.ndarray
    dt: float
    steps: np.ndarray
    residual_ss: np.ndarray
    record_steps: np.ndarray
    spectra: np.ndarray  # (records, K)
    residuals: np.ndarray  # (records, n)
    final: GridFunction = field(repr=False)

    def to_csv(self, path) -> None:
        write_table_csv(path, ["step", "time", "residual_ss"],
                        ((s, s * self.dt, r) for s, r in zip(self.steps, self.residual_ss)))


def simulate_gradient_flow(
    kernel: GammaSpec,
    samples: SampleSet,
    grid: PeriodicGrid | None = None,
    dt: float | None = None,
    steps: int = 10_000,
    initial=None,
    record_every: int = 1,
    tol: float | None = None,
    patience: int = 100,
) -> FlowTrajectory:
    """Explicit-Euler integration of ``d hk/dt = -Gamma_k F[(h - f) rho](xi_k)``.

    ``initial`` is a coefficient vector on ``grid`` (zero by default). The
    residual transform is the nonuniform DFT of ``h(x_i) - f_i`` against the
    sample weights. With ``tol`` set, stops once ``max|h(x_i) - f_i| <= tol * max|f|``.
    Raises :class:`FlowInstabilityError` if the residual grows for
    ``patience`` consecutive steps.
    """
    if grid is None:
        (a, b), = samples.domain.bounds
        grid = PeriodicGrid(a, b)
    g = gamma_on_grid(grid, kernel)
    gmax = float(g.max())
    if dt is None:
        dt = 1.0 / gmax
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt * gmax >= 2.0:
        raise ValueError(f"dt * Gamma_max = {dt * gmax:.3g} >= 2 (explicit Euler unstable)")
    x = _sample_points_1d(samples)
    f = samples.values
    w = samples.weights
    E = grid.synthesis_matrix(x)  # h(x_i) = Re(E @ hk)
    Einv = E.conj().T  # phase matrix of the residual transform
    hk = np.zeros(grid.freqs.size, dtype=complex) if initial is None else np.array(initial, dtype=complex)
    fscale = float(np.max(np.abs(f))) or 1.0

    ss_hist, rec_steps, spectra, residuals = [], [], [], []
    growth = 0
    step = 0
    while True:
        r = (E @ hk).real - f
        ss = float(r @ r)
        if not math.isfinite(ss):
            raise FlowInstabilityError(step, np.array(ss_hist[-patience:] + [ss]))
        if ss_hist and ss > ss_hist[-1]:
            growth += 1
            if growth >= patience:
                raise FlowInstabilityError(step, np.array(ss_hist[-patience:] + [ss]))
        else:
            growth = 0
        ss_hist.append(ss)
        done = step >= steps or (tol is not None and np.max(np.abs(r)) <= tol * fscale)
        if step % record_every == 0 or done:
            rec_steps.append(step)
            spectra.append(hk.copy())
            residuals.append(r)
        if done:
            break
        hk = hk - dt * g * (Einv @ (w * r))
        step += 1
    return FlowTrajectory(
        grid, g, dt, np.arange(len(ss_hist)), np.array(ss_hist), np.array(rec_steps),
        np.array(spectra), np.array(residuals), GridFunction(grid, hk),
    )
