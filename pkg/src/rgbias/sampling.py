"""Domains, point samples of the source term, and the example source functions.

Random draws use numpy's Philox generator (a 64-bit counter-based bit
generator) seeded directly with the integer seed, so streams are
reproducible across platforms and numpy versions that keep Philox stable.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .io import fmt_float

__all__ = [
    "Domain",
    "SampleSet",
    "SampleError",
    "default_source_1d",
    "default_source_2d",
    "make_rng",
    "random_sample_points",
    "make_sample_set",
    "load_samples_csv",
    "save_samples_csv",
    "EXAMPLE1_POINTS",
    "EXAMPLE2_SEED",
    "EXAMPLE3_AXIS",
    "example1_samples",
    "example2_samples",
    "example3_samples",
]

# closer than this counts as the same point
MIN_SEPARATION = 1e-9

EXAMPLE1_POINTS = (-0.8, -0.4, 0.0, 0.4, 0.8)
EXAMPLE2_SEED = 2
EXAMPLE3_AXIS = (0.1, 0.25, 0.5, 0.8, 0.9)


class SampleError(ValueError):
    """Invalid sample data (out of domain, duplicated, malformed)."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[a1, b1] x ... x [ad, bd]`` with ``d`` in {1, 2}."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        if len(bounds) not in (1, 2):
            raise ValueError(f"domain dimension must be 1 or 2, got {len(bounds)}")
        for a, b in bounds:
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise ValueError(f"invalid interval [{a}, {b}]")
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def interval(cls, a: float = -1.0, b: float = 1.0) -> "Domain":
        return cls(((a, b),))

    @classmethod
    def box(cls, ax: float = 0.0, bx: float = 1.0, ay: float = 0.0, by: float = 1.0) -> "Domain":
        return cls(((ax, bx), (ay, by)))

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([a for a, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b for _, b in self.bounds])

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower

    def as_points(self, x) -> np.ndarray:
        """Coerce scalars / sequences to an ``(N, dim)`` float array."""
        arr = np.asarray(x, dtype=float)
        if self.dim == 1:
            return arr.reshape(-1, 1)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got shape {arr.shape}")
        return arr

    def interior_mask(self, points) -> np.ndarray:
        pts = self.as_points(points)
        return np.all((pts > self.lower) & (pts < self.upper), axis=1)

    def closed_mask(self, points) -> np.ndarray:
        pts = self.as_points(points)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def boundary_mask(self, points) -> np.ndarray:
        return self.closed_mask(points) & ~self.interior_mask(points)

    def metadata(self) -> str:
        return " ".join(fmt_float(v) for ab in self.bounds for v in ab)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Sampled source term: ``n`` points with values ``f(x_i)`` and quadrature weights.

    ``points`` has shape ``(n, dim)``. Weights default to ``1/n`` (Monte Carlo
    integration); any positive weights, e.g. Gauss weights, are accepted.
    """

    domain: Domain
    points: np.ndarray
    values: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = _readonly(self.domain.as_points(self.points))
        vals = _readonly(np.ravel(self.values))
        n = pts.shape[0]
        if n < 1:
            raise SampleError("a sample set needs at least one point")
        if vals.shape != (n,):
            raise SampleError(f"{n} points but {vals.size} values")
        if self.weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.ravel(self.weights)
            if w.shape != (n,):
                raise SampleError(f"{n} points but {w.size} weights")
        if not np.all(np.isfinite(vals)):
            raise SampleError("sample values must be finite")
        outside = np.flatnonzero(~self.domain.interior_mask(pts))
        if outside.size:
            i = int(outside[0])
            raise SampleError(f"point {i} ({pts[i].tolist()}) is not strictly inside the domain")
        dup = _first_duplicate(pts)
        if dup is not None:
            raise SampleError(f"points {dup[0]} and {dup[1]} coincide")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "weights", _readonly(w))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.domain.dim

    def scaled(self, alpha: float) -> "SampleSet":
        return SampleSet(self.domain, self.points, alpha * self.values, self.weights)


def _first_duplicate(pts: np.ndarray):
    n = pts.shape[0]
    if n < 2:
        return None
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    d[np.tril_indices(n)] = np.inf
    i, j = np.unravel_index(np.argmin(d), d.shape)
    if d[i, j] < MIN_SEPARATION:
        return int(i), int(j)
    return None


def default_source_1d(x):
    """``f(x) = -(4x^3 - 6x) exp(-x^2)``, the 1D example source."""
    x = np.asarray(x, dtype=float)
    # written as x * even(x) so oddness holds bit for bit
    x2 = x * x
    return x * (6.0 - 4.0 * x2) * np.exp(-x2)


def default_source_2d(x, y=None):
    """``f(x, y) = 2 pi^2 sin(pi x) sin(pi y)``.

    Accepts either two coordinate arrays or a single ``(N, 2)`` array.
    """
    if y is None:
        pts = np.asarray(x, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    # sin(pi * k) is not exactly zero in floating point; pin the boundary
    sx = np.where((x == np.round(x)), 0.0, np.sin(np.pi * x))
    sy = np.where((y == np.round(y)), 0.0, np.sin(np.pi * y))
    return 2.0 * np.pi**2 * sx * sy


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def random_sample_points(n: int, domain: Domain, seed: int) -> np.ndarray:
    """Draw ``n`` distinct points uniformly from the open domain.

    Returns an ``(n, dim)`` array. Draws that land on the boundary or within
    ``MIN_SEPARATION`` of an accepted point are rejected and redrawn.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    lo, hi = domain.lower, domain.upper
    accepted: list[np.ndarray] = []
    draws = 0
    while len(accepted) < n:
        if draws >= 1000 * n:
            raise SampleError(f"rejection sampling exceeded {1000 * n} draws")
        draws += 1
        p = lo + (hi - lo) * rng.random(domain.dim)
        if np.any(p <= lo) or np.any(p >= hi):
            continue
        if any(np.linalg.norm(p - q) < MIN_SEPARATION for q in accepted):
            continue
        accepted.append(p)
    return np.array(accepted)


Source = Union[Callable, Sequence[float], np.ndarray]


def make_sample_set(domain: Domain, points, source: Source, weights=None) -> SampleSet:
    """Build a sample set, evaluating ``source`` at the points if it is callable."""
    pts = domain.as_points(points)
    if callable(source):
        if domain.dim == 1:
            vals = source(pts[:, 0])
        else:
            vals = source(pts[:, 0], pts[:, 1])
        vals = np.broadcast_to(np.asarray(vals, dtype=float), (pts.shape[0],))
    else:
        vals = np.asarray(source, dtype=float)
    return SampleSet(domain, pts, vals, weights)


def _parse_domain_comment(line: str, lineno: int) -> Domain:
    body = line.lstrip("#").strip()
    key, _, rest = body.partition(":")
    if key.strip() != "domain":
        raise SampleError(f"line {lineno}: expected '# domain: a b [a2 b2]'")
    try:
        nums = [float(t) for t in rest.split()]
    except ValueError as exc:
        raise SampleError(f"line {lineno}: bad domain bounds ({exc})") from None
    if len(nums) not in (2, 4):
        raise SampleError(f"line {lineno}: domain needs 2 or 4 numbers, got {len(nums)}")
    try:
        return Domain(tuple(zip(nums[0::2], nums[1::2])))
    except ValueError as exc:
        raise SampleError(f"line {lineno}: {exc}") from None


def load_samples_csv(path) -> SampleSet:
    """Read a sample CSV: ``# domain: ...`` comment, header ``x[,y],f``, data rows."""
    path = Path(path)
    domain = None
    header = None
    points: list[list[float]] = []
    values: list[float] = []
    seen: dict[tuple, int] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.lstrip("#").strip().startswith("domain"):
                    domain = _parse_domain_comment(line, lineno)
                continue
            row = next(csv.reader([line]))
            if header is None:
                header = [c.strip() for c in row]
                if domain is None:
                    raise SampleError(f"line {lineno}: missing '# domain:' line before header")
                expected = ["x", "f"] if domain.dim == 1 else ["x", "y", "f"]
                if header != expected:
                    raise SampleError(f"line {lineno}: header must be {','.join(expected)}")
                continue
            if len(row) != len(header):
                raise SampleError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                nums = [float(t) for t in row]
            except ValueError:
                raise SampleError(f"line {lineno}: non-numeric field in {row}") from None
            if not all(math.isfinite(v) for v in nums):
                raise SampleError(f"line {lineno}: non-finite value")
            pt = nums[:-1]
            if not bool(domain.interior_mask(np.array(pt))[0]):
                raise SampleError(f"line {lineno}: point {pt} outside the open domain")
            for key, first in seen.items():
                if np.linalg.norm(np.subtract(pt, key)) < MIN_SEPARATION:
                    raise SampleError(f"line {lineno}: duplicate of point on line {first}")
            seen[tuple(pt)] = lineno
            points.append(pt)
            values.append(nums[-1])
    if domain is None:
        raise SampleError(f"{path}: missing '# domain:' line")
    if not points:
        raise SampleError(f"{path}: no sample rows")
    return SampleSet(domain, np.array(points), np.array(values))


def save_samples_csv(samples: SampleSet, path) -> None:
    cols = ["x", "f"] if samples.dim == 1 else ["x", "y", "f"]
    lines = [f"# domain: {samples.domain.metadata()}", ",".join(cols)]
    for p, v in zip(samples.points, samples.values):
        lines.append(",".join(fmt_float(t) for t in (*p, v)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def example1_samples() -> SampleSet:
    """Five equispaced interior points on [-1, 1] with the 1D source."""
    return make_sample_set(Domain.interval(-1.0, 1.0), EXAMPLE1_POINTS, default_source_1d)


def example2_samples(seed: int = EXAMPLE2_SEED, n: int = 10) -> SampleSet:
    dom = Domain.interval(-1.0, 1.0)
    pts = np.sort(random_sample_points(n, dom, seed)[:, 0])
    return make_sample_set(dom, pts, default_source_1d)


def example3_samples() -> SampleSet:
    """Tensor grid of the axis values on the unit square (n = 25)."""
    ax = np.array(EXAMPLE3_AXIS)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return make_sample_set(Domain.box(), pts, default_source_2d)
