"""Ritz-Galerkin discretization with a point-sampled right-hand side.

The load vector is the quadrature ``b_j = sum_i w_i f(x_i) phi_j(x_i)``
(``w_i = 1/n`` by default) while the stiffness matrix is exact. Four basis
families are supported, all vanishing on the boundary:

* ``sine1d``        ``sin(k pi (x - a) / (b - a))``
* ``hat1d``         piecewise-linear hats on ``m`` uniform interior nodes
* ``tensor_sine2d`` products of the 1D sines
* ``bilinear2d``    products of the 1D hats (Q1 elements)

Two-dimensional bases are indexed row-major: ``(k1, k2) -> (k1 - 1) * m2 + (k2 - 1)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse

from .sampling import Domain, SampleSet

__all__ = [
    "BasisKind",
    "Structure",
    "BasisFamily",
    "StiffnessSystem",
    "RGSolution",
    "NotPositiveDefiniteError",
    "axis_matrix",
    "basis_matrix",
    "eval_basis",
    "assemble_stiffness",
    "assemble_mass_1d",
    "assemble_rhs",
    "assemble_system",
    "solve_rg",
    "eval_rg",
]


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """The assembled stiffness matrix failed a Cholesky factorization."""


class BasisKind(str, enum.Enum):
    SINE_1D = "sine1d"
    HAT_1D = "hat1d"
    TENSOR_SINE_2D = "tensor_sine2d"
    BILINEAR_2D = "bilinear2d"

    @property
    def dim(self) -> int:
        return 1 if self in (BasisKind.SINE_1D, BasisKind.HAT_1D) else 2

    @property
    def axis_kind(self) -> str:
        return "sine" if self in (BasisKind.SINE_1D, BasisKind.TENSOR_SINE_2D) else "hat"


class Structure(str, enum.Enum):
    DIAGONAL = "diagonal"
    TRIDIAGONAL = "tridiagonal"
    BANDED = "banded"
    DENSE = "dense"


@dataclass(frozen=True)
class BasisFamily:
    kind: BasisKind
    shape: tuple[int, ...]
    domain: Domain

    def __post_init__(self):
        kind = BasisKind(self.kind)
        shape = tuple(int(s) for s in np.atleast_1d(self.shape))
        if self.domain.dim != kind.dim:
            raise ValueError(f"{kind.value} needs a {kind.dim}D domain")
        if len(shape) == 1 and kind.dim == 2:
            shape = shape * 2
        if len(shape) != kind.dim or min(shape) < 1:
            raise ValueError(f"invalid basis shape {shape} for {kind.value}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def sine_1d(cls, m: int, domain: Domain | None = None) -> "BasisFamily":
        return cls(BasisKind.SINE_1D, (m,), domain or Domain.interval(-1.0, 1.0))

    @classmethod
    def hat_1d(cls, m: int, domain: Domain | None = None) -> "BasisFamily":
        return cls(BasisKind.HAT_1D, (m,), domain or Domain.interval(-1.0, 1.0))

    @classmethod
    def tensor_sine_2d(cls, m1: int, m2: int | None = None, domain: Domain | None = None) -> "BasisFamily":
        return cls(BasisKind.TENSOR_SINE_2D, (m1, m2 or m1), domain or Domain.box())

    @classmethod
    def bilinear_2d(cls, m1: int, m2: int | None = None, domain: Domain | None = None) -> "BasisFamily":
        return cls(BasisKind.BILINEAR_2D, (m1, m2 or m1), domain or Domain.box())

    @property
    def m(self) -> int:
        return int(np.prod(self.shape))

    @property
    def dim(self) -> int:
        return self.kind.dim

    def node_spacing(self, axis: int = 0) -> float:
        a, b = self.domain.bounds[axis]
        return (b - a) / (self.shape[axis] + 1)

    def nodes(self, axis: int = 0) -> np.ndarray:
        """Interior FEM nodes along ``axis`` (hat kinds only)."""
        a, _ = self.domain.bounds[axis]
        return a + np.arange(1, self.shape[axis] + 1) * self.node_spacing(axis)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "shape": list(self.shape), "bounds": [list(ab) for ab in self.domain.bounds]}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisFamily":
        return cls(BasisKind(d["kind"]), tuple(d["shape"]), Domain(tuple(tuple(ab) for ab in d["bounds"])))


def axis_matrix(kind: str, m: int, x, a: float, b: float) -> np.ndarray:
    """Values of the ``m`` 1D basis functions at ``x``: shape ``(len(x), m)``.

    Points on or outside ``[a, b]``'s boundary give exact zeros.
    """
    x = np.asarray(x, dtype=float).ravel()
    k = np.arange(1, m + 1)
    if kind == "sine":
        out = np.sin(np.outer((x - a) / (b - a), k * np.pi))
    elif kind == "hat":
        t = (x - a) * ((m + 1) / (b - a))
        # snap to nodes so phi_k(x_j) = delta_kj holds exactly
        r = np.round(t)
        t = np.where(np.abs(t - r) < 1e-12 * np.maximum(1.0, np.abs(t)), r, t)
        out = np.maximum(0.0, 1.0 - np.abs(t[:, None] - k[None, :]))
    else:
        raise ValueError(f"unknown axis kind {kind!r}")
    out[(x <= a) | (x >= b)] = 0.0
    return out


def _axis_matrices(basis: BasisFamily, points) -> list[np.ndarray]:
    pts = basis.domain.as_points(points)
    return [
        axis_matrix(basis.kind.axis_kind, basis.shape[ax], pts[:, ax], *basis.domain.bounds[ax])
        for ax in range(basis.dim)
    ]


def basis_matrix(basis: BasisFamily, points) -> np.ndarray:
    """Dense ``(N, m)`` matrix of all basis functions at ``points``."""
    mats = _axis_matrices(basis, points)
    if basis.dim == 1:
        return mats[0]
    X, Y = mats
    return (X[:, :, None] * Y[:, None, :]).reshape(X.shape[0], -1)


def _split_index(basis: BasisFamily, k) -> tuple[int, ...]:
    if basis.dim == 1:
        idx = (int(np.ravel(k)[0]),)
    elif np.ndim(k) == 0:
        k = int(k)
        if not 1 <= k <= basis.m:
            raise IndexError(f"basis index {k} out of range 1..{basis.m}")
        idx = divmod(k - 1, basis.shape[1])
        idx = (idx[0] + 1, idx[1] + 1)
    else:
        idx = tuple(int(v) for v in k)
    for i, s in zip(idx, basis.shape):
        if not 1 <= i <= s:
            raise IndexError(f"basis index {idx} out of range for shape {basis.shape}")
    return idx


def eval_basis(basis: BasisFamily, k, x) -> float | np.ndarray:
    """Evaluate basis function ``k`` (1-based; a pair ``(k1, k2)`` or flat index in 2D)."""
    idx = _split_index(basis, k)
    pts = basis.domain.as_points(x)
    if not np.all(basis.domain.closed_mask(pts)):
        raise ValueError("evaluation point outside the closed domain")
    val = np.ones(pts.shape[0])
    for ax, i in enumerate(idx):
        a, b = basis.domain.bounds[ax]
        col = axis_matrix(basis.kind.axis_kind, i, pts[:, ax], a, b)[:, i - 1]
        val = val * col
    return float(val[0]) if np.ndim(x) == 0 or (basis.dim == 2 and np.ndim(x) == 1) else val


@dataclass(frozen=True, eq=False)
class StiffnessSystem:
    matrix: sparse.csr_matrix
    structure: Structure
    rhs: np.ndarray | None = None
    bandwidth: int = 0

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _stiffness_1d(kind: str, m: int, a: float, b: float) -> sparse.dia_matrix:
    L = b - a
    if kind == "sine":
        k = np.arange(1, m + 1)
        return sparse.diags(k**2 * np.pi**2 / (2.0 * L), format="dia")
    h = L / (m + 1)
    return sparse.diags(
        [np.full(m - 1, -1.0 / h), np.full(m, 2.0 / h), np.full(m - 1, -1.0 / h)], [-1, 0, 1], format="dia"
    )


def assemble_mass_1d(kind: str, m: int, a: float, b: float) -> sparse.dia_matrix:
    """Exact 1D mass matrix ``int phi_k phi_j``."""
    L = b - a
    if kind == "sine":
        return sparse.diags(np.full(m, L / 2.0), format="dia")
    h = L / (m + 1)
    return sparse.diags(
        [np.full(m - 1, h / 6.0), np.full(m, 2.0 * h / 3.0), np.full(m - 1, h / 6.0)], [-1, 0, 1], format="dia"
    )


def assemble_stiffness(basis: BasisFamily) -> StiffnessSystem:
    """Closed-form stiffness matrix ``A_jk = int grad phi_k . grad phi_j``."""
    axis = basis.kind.axis_kind
    if basis.dim == 1:
        (a, b), = basis.domain.bounds
        A = _stiffness_1d(axis, basis.m, a, b)
        if axis == "sine":
            return StiffnessSystem(A.tocsr(), Structure.DIAGONAL)
        return StiffnessSystem(A.tocsr(), Structure.TRIDIAGONAL, bandwidth=1)
    (ax, bx), (ay, by) = basis.domain.bounds
    m1, m2 = basis.shape
    Ax, Ay = _stiffness_1d(axis, m1, ax, bx), _stiffness_1d(axis, m2, ay, by)
    Mx, My = assemble_mass_1d(axis, m1, ax, bx), assemble_mass_1d(axis, m2, ay, by)
    A = (sparse.kron(Ax, My) + sparse.kron(Mx, Ay)).tocsr()
    if axis == "sine":
        return StiffnessSystem(A, Structure.DIAGONAL)
    if m2 == 1:
        return StiffnessSystem(A, Structure.TRIDIAGONAL, bandwidth=1)
    return StiffnessSystem(A, Structure.BANDED, bandwidth=m2 + 1)


def assemble_rhs(basis: BasisFamily, samples: SampleSet) -> np.ndarray:
    """Sampled load vector ``b_j = sum_i w_i f(x_i) phi_j(x_i)``."""
    if samples.domain != basis.domain:
        raise ValueError("sample domain differs from basis domain")
    wf = samples.weights * samples.values
    mats = _axis_matrices(basis, samples.points)
    if basis.dim == 1:
        return mats[0].T @ wf
    X, Y = mats
    return (X.T @ (wf[:, None] * Y)).ravel()


def assemble_system(basis: BasisFamily, samples: SampleSet) -> StiffnessSystem:
    st = assemble_stiffness(basis)
    return StiffnessSystem(st.matrix, st.structure, assemble_rhs(basis, samples), st.bandwidth)


@dataclass(frozen=True, eq=False)
class RGSolution:
    basis: BasisFamily
    coefficients: np.ndarray

    def __call__(self, points) -> np.ndarray:
        return eval_rg(self, points)

    def to_dict(self) -> dict:
        return {"kind": "rg", "basis": self.basis.to_dict(), "coefficients": self.coefficients.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RGSolution":
        return cls(BasisFamily.from_dict(d["basis"]), np.asarray(d["coefficients"], dtype=float))


def _upper_band(A: sparse.spmatrix, u: int) -> np.ndarray:
    m = A.shape[0]
    ab = np.zeros((u + 1, m))
    for d in range(u + 1):
        ab[u - d, d:] = A.diagonal(d)
    return ab


def _solve(system: StiffnessSystem) -> np.ndarray:
    A, rhs = system.matrix, system.rhs
    try:
        if system.structure is Structure.DIAGONAL:
            diag = A.diagonal()
            if np.any(diag <= 0):
                raise NotPositiveDefiniteError("non-positive diagonal entry")
            return rhs / diag
        if system.structure in (Structure.TRIDIAGONAL, Structure.BANDED):
            return scipy.linalg.solveh_banded(_upper_band(A, system.bandwidth), rhs)
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(A.toarray()), rhs)
    except np.linalg.LinAlgError as exc:
        if isinstance(exc, NotPositiveDefiniteError):
            raise
        raise NotPositiveDefiniteError(str(exc)) from exc


def solve_rg(basis: BasisFamily, samples: SampleSet) -> RGSolution:
    """Solve the sampled R-G system, exploiting the stiffness structure."""
    system = assemble_system(basis, samples)
    c = _solve(system)
    resid = np.max(np.abs(system.matrix @ c - system.rhs), initial=0.0)
    scale = np.max(np.abs(system.rhs), initial=0.0)
    if not np.all(np.isfinite(c)) or resid > 1e-10 * scale:
        raise NotPositiveDefiniteError(f"solve residual {resid:.3e} exceeds tolerance")
    c.setflags(write=False)
    return RGSolution(basis, c)


def eval_rg(solution: RGSolution, points) -> np.ndarray:
    """Evaluate ``u_h = sum_k c_k phi_k`` at ``points``; boundary points give exactly 0."""
    basis = solution.basis
    mats = _axis_matrices(basis, points)
    if basis.dim == 1:
        return mats[0] @ solution.coefficients
    X, Y = mats
    C = solution.coefficients.reshape(basis.shape)
    return np.einsum("ij,ij->i", X @ C, Y)
