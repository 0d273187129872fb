"""One-hidden-layer network ``u(x) = sum_k c_k sigma(w_k . x + b_k)`` trained as a PDE solver.

All derivatives (in ``x`` and in the parameters) are analytic; training is
plain full-batch gradient descent.

Loss kinds
----------
strong
    ``sum_i w_i (Lap u(x_i) + f(x_i))^2 + beta * mean_j u(y_j)^2``
variational
    ``sum_i w_i (|grad u(x_i)|^2 / 2 - f(x_i) u(x_i)) + beta * mean_j u(y_j)^2``
fit
    ``sum_i w_i (u(x_i) - f(x_i))^2 / 2``, plain regression onto the samples
    (the setting of the linearized frequency-principle dynamics).

``w_i`` are the sample-set weights (``1/n`` by default) and ``y_j`` fixed
boundary points.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .sampling import Domain, SampleSet, make_rng

__all__ = [
    "Activation",
    "LossKind",
    "NetworkParams",
    "TrainConfig",
    "TrainingTrace",
    "TrainingDivergedError",
    "default_boundary_points",
    "init_network",
    "forward",
    "gradient_x",
    "laplacian",
    "loss_strong",
    "loss_variational",
    "loss_fit",
    "loss_value",
    "loss_gradients",
    "train",
]


class Activation(str, enum.Enum):
    SIN = "sin"
    RELU = "relu"


class LossKind(str, enum.Enum):
    STRONG = "strong"
    VARIATIONAL = "variational"
    FIT = "fit"


class TrainingDivergedError(FloatingPointError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


def _sigma(act: Activation, z: np.ndarray, order: int) -> np.ndarray:
    """``order``-th derivative of the activation at ``z``."""
    if act is Activation.SIN:
        return (np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t))[order](z)
    if order == 0:
        return np.maximum(z, 0.0)
    if order == 1:
        return (z > 0).astype(float)
    return np.zeros_like(z)


@dataclass(eq=False)
class NetworkParams:
    """Weights ``w`` (m, d), biases ``b`` (m,), output coefficients ``c`` (m,)."""

    activation: Activation
    w: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.activation = Activation(self.activation)
        self.w = np.array(self.w, dtype=float).reshape(len(np.ravel(self.b)), -1)
        self.b = np.array(self.b, dtype=float).ravel()
        self.c = np.array(self.c, dtype=float).ravel()
        if not (self.w.shape[0] == self.b.size == self.c.size and self.b.size >= 1):
            raise ValueError("inconsistent parameter shapes")
        if self.w.shape[1] not in (1, 2):
            raise ValueError("input dimension must be 1 or 2")

    @property
    def m(self) -> int:
        return self.b.size

    @property
    def d(self) -> int:
        return self.w.shape[1]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.activation, self.w.copy(), self.b.copy(), self.c.copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.c, self.w.ravel(), self.b])

    def with_vector(self, vec) -> "NetworkParams":
        vec = np.asarray(vec, dtype=float)
        m, d = self.m, self.d
        return NetworkParams(self.activation, vec[m : m + m * d].reshape(m, d), vec[m + m * d :], vec[:m])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.to_vector())))

    def to_dict(self) -> dict:
        return {
            "activation": self.activation.value,
            "m": self.m,
            "d": self.d,
            "w": self.w.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkParams":
        return cls(Activation(d["activation"]), d["w"], d["b"], d["c"])


def default_boundary_points(domain: Domain, per_side: int = 32) -> np.ndarray:
    """Boundary penalty nodes: both endpoints in 1D, ``4 * per_side`` perimeter points in 2D."""
    if domain.dim == 1:
        (a, b), = domain.bounds
        return np.array([[a], [b]])
    (x0, x1), (y0, y1) = domain.bounds
    t = np.arange(per_side) / per_side
    sides = [
        np.column_stack([x0 + (x1 - x0) * t, np.full(per_side, y0)]),
        np.column_stack([np.full(per_side, x1), y0 + (y1 - y0) * t]),
        np.column_stack([x1 - (x1 - x0) * t, np.full(per_side, y1)]),
        np.column_stack([np.full(per_side, x0), y1 - (y1 - y0) * t]),
    ]
    return np.vstack(sides)


@dataclass
class TrainConfig:
    loss: LossKind = LossKind.STRONG
    beta: float = 10.0
    lr: float = 1e-4
    loss_target: float = 1e-4
    max_iter: int = 2_000_000
    boundary_points: np.ndarray | None = None
    snapshot_stride: int = 100
    seed: int = 0

    def __post_init__(self):
        self.loss = LossKind(self.loss)
        if not self.lr >= 0:
            raise ValueError("learning rate must be non-negative")
        if not self.loss_target > 0:
            raise ValueError("loss target must be positive")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot stride must be >= 1")
        if self.boundary_points is not None:
            self.boundary_points = np.atleast_2d(np.asarray(self.boundary_points, dtype=float))
            if self.boundary_points.shape[0] == 1 and self.boundary_points.shape[1] > 2:
                self.boundary_points = self.boundary_points.T

    def resolved_boundary(self, domain: Domain) -> np.ndarray:
        if self.boundary_points is None:
            return default_boundary_points(domain)
        pts = domain.as_points(self.boundary_points)
        if not np.all(domain.boundary_mask(pts)):
            raise ValueError("boundary points must lie on the domain boundary")
        return pts

    def to_dict(self) -> dict:
        return {
            "loss": self.loss.value,
            "beta": self.beta,
            "lr": self.lr,
            "loss_target": self.loss_target,
            "max_iter": self.max_iter,
            "snapshot_stride": self.snapshot_stride,
            "seed": self.seed,
            "boundary_points": None if self.boundary_points is None else self.boundary_points.tolist(),
        }


@dataclass
class TrainingTrace:
    losses: list = field(default_factory=list)
    snapshot_iters: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    grid: np.ndarray | None = None
    grid_values: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.losses) - 1

    def grid_array(self) -> np.ndarray:
        return np.array(self.grid_values)


def init_network(m: int, d: int = 1, activation=Activation.SIN, seed: int = 0, scale: float = 1.0) -> NetworkParams:
    """i.i.d. normal parameters: ``w, b ~ N(0, scale^2)``, ``c ~ N(0, scale^2 / m)``."""
    if m < 1:
        raise ValueError("width must be >= 1")
    rng = make_rng(seed)
    w = rng.normal(0.0, 1.0, (m, d)) * scale
    b = rng.normal(0.0, 1.0, m) * scale
    c = rng.normal(0.0, 1.0, m) * (scale / math.sqrt(m))
    return NetworkParams(Activation(activation), w, b, c)


def _points(p: NetworkParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if p.d == 1:
        return x.reshape(-1, 1)
    return x.reshape(-1, p.d)


def _scalar_out(x, p: NetworkParams, out: np.ndarray):
    single = np.ndim(x) == 0 if p.d == 1 else np.ndim(x) == 1
    return out[0] if single else out


def forward(p: NetworkParams, x):
    X = _points(p, x)
    out = _sigma(p.activation, X @ p.w.T + p.b, 0) @ p.c
    return _scalar_out(x, p, out)


def gradient_x(p: NetworkParams, x) -> np.ndarray:
    """``grad_x u``: shape ``(d,)`` for one point, ``(N, d)`` for several."""
    X = _points(p, x)
    out = (_sigma(p.activation, X @ p.w.T + p.b, 1) * p.c) @ p.w
    return _scalar_out(x, p, out)


def laplacian(p: NetworkParams, x):
    if p.activation is Activation.RELU:
        raise ValueError("ReLU networks have zero second derivative a.e.; use the variational loss")
    X = _points(p, x)
    out = _sigma(p.activation, X @ p.w.T + p.b, 2) @ (p.c * np.sum(p.w**2, axis=1))
    return _scalar_out(x, p, out)


def _boundary_term(p, Yb, beta, need_grad):
    Zb = Yb @ p.w.T + p.b
    Sb = _sigma(p.activation, Zb, 0)
    ub = Sb @ p.c
    nb = Yb.shape[0]
    val = beta * float(ub @ ub) / nb
    if not need_grad:
        return val, None
    gb = 2.0 * beta * ub / nb
    S1b = _sigma(p.activation, Zb, 1) * gb[:, None]
    gc = gb @ Sb
    gbias = S1b.sum(0) * p.c
    gw = (S1b.T @ Yb) * p.c[:, None]
    return val, (gc, gw, gbias)


def _loss_and_grad(p: NetworkParams, samples: SampleSet, cfg: TrainConfig, need_grad: bool, Yb=None):
    X = samples.points
    f = samples.values
    wts = samples.weights
    kind = cfg.loss
    if kind is LossKind.STRONG and p.activation is Activation.RELU:
        raise ValueError("strong-form loss needs a twice-differentiable activation; use the variational loss")
    Z = X @ p.w.T + p.b
    S0 = _sigma(p.activation, Z, 0)
    S1 = _sigma(p.activation, Z, 1)
    c = p.c
    grad = None
    if kind is LossKind.STRONG:
        S2 = _sigma(p.activation, Z, 2)
        wsq = np.sum(p.w**2, axis=1)
        r = S2 @ (c * wsq) + f
        val = float(np.sum(wts * r * r))
        if need_grad:
            gr = 2.0 * wts * r
            S3 = _sigma(p.activation, Z, 3)
            gc = (gr @ S2) * wsq
            A3 = (gr[:, None] * S3) * (c * wsq)
            gbias = A3.sum(0)
            gw = A3.T @ X + 2.0 * ((gr @ S2) * c)[:, None] * p.w
            grad = (gc, gw, gbias)
    elif kind is LossKind.VARIATIONAL:
        u = S0 @ c
        G = (S1 * c) @ p.w  # (n, d)
        val = float(np.sum(wts * (0.5 * np.sum(G * G, axis=1) - f * u)))
        if need_grad:
            S2 = _sigma(p.activation, Z, 2)
            Gw = G @ p.w.T  # G_i . w_k
            gc = (wts[:, None] * (S1 * Gw)).sum(0) - (wts * f) @ S0
            T2 = wts[:, None] * S2 * Gw * c  # c_k sigma'' (G_i . w_k)
            T1 = wts[:, None] * S1 * c  # c_k sigma'
            gbias = T2.sum(0) - (f @ T1)
            gw = T2.T @ X + T1.T @ G - (T1 * f[:, None]).T @ X
            grad = (gc, gw, gbias)
    elif kind is LossKind.FIT:
        r = S0 @ c - f
        val = float(0.5 * np.sum(wts * r * r))
        if need_grad:
            gr = wts * r
            gc = gr @ S0
            T1 = (gr[:, None] * S1) * c
            gbias = T1.sum(0)
            gw = T1.T @ X
            grad = (gc, gw, gbias)
    else:  # pragma: no cover
        raise ValueError(kind)
    if kind is not LossKind.FIT and cfg.beta != 0.0:
        if Yb is None:
            Yb = cfg.resolved_boundary(samples.domain)
        bval, bgrad = _boundary_term(p, Yb, cfg.beta, need_grad)
        val += bval
        if need_grad:
            grad = tuple(g + h for g, h in zip(grad, bgrad))
    return val, grad


def _check_dims(p: NetworkParams, samples: SampleSet):
    if p.d != samples.dim:
        raise ValueError(f"network input dimension {p.d} != sample dimension {samples.dim}")


def loss_strong(p: NetworkParams, samples: SampleSet, cfg: TrainConfig | None = None) -> float:
    _check_dims(p, samples)
    cfg = replace(cfg or TrainConfig(), loss=LossKind.STRONG)
    return _loss_and_grad(p, samples, cfg, False)[0]


def loss_variational(p: NetworkParams, samples: SampleSet, cfg: TrainConfig | None = None) -> float:
    _check_dims(p, samples)
    cfg = replace(cfg or TrainConfig(), loss=LossKind.VARIATIONAL)
    return _loss_and_grad(p, samples, cfg, False)[0]


def loss_fit(p: NetworkParams, samples: SampleSet, cfg: TrainConfig | None = None) -> float:
    _check_dims(p, samples)
    cfg = replace(cfg or TrainConfig(), loss=LossKind.FIT)
    return _loss_and_grad(p, samples, cfg, False)[0]


def loss_value(p: NetworkParams, samples: SampleSet, cfg: TrainConfig) -> float:
    _check_dims(p, samples)
    return _loss_and_grad(p, samples, cfg, False)[0]


def loss_gradients(p: NetworkParams, samples: SampleSet, cfg: TrainConfig) -> NetworkParams:
    """Exact gradient of the configured loss, packed as a ``NetworkParams``."""
    _check_dims(p, samples)
    _, (gc, gw, gbias) = _loss_and_grad(p, samples, cfg, True)
    return NetworkParams(p.activation, gw, gbias, gc)


def train(
    p: NetworkParams,
    samples: SampleSet,
    cfg: TrainConfig,
    eval_grid=None,
    keep_params: bool = True,
) -> tuple[NetworkParams, TrainingTrace]:
    """Full-batch gradient descent until ``loss <= cfg.loss_target`` or ``cfg.max_iter`` steps.

    For the variational loss the stop test is ``||grad L|| <= cfg.loss_target``
    because the energy itself can be negative.

    Snapshots (parameters and, if ``eval_grid`` is given, the network on that
    grid) are taken at iteration 0, every ``snapshot_stride`` iterations and
    at the final iteration.
    """
    _check_dims(p, samples)
    p = p.copy()
    Yb = None if cfg.loss is LossKind.FIT else cfg.resolved_boundary(samples.domain)
    trace = TrainingTrace(grid=None if eval_grid is None else np.asarray(eval_grid, dtype=float))

    def snapshot(it):
        trace.snapshot_iters.append(it)
        if keep_params:
            trace.snapshots.append(p.copy())
        if trace.grid is not None:
            trace.grid_values.append(np.asarray(forward(p, trace.grid), dtype=float).ravel())

    lr = cfg.lr
    it = 0
    while True:
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = _loss_and_grad(p, samples, cfg, True, Yb)
        if not math.isfinite(loss):
            raise TrainingDivergedError(it, loss)
        trace.losses.append(loss)
        if cfg.loss is LossKind.VARIATIONAL:
            # the energy is unbounded below in sign, so stop on stationarity instead
            done = math.sqrt(sum(float(np.sum(g * g)) for g in grad)) <= cfg.loss_target
        else:
            done = loss <= cfg.loss_target
        if done or it >= cfg.max_iter:
            trace.converged = done
            snapshot(it)
            break
        if it % cfg.snapshot_stride == 0:
            snapshot(it)
        gc, gw, gbias = grad
        p.c -= lr * gc
        p.w -= lr * gw
        p.b -= lr * gbias
        it += 1
    return p, trace
