import math

import numpy as np
import pytest

from oracles import central_difference, loss_loop
from rgbias.dnn_solver import (
    Activation,
    LossKind,
    NetworkParams,
    TrainConfig,
    TrainingDivergedError,
    default_boundary_points,
    forward,
    gradient_x,
    init_network,
    laplacian,
    loss_fit,
    loss_gradients,
    loss_strong,
    loss_value,
    loss_variational,
    train,
)
from rgbias.sampling import Domain, example1_samples, example3_samples, make_sample_set


def net(act, c, w, b):
    return NetworkParams(Activation(act), np.array([[w]], float), np.array([b], float), np.array([c], float))


def test_forward_examples():
    assert forward(net("sin", 1, 1, 0), np.pi / 2) == pytest.approx(1.0, abs=1e-15)
    assert forward(net("relu", 2, 1, -1), 0.0) == 0.0


def test_gradient_x_examples():
    assert gradient_x(net("sin", 1, 1, 0), 0.0)[0] == pytest.approx(1.0, abs=1e-15)
    assert gradient_x(net("relu", 1, 1, -1), 0.0)[0] == 0.0
    assert gradient_x(net("relu", 1, 1, 1), 0.0)[0] == 1.0


def test_laplacian_examples():
    assert laplacian(net("sin", 1, 1, 0), np.pi / 2) == pytest.approx(-1.0, abs=1e-15)
    assert laplacian(net("sin", 0, 3, 1), 0.3) == 0.0
    with pytest.raises(ValueError, match="variational"):
        laplacian(net("relu", 1, 1, 0), 0.0)


def test_x_derivatives_match_finite_differences():
    p = init_network(20, 2, "sin", 3)
    x = np.array([0.3, 0.7])
    eps = 1e-5
    fd = [(forward(p, x + eps * e) - forward(p, x - eps * e)) / (2 * eps) for e in np.eye(2)]
    np.testing.assert_allclose(gradient_x(p, x), fd, rtol=1e-8)
    lap = sum((forward(p, x + eps * e) - 2 * forward(p, x) + forward(p, x - eps * e)) / eps**2 for e in np.eye(2))
    assert laplacian(p, x) == pytest.approx(lap, rel=1e-4)


def test_init_network():
    a, b = init_network(7, 2, "sin", 5, 0.3), init_network(7, 2, "sin", 5, 0.3)
    np.testing.assert_array_equal(a.to_vector(), b.to_vector())
    z = init_network(10, 1, "sin", 0, scale=0.0)
    assert not np.any(forward(z, np.linspace(-1, 1, 9)))
    big = init_network(500, 1, "sin", 0)
    assert big.m == 500 and big.is_finite()
    with pytest.raises(ValueError):
        init_network(0)


def test_param_vector_and_json_round_trip():
    p = init_network(6, 2, "relu", 1)
    q = p.with_vector(p.to_vector())
    np.testing.assert_array_equal(q.w, p.w)
    r = NetworkParams.from_dict(p.to_dict())
    assert r.activation is Activation.RELU
    np.testing.assert_array_equal(r.to_vector(), p.to_vector())


def test_default_boundary_points():
    assert default_boundary_points(Domain.interval()).ravel().tolist() == [-1.0, 1.0]
    pts = default_boundary_points(Domain.box())
    assert pts.shape == (128, 2)
    assert np.all(Domain.box().boundary_mask(pts))
    with pytest.raises(ValueError):
        TrainConfig(boundary_points=[[0.0]]).resolved_boundary(Domain.interval())


def test_losses_of_zero_network():
    s = example1_samples()
    zero = init_network(5, 1, "sin", 0, scale=0.0)
    assert loss_strong(zero, s) == pytest.approx(np.mean(s.values**2), rel=1e-15)
    assert loss_variational(zero, s) == 0.0
    s0 = make_sample_set(Domain.interval(), [0.2, 0.5], [0.0, 0.0])
    assert loss_strong(zero, s0) == 0.0


def test_variational_single_unit_hand_value():
    s = make_sample_set(Domain.interval(), [0.5], [2.0])
    p = net("sin", 1.5, 2.0, 0.25)
    cfg = TrainConfig(beta=3.0)
    z = 2.0 * 0.5 + 0.25
    energy = 0.5 * (1.5 * 2.0 * math.cos(z)) ** 2 - 2.0 * 1.5 * math.sin(z)
    penalty = 3.0 * ((1.5 * math.sin(-2.0 + 0.25)) ** 2 + (1.5 * math.sin(2.0 + 0.25)) ** 2) / 2
    assert loss_variational(p, s, cfg) == pytest.approx(energy + penalty, abs=1e-12)


def test_variational_can_be_negative():
    s = make_sample_set(Domain.interval(), [0.0], [1.0])
    p = net("sin", 0.1, np.pi / 2, np.pi / 2)  # cos(pi x / 2): zero at the boundary, positive at 0
    assert loss_variational(p, s) < 0


@pytest.mark.parametrize("kind", ["strong", "variational", "fit"])
@pytest.mark.parametrize("act", ["sin", "relu"])
def test_loss_matches_loop_reference(kind, act):
    if kind == "strong" and act == "relu":
        pytest.skip("strong loss needs a smooth activation")
    rng = np.random.default_rng(11)
    for trial in range(10):
        m, n = int(rng.integers(1, 9)), int(rng.integers(1, 7))
        p = init_network(m, 1, act, trial)
        xs = np.sort(rng.uniform(-0.95, 0.95, n))
        if np.min(np.diff(xs), initial=1) < 1e-6:
            continue
        s = make_sample_set(Domain.interval(), xs, rng.normal(size=n), weights=rng.uniform(0.1, 1, n))
        cfg = TrainConfig(loss=kind, beta=float(rng.uniform(0, 10)))
        ref = loss_loop(act, kind, p.c, p.w[:, 0], p.b, xs, s.values, s.weights, cfg.beta, [-1.0, 1.0])
        assert loss_value(p, s, cfg) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_relu_strong_rejected():
    with pytest.raises(ValueError, match="variational"):
        loss_strong(init_network(3, 1, "relu", 0), example1_samples())


def _grad_case(kind, act, d, seed):
    rng = np.random.default_rng(seed)
    p = init_network(int(rng.integers(1, 12)), d, act, seed)
    n = int(rng.integers(1, 8))
    dom = Domain.interval() if d == 1 else Domain.box()
    pts = dom.lower + dom.lengths * rng.uniform(0.02, 0.98, (n, d))
    s = make_sample_set(dom, pts, rng.normal(size=n))
    cfg = TrainConfig(loss=kind, beta=float(rng.uniform(0, 10)))
    return p, s, cfg


@pytest.mark.parametrize(
    "kind,act", [("strong", "sin"), ("variational", "sin"), ("variational", "relu"), ("fit", "sin"), ("fit", "relu")]
)
@pytest.mark.parametrize("d", [1, 2])
def test_gradients_match_finite_differences(kind, act, d):
    for seed in range(8):
        p, s, cfg = _grad_case(kind, act, d, seed)
        g = loss_gradients(p, s, cfg).to_vector()
        fd = central_difference(lambda v: loss_value(p.with_vector(v), s, cfg), p.to_vector())
        err = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-5


def test_zero_network_variational_c_gradient():
    s = example1_samples()
    p = init_network(8, 1, "sin", 4)
    p.c[:] = 0.0
    g = loss_gradients(p, s, TrainConfig(loss="variational"))
    expected = -(s.values / s.n) @ np.sin(s.points @ p.w.T + p.b)
    np.testing.assert_allclose(g.c, expected, atol=1e-14)


def test_boundary_term_gradient_vanishes_when_boundary_values_vanish():
    s = example1_samples()
    p = NetworkParams(Activation.SIN, np.array([[np.pi], [2 * np.pi]]), np.zeros(2), np.array([0.3, -0.2]))
    g0 = loss_gradients(p, s, TrainConfig(beta=0.0)).to_vector()
    g1 = loss_gradients(p, s, TrainConfig(beta=10.0)).to_vector()
    np.testing.assert_allclose(g1, g0, atol=1e-13)


def test_train_stops_at_init_when_target_met():
    s = make_sample_set(Domain.interval(), [0.1], [0.0])
    p0 = init_network(4, 1, "sin", 0, scale=0.0)
    p, tr = train(p0, s, TrainConfig())
    assert len(tr.losses) == 1 and tr.converged and tr.snapshot_iters == [0]


def test_zero_learning_rate_keeps_params():
    p0 = init_network(10, 1, "sin", 2)
    p, tr = train(p0, example1_samples(), TrainConfig(lr=0.0, max_iter=50))
    np.testing.assert_array_equal(p.to_vector(), p0.to_vector())
    assert tr.iterations == 50


def test_trace_snapshots():
    grid = np.linspace(-1, 1, 11)
    p, tr = train(init_network(10, 1, "sin", 2), example1_samples(), TrainConfig(max_iter=250, snapshot_stride=100),
                  eval_grid=grid)
    assert tr.snapshot_iters == [0, 100, 200, 250]
    assert len(tr.snapshots) == 4 and tr.grid_array().shape == (4, 11)
    assert all(np.isfinite(tr.losses))
    np.testing.assert_allclose(tr.grid_values[-1], forward(p, grid))


def test_divergence_reported():
    with pytest.raises(TrainingDivergedError) as info:
        train(init_network(50, 1, "sin", 0), example1_samples(), TrainConfig(lr=10.0, max_iter=10_000))
    assert info.value.iteration > 0


def test_monotone_descent_small_step():
    p, tr = train(init_network(500, 1, "sin", 0), example1_samples(), TrainConfig(lr=1e-5, max_iter=1000))
    assert np.all(np.diff(tr.losses) <= 0)


def test_variational_stops_on_stationarity():
    s = make_sample_set(Domain.interval(), [0.0], [0.0])
    p, tr = train(init_network(3, 1, "relu", 0, scale=0.0), s, TrainConfig(loss="variational"))
    assert tr.converged and tr.iterations == 0


def test_example1_width50_reaches_target():
    s = example1_samples()
    p, tr = train(init_network(50, 1, "sin", 1), s, TrainConfig(max_iter=100_000))
    assert tr.converged and tr.losses[-1] <= 1e-4
    assert abs(forward(p, -1.0)) + abs(forward(p, 1.0)) < 0.05


def test_variational_sign_symmetry():
    s = example1_samples()
    p0 = init_network(30, 1, "sin", 6)
    neg = NetworkParams(p0.activation, p0.w, p0.b, -p0.c)
    cfg = TrainConfig(loss="variational", lr=1e-3, max_iter=300, snapshot_stride=50)
    grid = np.linspace(-1, 1, 21)
    _, tr = train(p0, s, cfg, eval_grid=grid)
    _, trn = train(neg, s.scaled(-1.0), cfg, eval_grid=grid)
    np.testing.assert_array_equal(trn.grid_array(), -tr.grid_array())
    np.testing.assert_array_equal(trn.losses, tr.losses)


def test_2d_strong_training_runs():
    s = example3_samples()
    p, tr = train(init_network(20, 2, "sin", 0), s, TrainConfig(max_iter=20, lr=1e-5))
    assert tr.iterations == 20 and tr.losses[-1] < tr.losses[0]


def test_loss_fit_value():
    s = example1_samples()
    z = init_network(4, 1, "sin", 0, scale=0.0)
    assert loss_fit(z, s) == pytest.approx(0.5 * np.mean(s.values**2), rel=1e-15)
    assert TrainConfig(loss=LossKind.FIT).loss is LossKind.FIT
