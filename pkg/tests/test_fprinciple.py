import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import periodic_cubic_spline, periodic_linear_interpolant
from rgbias.dnn_solver import TrainingTrace, init_network
from rgbias.fprinciple import (
    FlowInstabilityError,
    GammaKernel,
    PeriodicGrid,
    band_convergence,
    band_errors,
    dyadic_edges,
    fp_norm,
    fp_norm_minimize,
    gamma,
    gamma_on_grid,
    nudft,
    simulate_gradient_flow,
)
from rgbias.io import read_table_csv
from rgbias.sampling import Domain, example1_samples, make_sample_set, random_sample_points


def test_nudft_examples():
    x = np.array([-0.3, 0.1, 0.7])
    assert nudft(x, np.ones(3), [0.0]).amplitudes[0] == pytest.approx(1.0)
    sp = nudft([0.0], [2.5], [-3.0, 0.0, 1.7])
    np.testing.assert_allclose(sp.amplitudes, 2.5, atol=1e-15)
    assert abs(nudft([-0.25, 0.25], [1.0, 1.0], [1.0]).amplitudes[0]) < 1e-15


@given(seed=st.integers(0, 10_000), n=st.integers(1, 20))
@settings(max_examples=30, deadline=None)
def test_nudft_conjugate_symmetry(seed, n):
    rng = np.random.default_rng(seed)
    x, v = rng.uniform(-1, 1, n), rng.normal(size=n)
    xi = rng.uniform(0, 20, 15)
    F = nudft(x, v, np.concatenate([xi, -xi])).amplitudes
    np.testing.assert_allclose(F[15:], np.conj(F[:15]), atol=1e-12)


def test_nudft_2d():
    pts = np.array([[0.1, 0.2], [0.5, -0.3]])
    sp = nudft(pts, [1.0, 2.0], np.array([[1.0, 0.0], [0.5, 2.0]]))
    expected = [np.mean([1 * np.exp(-2j * np.pi * (p @ k)) * 1 for p in pts] * np.array([1, 2])) for k in
                np.array([[1.0, 0.0], [0.5, 2.0]])]
    np.testing.assert_allclose(sp.amplitudes, expected, atol=1e-15)


def test_spectrum_csv(tmp_path):
    nudft([0.1, 0.4], [1.0, -1.0], [0.0, 1.0, 2.0]).to_csv(tmp_path / "s.csv")
    _, cols, data = read_table_csv(tmp_path / "s.csv")
    assert cols == ["xi", "re", "im", "power"] and data.shape == (3, 4)


def test_gamma_examples():
    assert gamma(GammaKernel(1.0, 0.0, 1), 2.0) == pytest.approx(0.0625)
    assert gamma(GammaKernel(0.0, 4 * np.pi**2, 1), 1.0) == pytest.approx(4 * np.pi**2)
    assert GammaKernel(1.0, 1.0, 2).exponents == (5, 3)
    with pytest.raises(ValueError):
        gamma(GammaKernel(1.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        GammaKernel(0.0, 0.0)
    with pytest.raises(ValueError):
        GammaKernel(-1.0, 1.0)


@given(
    A=st.floats(0, 10), B=st.floats(0, 10), d=st.integers(1, 2),
    x1=st.floats(1e-3, 100), ratio=st.floats(1.001, 100),
)
@settings(max_examples=100, deadline=None)
def test_gamma_monotone(A, B, d, x1, ratio):
    if A + B < 1e-6:
        return
    k = GammaKernel(A, B, d)
    assert gamma(k, x1 * ratio) < gamma(k, x1)


def test_gamma_from_network():
    p = init_network(40, 2, "sin", 1)
    k = GammaKernel.from_network(p)
    wsq = np.sum(p.w**2, axis=1)
    assert k.A == pytest.approx(np.mean(wsq + p.c**2))
    assert k.B == pytest.approx(4 * np.pi**2 * np.mean(wsq * p.c**2))
    assert k.d == 2


def test_dyadic_edges():
    np.testing.assert_array_equal(dyadic_edges(0.5), [0, 0.5, 1, 2, 4, 8])


def _trace(grid, snaps):
    return TrainingTrace(snapshot_iters=list(range(len(snaps))), grid=grid, grid_values=list(snaps))


def test_band_convergence_exact_target():
    x = np.linspace(-1, 1, 200)
    target = np.sin(np.pi * x) + np.sin(6 * np.pi * x)
    rep = band_convergence(_trace(x, [target]), target)
    assert np.all(np.nan_to_num(rep.errors) == 0)


def test_band_convergence_flags_empty_band():
    x = np.linspace(-1, 1, 400)
    rep = band_convergence(_trace(x, [np.sin(np.pi * x)]), 0 * x)
    assert rep.flagged == [0, 1, 2, 3, 4] and rep.first_passage == [None] * 5
    norms = np.array([0.1, 0.7, 1.5, 3.0])
    target = np.array([1.0, 2.0, 0.0, 1.0])
    err = np.array([[1.0, 2.0, 0.3, 1.0], [0.1, 0.2, 0.3, 0.1]])
    rep = band_errors(norms, err, target, [0, 0.5, 1, 2, 4], [0, 10])
    assert rep.flagged == [2] and rep.active == [0, 1, 3]
    assert rep.first_passage == [10, 10, None, 10] and rep.is_ordered()


def test_band_convergence_low_first():
    # synthetic trace: the low mode is learned first, then the high mode
    x = np.linspace(-1, 1, 500)
    low, high = np.sin(np.pi * x), 0.5 * np.sin(10 * np.pi * x)
    t = np.linspace(0, 1, 21)
    snaps = [min(1, 3 * s) * low + s**2 * high for s in t]
    rep = band_convergence(_trace(x, snaps), low + high, edges=[0, 1, 8])
    assert rep.is_ordered()
    assert rep.first_passage[0] < rep.first_passage[1]
    assert np.all(rep.errors >= 0)


def test_band_report_json():
    x = np.linspace(-1, 1, 100)
    rep = band_convergence(_trace(x, [0 * x, np.sin(np.pi * x)]), np.sin(np.pi * x))
    d = rep.to_dict()
    assert len(d["first_passage"]) == 5 and d["threshold"] == 0.5


def test_periodic_grid():
    g = PeriodicGrid(-1.0, 1.0, 64)
    assert g.period == pytest.approx(2.5)
    assert g.points[0] == pytest.approx(-1.25)
    assert g.freqs.size == 63 and 0.0 in g.freqs
    vals = np.cos(2 * np.pi * 3 * g.points / g.period)
    np.testing.assert_allclose(g.synthesize(g.analyze(vals), g.points), vals, atol=1e-12)
    with pytest.raises(ValueError):
        PeriodicGrid(-1, 1, 100)
    with pytest.raises(ValueError):
        PeriodicGrid(-1, 1, 32)


def test_gamma_on_grid_zero_mode():
    g = PeriodicGrid(-1, 1, 64)
    k = GammaKernel(1.0, 0.0)
    vals = gamma_on_grid(g, k)
    assert vals[g.freqs == 0][0] == pytest.approx(gamma(k, g.xi_min))
    explicit = np.ones(g.freqs.size)
    np.testing.assert_array_equal(gamma_on_grid(g, explicit), explicit)
    with pytest.raises(ValueError):
        gamma_on_grid(g, np.ones(3))


def test_minimizer_zero_data():
    s = make_sample_set(Domain.interval(), [0.2], [0.0])
    res = fp_norm_minimize(s, GammaKernel(1.0, 0.0), 256)
    assert np.max(np.abs(res.h.values)) == 0.0


def ten_points(seed=3):
    dom = Domain.interval()
    x = np.sort(random_sample_points(10, dom, seed)[:, 0])
    return make_sample_set(dom, x, np.sin(np.pi * x) + 0.3 * x)


@pytest.mark.parametrize("kernel", [GammaKernel(1.0, 0.0), GammaKernel(0.0, 1.0), GammaKernel(1.0, 0.07)])
def test_minimizer_interpolates(kernel):
    s = ten_points()
    res = fp_norm_minimize(s, kernel)
    assert np.max(np.abs(res.h(s.points[:, 0]) - s.values)) <= 1e-8 * np.max(np.abs(s.values))
    assert np.allclose(res.h.values.imag if np.iscomplexobj(res.h.values) else 0, 0)


def test_minimizer_is_optimal_among_interpolants():
    s = example1_samples()
    res = fp_norm_minimize(s, GammaKernel.from_network(init_network(500, 1, "sin", 0)), 256)
    g = res.gamma_values
    grid = res.h.grid
    # feasible directions: real grid functions vanishing at the samples
    rng = np.random.default_rng(0)
    for _ in range(100):
        coef = rng.normal(size=grid.freqs.size) + 1j * rng.normal(size=grid.freqs.size)
        delta = grid.analyze(grid.synthesize(coef, grid.points))  # make it a real grid function
        vals_at = grid.synthesize(delta, s.points[:, 0])
        # project out the sample values with the kernel interpolant of the residual
        corr = fp_norm_minimize(make_sample_set(s.domain, s.points, vals_at), g, 256).h.coefficients
        pert = (delta - corr) * rng.uniform(1e-3, 1.0)
        assert np.max(np.abs(grid.synthesize(pert, s.points[:, 0]))) < 1e-8
        assert fp_norm(g, res.h.coefficients + pert) >= res.objective - 1e-10


def test_minimizer_p2_is_piecewise_linear():
    s = ten_points()
    res = fp_norm_minimize(s, GammaKernel(0.0, 1.0, p=4, q=2))
    x = res.h.grid.points
    ref = periodic_linear_interpolant(s.points[:, 0], s.values, res.h.grid.period, x)
    assert np.max(np.abs(res.h.values - ref)) / np.max(np.abs(ref)) <= 0.05


def test_minimizer_p4_is_cubic_spline():
    s = ten_points()
    res = fp_norm_minimize(s, GammaKernel(1.0, 0.0, p=4, q=2))
    x = res.h.grid.points
    ref = periodic_cubic_spline(s.points[:, 0], s.values, res.h.grid.period, x)
    assert np.max(np.abs(res.h.values - ref)) / np.max(np.abs(ref)) <= 0.05


def test_flow_fixed_point():
    s = ten_points()
    k = GammaKernel(1.0, 0.0)
    res = fp_norm_minimize(s, k)
    tr = simulate_gradient_flow(k, s, res.h.grid, steps=10, initial=res.h.coefficients)
    np.testing.assert_allclose(tr.final.coefficients, res.h.coefficients, atol=1e-12)
    assert np.all(tr.residual_ss < 1e-20)


def test_flow_monotone_and_consistent():
    s = example1_samples()
    k = GammaKernel.from_network(init_network(500, 1, "sin", 0))
    tr = simulate_gradient_flow(k, s, steps=100_000, tol=1e-12)
    assert np.all(np.diff(tr.residual_ss) <= 0)
    ref = fp_norm_minimize(s, k)
    assert np.max(np.abs(tr.final.values - ref.h.values)) <= 1e-3


def test_flow_low_band_first():
    x = np.linspace(-1, 1, 42)[1:-1]
    s = make_sample_set(Domain.interval(), x, np.sin(np.pi * x) + 0.5 * np.sin(8 * np.pi * x))
    k = GammaKernel.from_network(init_network(500, 1, "sin", 0))
    tr = simulate_gradient_flow(k, s, steps=5000)
    first = []
    for lo, hi in [(0, 1), (2, 8)]:
        fr = np.arange(lo, hi, 0.05)
        R = np.array([np.linalg.norm(nudft(s.points, r, fr).amplitudes) for r in tr.residuals])
        first.append(int(np.argmax(R / R[0] < 0.5)))
    assert 0 < first[0] < first[1]


def test_flow_stability_checks():
    s = example1_samples()
    k = GammaKernel(1.0, 0.0)
    gmax = gamma_on_grid(PeriodicGrid(-1, 1), k).max()
    with pytest.raises(ValueError, match="unstable"):
        simulate_gradient_flow(k, s, dt=2.0 / gmax)
    with pytest.raises(FlowInstabilityError) as info:
        simulate_gradient_flow(k, s, dt=1.95 / gmax, steps=5000)
    assert info.value.history.size > 1


def test_flow_csv(tmp_path):
    tr = simulate_gradient_flow(GammaKernel(1.0, 0.0), example1_samples(), steps=20)
    tr.to_csv(tmp_path / "f.csv")
    _, cols, data = read_table_csv(tmp_path / "f.csv")
    assert cols == ["step", "time", "residual_ss"] and data.shape == (21, 3)
