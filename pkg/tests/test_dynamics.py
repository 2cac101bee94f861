import numpy as np
import pytest

from renops import datasets, dynamics
from renops.dynamics import (BurgersConfig, DynamicsError, KuramotoConfig,
                             add_noise, burgers_realization,
                             couple_nonlinear_diffusion, integrate_rk45,
                             kuramoto_rhs, normalize_minmax,
                             reconstruct_from_derivative,
                             row_normalized_weights, simulate_burgers,
                             simulate_kuramoto)
from renops.graphs import Graph, generate_powerlaw_cluster

TWO = Graph.from_edges(2, [(0, 1)])


def two_node_weights():
    return row_normalized_weights(TWO)


def test_rhs_identical_phases_returns_omega():
    w = two_node_weights()
    omega = np.array([0.3, -0.8])
    phi = np.array([1.234, 1.234])
    assert np.allclose(kuramoto_rhs(phi, omega, 1.7, w), omega, atol=1e-15)


def test_rhs_hand_value():
    w = two_node_weights()
    out = kuramoto_rhs(np.array([0.0, np.pi / 2]), np.zeros(2), 1.0, w)
    assert np.allclose(out, [1.0, -1.0], atol=1e-12)


def test_rhs_global_phase_shift_invariant():
    g = generate_powerlaw_cluster(50, 2, 0.5, seed=0)
    w = row_normalized_weights(g)
    rng = np.random.default_rng(1)
    phi = rng.uniform(-np.pi, np.pi, 50)
    omega = rng.normal(size=50)
    a = kuramoto_rhs(phi, omega, 1.7, w)
    b = kuramoto_rhs(phi + 2.34, omega, 1.7, w)
    assert np.allclose(a, b, atol=1e-12)


def test_rhs_rejects_nan():
    with pytest.raises(DynamicsError, match="non-finite"):
        kuramoto_rhs(np.array([np.nan, 0.0]), np.zeros(2), 1.0,
                     two_node_weights())


def test_row_normalized_weights_zero_degree():
    g = Graph.from_edges(3, [(0, 1)])  # node 2 isolated
    w = row_normalized_weights(g).toarray()
    assert np.allclose(w[2], 0.0)
    assert np.allclose(w[0], [0, 1, 0])


def test_integrator_exact_for_linear_growth():
    # K = 0: phi(t) = phi0 + omega t
    omega = np.array([1.0, -2.5, 4.0])
    phi0 = np.array([0.1, 0.2, 0.3])
    times, y = integrate_rk45(lambda t, p: omega, phi0, 1.0, 1e-8, 1e-8, 5e-3)
    exact = phi0[:, None] + omega[:, None] * times[None, :]
    assert np.max(np.abs(y - exact)) < 1e-6


def test_integrator_harmonic_energy_drift():
    # x'' = -x as a first-order system; 10 periods
    def rhs(t, y):
        return np.array([y[1], -y[0]])

    t_end = 10 * 2 * np.pi
    _, y = integrate_rk45(rhs, np.array([1.0, 0.0]), t_end, 1e-8, 1e-8, 1e-2)
    energy = y[0] ** 2 + y[1] ** 2
    assert np.max(np.abs(energy - energy[0])) < 1e-5


def test_two_oscillator_locking_fixed_point():
    # d(delta)/dt = d_omega - 2 K sin(delta); fixed point arcsin(d_omega/2K)
    omega = np.array([0.25, -0.25])
    w = two_node_weights()
    _, y = integrate_rk45(
        lambda t, p: kuramoto_rhs(p, omega, 1.0, w),
        np.zeros(2), 30.0, 1e-10, 1e-10, 1e-2)
    delta = y[0, -1] - y[1, -1]
    assert abs(delta - np.arcsin(0.25)) < 1e-3


def test_frequency_frame_shift_equivariance():
    g = generate_powerlaw_cluster(40, 2, 0.7, seed=2)
    w = row_normalized_weights(g)
    rng = np.random.default_rng(3)
    omega = rng.normal(size=40)
    phi0 = rng.uniform(-np.pi, np.pi, 40)
    shift = 1.3
    t, base = integrate_rk45(
        lambda tt, p: kuramoto_rhs(p, omega, 1.7, w),
        phi0, 2.0, 1e-10, 1e-10, 1e-2)
    _, shifted = integrate_rk45(
        lambda tt, p: kuramoto_rhs(p, omega + shift, 1.7, w),
        phi0, 2.0, 1e-10, 1e-10, 1e-2)
    assert np.max(np.abs(shifted - (base + shift * t[None, :]))) < 1e-6


def test_integrator_failure_reports_time():
    # finite-time blowup y' = y^2, y(0)=1 diverges at t=1
    with pytest.raises(DynamicsError, match="t="):
        integrate_rk45(lambda t, y: y ** 2, np.array([1.0]), 2.0,
                       1e-8, 1e-8, 1e-2)


def test_burgers_front_limits_and_midpoint():
    cfg = BurgersConfig()
    times = np.array([-1e3, 2.0, 1e3])
    u = burgers_realization([1.2], [2.0], lambda t: np.full_like(
        np.asarray(t, dtype=float), 1.0), lambda t: np.full_like(
        np.asarray(t, dtype=float), 0.05), times)
    assert abs(u[0, 0]) < 1e-12          # t -> -inf gives 0
    assert abs(u[0, 2] - 1.2) < 1e-12    # t -> +inf gives a_i
    assert abs(u[0, 1] - 0.6) < 1e-12    # midpoint a_i/2
    del cfg


def test_burgers_slope_matches_analytic_front():
    # constant F, nu: slope at the midpoint is a^2 F / (8 nu)
    a, f, nu = 0.9, 1.3, 0.07
    h = 1e-6
    times = np.array([2.0 - h, 2.0 + h])
    u = burgers_realization([a], [2.0],
                            lambda t: np.full_like(np.asarray(t, float), f),
                            lambda t: np.full_like(np.asarray(t, float), nu),
                            times)
    slope = (u[0, 1] - u[0, 0]) / (2 * h)
    assert abs(slope - a * a * f / (8 * nu)) < 1e-6


def test_burgers_monotone_under_mild_schedules():
    g = generate_powerlaw_cluster(100, 2, 1.0, seed=4)
    cfg = BurgersConfig(seed=5)
    times = np.arange(0, cfg.t_end, cfg.dt_sample)
    rng = np.random.default_rng(cfg.seed)
    a = rng.uniform(*cfg.a_range, size=g.n)
    tau = rng.uniform(cfg.tau_range[0] * cfg.t_end,
                      cfg.tau_range[1] * cfg.t_end, size=g.n)
    u = burgers_realization(a, tau, cfg.forcing, cfg.viscosity, times)
    assert np.all(np.diff(u, axis=1) >= -1e-12)


def test_burgers_rejects_nonpositive_viscosity():
    with pytest.raises(DynamicsError, match="viscosity"):
        burgers_realization([1.0], [0.0],
                            lambda t: np.ones_like(np.asarray(t, float)),
                            lambda t: np.zeros_like(np.asarray(t, float)),
                            np.array([0.0, 1.0]))


def test_coupling_beta_one_identity():
    g = generate_powerlaw_cluster(60, 2, 0.8, seed=6)
    rng = np.random.default_rng(7)
    dudt = rng.normal(size=(60, 40))
    out, frac = couple_nonlinear_diffusion(dudt, g, 1.0, 6)
    assert np.array_equal(out, dudt)
    assert frac == 0.0


def test_coupling_hand_rms():
    # node 0 with neighbors {1, 2} carrying derivatives {3, 4}: one beta=0
    # update gives sqrt(25/2)
    g = Graph.from_edges(3, [(0, 1), (0, 2)])
    dudt = np.array([[0.0], [3.0], [4.0]])
    out, _ = couple_nonlinear_diffusion(dudt, g, 0.0, 1)
    assert abs(out[0, 0] - np.sqrt(12.5)) < 1e-12


def test_coupling_single_update_is_convex_blend():
    g = Graph.from_edges(3, [(0, 1), (0, 2)])
    dudt = np.array([[2.0], [3.0], [4.0]])
    rms = np.sqrt(12.5)
    for beta in (0.0, 0.25, 0.5, 0.75, 1.0):
        out, _ = couple_nonlinear_diffusion(dudt, g, beta, 1)
        expect = beta * 2.0 + (1 - beta) * rms
        assert abs(out[0, 0] - expect) < 1e-12
        lo, hi = min(2.0, rms), max(2.0, rms)
        assert lo - 1e-12 <= out[0, 0] <= hi + 1e-12


def test_coupling_zero_degree_passthrough():
    g = Graph.from_edges(3, [(0, 1)])  # node 2 isolated
    dudt = np.array([[1.0], [2.0], [5.0]])
    out, _ = couple_nonlinear_diffusion(dudt, g, 0.3, 4)
    assert out[2, 0] == 5.0


def test_nonlinear_fraction_desk_fixture():
    g = generate_powerlaw_cluster(2000, 2, 1.0, seed=1)
    _, _, frac = simulate_burgers(g, BurgersConfig(seed=1))
    assert 0.75 <= frac <= 0.85


def test_reconstruct_inverts_diff():
    rng = np.random.default_rng(8)
    u = rng.normal(size=(5, 30)).cumsum(axis=1)
    dt = 0.25
    dudt = np.diff(u, axis=1) / dt
    back = reconstruct_from_derivative(u[:, 0], dudt, dt)
    assert np.allclose(back, u, atol=1e-10)


def test_add_noise_zero_is_identity_and_std_calibrated():
    rng = np.random.default_rng(9)
    u = rng.uniform(0.3, 0.7, size=(1000, 1000))
    assert np.array_equal(add_noise(u, 0.0, 1), u)
    noisy = add_noise(u, 0.02, seed=2)
    eta = noisy - u
    target = 0.02 * np.std(u)
    assert 0.95 * target <= np.std(eta) <= 1.05 * target
    assert noisy.min() >= 0.0 and noisy.max() <= 1.0


def test_normalize_minmax():
    u = np.array([[2.0, 4.0], [6.0, 10.0]])
    u01, lo, hi = normalize_minmax(u)
    assert (lo, hi) == (2.0, 10.0)
    assert np.allclose(u01, [[0.0, 0.25], [0.5, 1.0]])
    with pytest.raises(DynamicsError):
        normalize_minmax(np.ones((2, 2)))


def test_kuramoto_dataset_build_and_roundtrip(tmp_path):
    g = generate_powerlaw_cluster(120, 2, 0.9, seed=3)
    cfg = KuramotoConfig(t_end=0.5, seed=4)
    ds = datasets.build_kuramoto_dataset(g, cfg, n_pe=8, noise=0.02)
    assert ds.u.shape == (120, 101)
    assert ds.u.min() >= 0.0 and ds.u.max() <= 1.0
    assert ds.u_clean.min() >= 0.0 and ds.u_clean.max() <= 1.0
    assert ds.pe.shape == (120, 8)
    p = tmp_path / "km.bin"
    datasets.save_dataset(p, ds)
    ds2 = datasets.load_dataset(p)
    assert np.array_equal(ds.u, ds2.u)
    assert np.array_equal(ds.u_clean, ds2.u_clean)
    assert np.array_equal(ds.pe, ds2.pe)
    assert np.array_equal(ds.times, ds2.times)
    assert np.array_equal(ds.graph.indices, ds2.graph.indices)
    assert ds2.meta["kind"] == "kuramoto"


def test_dataset_header_stats_match_recomputation(tmp_path):
    from renops.graphs import average_clustering
    g = generate_powerlaw_cluster(150, 3, 0.8, seed=5)
    ds = datasets.build_burgers_dataset(g, BurgersConfig(t_end=0.5, seed=6),
                                        n_pe=4, noise=0.0)
    p = tmp_path / "bd.bin"
    datasets.save_dataset(p, ds)
    ds2 = datasets.load_dataset(p)
    assert ds2.meta["graph"]["avg_clustering"] == pytest.approx(
        average_clustering(ds2.graph), abs=1e-12)
    assert np.array_equal(ds2.u, ds2.u_clean)  # noise 0
    assert "nonlinear_fraction" in ds2.meta


def test_simulate_kuramoto_deterministic():
    g = generate_powerlaw_cluster(80, 2, 0.9, seed=7)
    cfg = KuramotoConfig(t_end=0.2, seed=11)
    t1, p1, o1 = simulate_kuramoto(g, cfg)
    t2, p2, o2 = simulate_kuramoto(g, cfg)
    assert np.array_equal(p1, p2)
    assert np.array_equal(o1, o2)
