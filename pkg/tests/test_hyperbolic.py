import numpy as np
import pytest

from renops import hyperbolic as hyp
from renops.autodiff import Tensor, finite_difference_check, ops


def random_ball_points(rng, n, d, c=1.0, rmax=0.7):
    x = rng.normal(size=(n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    r = rng.uniform(0.05, rmax, size=(n, 1)) / np.sqrt(c)
    return x * r


@pytest.mark.parametrize("c", [1.0, 0.5, 2.0])
def test_exp0_log0_roundtrip(c):
    rng = np.random.default_rng(0)
    v = rng.normal(size=(10, 4)) * 0.5
    x = hyp.expmap0(Tensor(v), c)
    back = hyp.logmap0(x, c)
    assert np.allclose(back.data, v, atol=1e-10)
    again = hyp.expmap0(back, c)
    assert np.allclose(again.data, x.data, atol=1e-12)


def test_dist0_is_metric_length_of_tangent():
    # d(o, exp_o(v)) equals the metric norm lambda_o ||v|| = 2 ||v|| at c=1
    rng = np.random.default_rng(1)
    v = rng.normal(size=(6, 3)) * 0.4
    x = hyp.expmap0(Tensor(v), 1.0)
    d = hyp.dist0(x, 1.0).data[:, 0]
    assert np.allclose(d, 2.0 * np.linalg.norm(v, axis=1), atol=1e-10)


@pytest.mark.parametrize("c", [1.0, 0.7])
def test_mobius_add_identities(c):
    rng = np.random.default_rng(2)
    x = Tensor(random_ball_points(rng, 8, 3, c))
    zero = Tensor(np.zeros((8, 3)))
    assert np.allclose(hyp.mobius_add(zero, x, c).data, x.data, atol=1e-12)
    assert np.allclose(hyp.mobius_add(x, zero, c).data, x.data, atol=1e-12)
    assert np.allclose(hyp.mobius_add(-x, x, c).data, 0.0, atol=1e-12)


@pytest.mark.parametrize("c", [1.0, 0.5])
def test_general_exp_log_roundtrip(c):
    rng = np.random.default_rng(3)
    x = Tensor(random_ball_points(rng, 10, 4, c))
    y = Tensor(random_ball_points(rng, 10, 4, c))
    v = hyp.logmap(x, y, c)
    y2 = hyp.expmap(x, v, c)
    assert np.allclose(y2.data, y.data, atol=1e-8)


def test_dist_against_cosh_oracle():
    # independent closed form: cosh(sqrt(c) d) = 1 + 2c|x-y|^2 /((1-c|x|^2)(1-c|y|^2))
    rng = np.random.default_rng(4)
    for c in (1.0, 0.5, 2.0):
        x = random_ball_points(rng, 7, 3, c)
        y = random_ball_points(rng, 7, 3, c)
        d = hyp.dist(Tensor(x), Tensor(y), c).data[:, 0]
        num = 2 * c * np.sum((x - y) ** 2, axis=1)
        den = (1 - c * np.sum(x ** 2, axis=1)) * (1 - c * np.sum(y ** 2, axis=1))
        oracle = np.arccosh(1 + num / den) / np.sqrt(c)
        assert np.allclose(d, oracle, atol=1e-9)


def test_dist_symmetry_and_identity():
    rng = np.random.default_rng(5)
    x = Tensor(random_ball_points(rng, 5, 3))
    y = Tensor(random_ball_points(rng, 5, 3))
    assert np.allclose(hyp.dist(x, y).data, hyp.dist(y, x).data, atol=1e-10)
    assert np.allclose(hyp.dist(x, x).data, 0.0, atol=1e-7)


def test_transport_bias_equals_gyro_translation():
    # exp_x(PT_{o->x}(b)) == x (+) exp_o(b): the two bias routes coincide
    rng = np.random.default_rng(6)
    for c in (1.0, 0.5):
        x = Tensor(random_ball_points(rng, 9, 4, c))
        b = Tensor(rng.normal(size=(9, 4)) * 0.3)
        via_transport = hyp.bias_add(x, b, c)
        via_gyro = hyp.mobius_add(x, hyp.expmap0(b, c), c)
        assert np.allclose(via_transport.data, via_gyro.data, atol=1e-10)


def test_mobius_matvec_identity_matrix():
    rng = np.random.default_rng(7)
    x = Tensor(random_ball_points(rng, 6, 4))
    out = hyp.mobius_matvec(x, Tensor(np.eye(4)))
    assert np.allclose(out.data, x.data, atol=1e-10)


def test_projection_enforces_margin():
    x = Tensor(np.array([[2.0, 0.0], [0.0, 0.99999999], [0.1, 0.1]]))
    p = hyp.project(x, 1.0).data
    norms = np.linalg.norm(p, axis=1)
    assert np.all(norms <= 1.0 - hyp.EPS_BALL + 1e-12)
    assert np.allclose(p[2], [0.1, 0.1], atol=1e-15)  # interior untouched
    # all ball-producing ops respect the margin even for huge tangents
    big = hyp.expmap0(Tensor(np.full((1, 3), 1e3)), 1.0).data
    assert np.linalg.norm(big) <= 1.0 - hyp.EPS_BALL + 1e-12


def test_fermi_dirac_values():
    d = Tensor(np.array([[2.0], [102.0]]))
    p = hyp.fermi_dirac(d, 2.0, 1.0).data
    assert abs(p[0, 0] - 0.5) < 1e-12
    assert p[1, 0] < 1e-12
    # monotone decreasing in distance
    ds = Tensor(np.linspace(0, 5, 20).reshape(-1, 1))
    ps = hyp.fermi_dirac(ds, 2.0, 0.7).data[:, 0]
    assert np.all(np.diff(ps) < 0)


def test_gradients_away_from_boundary():
    rng = np.random.default_rng(8)
    x0 = random_ball_points(rng, 4, 3, rmax=0.6)
    y0 = random_ball_points(rng, 4, 3, rmax=0.6)
    v0 = rng.normal(size=(4, 3)) * 0.3

    def build_dist(x, y):
        return ops.reduce_sum(hyp.dist(x, y) ** 2)

    def build_chain(v):
        return ops.reduce_sum(hyp.logmap0(hyp.expmap0(v)) ** 2)

    def build_bias(x, b):
        return ops.reduce_sum(hyp.bias_add(x, b).sin())

    for build, arrays in [(build_dist, [x0, y0]), (build_chain, [v0]),
                          (build_bias, [x0, v0])]:
        params = [Tensor(a, requires_grad=True) for a in arrays]
        err = finite_difference_check(lambda: build(*params), params, step=1e-7)
        assert err < 1e-6, build.__name__
