import numpy as np
import pytest

from renops.autodiff import (AutodiffError, Dual, Tensor, backward,
                             coordinate_derivatives, directional_derivatives,
                             finite_difference_check, ops, reset_tape)


def scalar_fn(v):
    # f(v) = sin(v0) exp(v1) + v0^3, as a reduction so v stays a vector
    s = ops.sin(v[0:1]) * ops.exp(v[1:2]) + v[0:1] ** 3
    return ops.reduce_sum(s)


def test_first_derivatives_analytic():
    v0 = np.array([0.7, -0.3])
    bundles = coordinate_derivatives(scalar_fn, Tensor(v0), order=1)
    d0 = np.cos(v0[0]) * np.exp(v0[1]) + 3 * v0[0] ** 2
    d1 = np.sin(v0[0]) * np.exp(v0[1])
    assert abs(bundles[0].tangents[0].item() - d0) < 1e-12
    assert abs(bundles[1].tangents[0].item() - d1) < 1e-12


def test_second_and_third_derivatives_analytic():
    v0 = np.array([0.7, -0.3])
    bundles = coordinate_derivatives(scalar_fn, Tensor(v0), order=3)
    e = np.exp(v0[1])
    d2_0 = -np.sin(v0[0]) * e + 6 * v0[0]
    d3_0 = -np.cos(v0[0]) * e + 6.0
    d2_1 = np.sin(v0[0]) * e
    assert abs(bundles[0].tangents[1].item() - d2_0) < 1e-12
    assert abs(bundles[0].tangents[2].item() - d3_0) < 1e-12
    assert abs(bundles[1].tangents[1].item() - d2_1) < 1e-12
    assert abs(bundles[1].tangents[2].item() - d2_1) < 1e-12  # d3 = d2 in exp


def test_hyperdual_extraction_structure():
    x = Tensor(np.array([2.0]))
    e = Tensor(np.array([1.0]))
    r = (lambda t: t * t * t)(Dual(Dual(x, e), e))
    assert abs(r.re.re.item() - 8.0) < 1e-12     # x^3
    assert abs(r.re.eps.item() - 12.0) < 1e-12   # 3x^2
    assert abs(r.eps.re.item() - 12.0) < 1e-12
    assert abs(r.eps.eps.item() - 12.0) < 1e-12  # 6x


def test_cross_derivative_product():
    # f(v) = v0 * v1; nested seeding along e0 then e1 gives d2f/dv0 dv1 = 1
    def f(v):
        return ops.reduce_sum(v[0:1] * v[1:2])

    v0 = Tensor(np.array([0.3, -1.2]))
    e0, e1 = Tensor(np.array([1.0, 0.0])), Tensor(np.array([0.0, 1.0]))
    inner = lambda v: directional_derivatives(f, v, e0, 1)[1]
    outer = directional_derivatives(inner, v0, e1, 1)
    assert abs(outer[0].item() - v0.data[1]) < 1e-12   # df/dv0 = v1
    assert abs(outer[1].item() - 1.0) < 1e-12
    # cross against central finite differences
    h = 1e-5
    fd = (0.3 + h) * (-1.2 + h) - (0.3 + h) * (-1.2 - h) \
        - (0.3 - h) * (-1.2 + h) + (0.3 - h) * (-1.2 - h)
    assert abs(outer[1].item() - fd / (4 * h * h)) < 1e-5


def test_vector_function_second_derivative_vs_fd():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(4, 3))
    b = rng.normal(size=(4,))
    tw, tb = Tensor(W), Tensor(b)

    def f(v):
        col = v.reshape(-1, 1)
        return ops.tanh(ops.matmul(tw, col).reshape(-1) + tb)

    v0 = rng.normal(size=3)
    bundles = coordinate_derivatives(f, Tensor(v0), order=2)
    h = 1e-4
    for k, bundle in enumerate(bundles):
        vp, vm = v0.copy(), v0.copy()
        vp[k] += h
        vm[k] -= h
        fp = np.tanh(W @ vp + b)
        fm = np.tanh(W @ vm + b)
        f0 = np.tanh(W @ v0 + b)
        fd2 = (fp - 2 * f0 + fm) / h ** 2
        assert np.allclose(bundle.tangents[1].data, fd2, atol=1e-6)
        fd1 = (fp - fm) / (2 * h)
        assert np.allclose(bundle.tangents[0].data, fd1, atol=1e-7)


def test_order_zero_bitwise_identical_to_plain_forward():
    rng = np.random.default_rng(1)
    W = Tensor(rng.normal(size=(5, 3)))
    v0 = Tensor(rng.normal(size=3))

    def f(v):
        return ops.tanh(ops.matmul(W, v.reshape(-1, 1))) * 3.0

    plain = f(v0)
    bundles = coordinate_derivatives(f, v0, order=2)
    for b in bundles:
        assert np.array_equal(b.value.data, plain.data)


def test_constant_lifting_mixed_levels():
    w = Tensor(np.array([2.0]))
    x = Dual(Tensor(np.array([3.0])), Tensor(np.array([1.0])))
    r = w * x + 5.0
    assert abs(r.re.item() - 11.0) < 1e-12
    assert abs(r.eps.item() - 2.0) < 1e-12
    r2 = ops.concat([w, x], axis=0)
    assert isinstance(r2, Dual)
    assert np.allclose(r2.re.data, [2.0, 3.0])
    assert np.allclose(r2.eps.data, [0.0, 1.0])


def test_extracted_derivative_is_parameter_differentiable():
    rng = np.random.default_rng(2)
    W = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    v0 = Tensor(rng.normal(size=2))

    def loss():
        def f(v):
            return ops.tanh(ops.matmul(W, v.reshape(-1, 1)))
        bundles = coordinate_derivatives(f, v0, order=2)
        total = None
        for b in bundles:
            part = ops.reduce_sum(b.tangents[0] ** 2) + \
                ops.reduce_sum(b.tangents[1] ** 2)
            total = part if total is None else total + part
        return total

    assert finite_difference_check(loss, [W], step=1e-6) < 1e-6


def test_outer_dual_around_inner_second_order():
    # g(v) = d2/dv0^2 [v0^2 v1] = 2 v1, then d g/d v1 = 2 via an outer level
    def f(v):
        return ops.reduce_sum(v[0:1] * v[0:1] * v[1:2])

    e0 = Tensor(np.array([1.0, 0.0]))
    e1 = Tensor(np.array([0.0, 1.0]))

    def inner(v):
        return directional_derivatives(f, v, e0, 2)[2]

    outer = directional_derivatives(inner, Tensor(np.array([0.5, 0.8])), e1, 1)
    assert abs(outer[0].item() - 1.6) < 1e-12
    assert abs(outer[1].item() - 2.0) < 1e-12


def test_unregistered_dual_op_raises_with_name():
    d = Dual(Tensor(np.ones(3)), Tensor(np.ones(3)))
    with pytest.raises(AutodiffError, match="softmax"):
        ops.softmax(d)
    with pytest.raises(AutodiffError, match="segment_max"):
        ops.segment_max(d, np.array([0, 0, 1]), 2)


def test_order_out_of_range():
    with pytest.raises(AutodiffError, match="order"):
        coordinate_derivatives(lambda v: v, Tensor(np.ones(2)), order=4)


def test_dual_div_and_rdiv():
    x = Dual(Tensor(np.array([2.0])), Tensor(np.array([1.0])))
    r = 1.0 / x
    assert abs(r.re.item() - 0.5) < 1e-12
    assert abs(r.eps.item() + 0.25) < 1e-12
    r2 = x / x
    assert abs(r2.re.item() - 1.0) < 1e-12
    assert abs(r2.eps.item()) < 1e-12


def test_dual_backward_through_value_and_tangent():
    # reverse mode through a forward-mode pass: d/da of [d/dv(a v)] = 1
    a = Tensor(np.array([1.5]), requires_grad=True)
    v = Tensor(np.array([2.0]))
    reset_tape()
    d = directional_derivatives(lambda t: a * t, v, Tensor(np.array([1.0])), 1)
    loss = ops.reduce_sum(d[1])
    backward(loss)
    assert np.allclose(a.grad, [1.0])
