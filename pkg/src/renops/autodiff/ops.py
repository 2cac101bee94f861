"""Generic op API dispatching over Tensor and Dual.

Model code calls these free functions so the same forward definition serves
plain evaluation (Tensors) and coordinate differentiation (Duals at any
nesting depth). Per-op dual rules recurse through `Dual` components, so
nesting is handled for free. Ops without a dual rule raise by name.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .dual import Dual, lift_like, zeros_like_struct
from .tensor import AutodiffError, Tensor


def _not_dual(name):
    raise AutodiffError(f"{name}: not registered for dual-mode differentiation")


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.re), cos(x.re) * x.eps)
    return x.sin()


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.re), -sin(x.re) * x.eps)
    return x.cos()


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.re)
        return Dual(e, e * x.eps)
    return x.exp()


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.re), x.eps / x.re)
    return x.log()


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.re)
        return Dual(s, x.eps / (2.0 * s))
    return x.sqrt()


def tanh(x):
    if isinstance(x, Dual):
        t = tanh(x.re)
        return Dual(t, (1.0 - t * t) * x.eps)
    return x.tanh()


def sigmoid(x):
    if isinstance(x, Dual):
        s = sigmoid(x.re)
        return Dual(s, s * (1.0 - s) * x.eps)
    return x.sigmoid()


def softplus(x):
    if isinstance(x, Dual):
        return Dual(softplus(x.re), sigmoid(x.re) * x.eps)
    return x.softplus()


def absolute(x):
    if isinstance(x, Dual):
        _not_dual("abs")
    return x.abs()


def clamp(x, lo=None, hi=None):
    if isinstance(x, Dual):
        _not_dual("clamp")
    return x.clamp(lo, hi)


def matmul(a, b):
    ad, bd = isinstance(a, Dual), isinstance(b, Dual)
    if ad and bd:
        return Dual(matmul(a.re, b.re),
                    matmul(a.eps, b.re) + matmul(a.re, b.eps))
    if ad:
        return Dual(matmul(a.re, b), matmul(a.eps, b))
    if bd:
        return Dual(matmul(a, b.re), matmul(a, b.eps))
    return T.matmul(a, b)


def concat(xs, axis=0):
    xs = list(xs)
    if any(isinstance(x, Dual) for x in xs):
        template = next(x for x in xs if isinstance(x, Dual))
        lifted = []
        for x in xs:
            if isinstance(x, Dual):
                lifted.append(x)
            else:
                re = lift_like(x, template.re)
                lifted.append(Dual(re, zeros_like_struct(re)))
        return Dual(concat([x.re for x in lifted], axis),
                    concat([x.eps for x in lifted], axis))
    return T.concat(xs, axis)


def stack_last(xs):
    """Stack same-shaped values along a new trailing axis."""
    expanded = [x.reshape(x.shape + (1,)) for x in xs]
    return concat(expanded, axis=-1)


def reduce_sum(x, axis=None, keepdims=False):
    if isinstance(x, Dual):
        return Dual(reduce_sum(x.re, axis, keepdims),
                    reduce_sum(x.eps, axis, keepdims))
    return x.sum(axis=axis, keepdims=keepdims)


def reduce_mean(x, axis=None, keepdims=False):
    if isinstance(x, Dual):
        return Dual(reduce_mean(x.re, axis, keepdims),
                    reduce_mean(x.eps, axis, keepdims))
    return x.mean(axis=axis, keepdims=keepdims)


def reduce_max(x, axis=None, keepdims=False):
    if isinstance(x, Dual):
        _not_dual("max")
    return x.max(axis=axis, keepdims=keepdims)


def reduce_var(x, axis=None, keepdims=False):
    if isinstance(x, Dual):
        _not_dual("var")
    return x.var(axis=axis, keepdims=keepdims)


def softmax(x, axis=-1):
    if isinstance(x, Dual):
        _not_dual("softmax")
    return x.softmax(axis=axis)


def layer_norm(x, axis=-1, eps=1e-5):
    if isinstance(x, Dual):
        _not_dual("layer_norm")
    return x.layer_norm(axis=axis, eps=eps)


def reshape(x, *shape):
    return x.reshape(*shape)


def transpose(x, axes=None):
    return x.transpose(axes)


def broadcast_to(x, shape):
    return x.broadcast_to(shape)


def gather_rows(x, idx):
    if isinstance(x, Dual):
        return Dual(gather_rows(x.re, idx), gather_rows(x.eps, idx))
    return T.gather_rows(x, idx)


def scatter_add_rows(x, idx, num_rows):
    if isinstance(x, Dual):
        return Dual(scatter_add_rows(x.re, idx, num_rows),
                    scatter_add_rows(x.eps, idx, num_rows))
    return T.scatter_add_rows(x, idx, num_rows)


def segment_max(x, idx, num_rows):
    if isinstance(x, Dual):
        _not_dual("segment_max")
    return T.segment_max(x, idx, num_rows)


def interp_linear(x, table, counter=None):
    if isinstance(x, Dual):
        _not_dual("interp_linear")
    return T.interp_linear(x, table, counter)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))
