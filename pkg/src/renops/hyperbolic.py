"""Poincare ball operations on row-stacked points.

All functions act rowwise on (N, d) Tensors and stay inside the taped engine
so gradients flow through every map. Curvature c > 0 is a plain float (the
ball of radius 1/sqrt(c)); it is configuration, not a learnable parameter.
Points are kept strictly inside the ball by radial projection with margin
EPS_BALL after every ball-valued op.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, ops

EPS_BALL = 1e-5
MIN_NORM = 1e-15
# artanh blows up at +-1; this is the largest float64 argument that stays finite
ATANH_CLAMP = 1.0 - 1e-15


def _sq_norm(x):
    return ops.reduce_sum(x * x, axis=-1, keepdims=True)


def _norm(x):
    return ops.sqrt(_sq_norm(x).clamp(lo=MIN_NORM))


def artanh(x):
    x = x.clamp(-ATANH_CLAMP, ATANH_CLAMP)
    return 0.5 * (ops.log(1.0 + x) - ops.log(1.0 - x))


def project(x, c=1.0):
    """Radially pull rows with norm >= (1 - EPS_BALL)/sqrt(c) back inside."""
    max_norm = (1.0 - EPS_BALL) / np.sqrt(c)
    factor = (max_norm / _norm(x)).clamp(hi=1.0)
    return x * factor


def expmap0(v, c=1.0):
    sc = np.sqrt(c)
    n = _norm(v)
    return project(ops.tanh(sc * n) * v / (sc * n), c)


def logmap0(y, c=1.0):
    sc = np.sqrt(c)
    n = _norm(y)
    return artanh(sc * n) * y / (sc * n)


def mobius_add(x, y, c=1.0):
    x2 = _sq_norm(x)
    y2 = _sq_norm(y)
    xy = ops.reduce_sum(x * y, axis=-1, keepdims=True)
    num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    return project(num / den.clamp(lo=MIN_NORM), c)


def lam(x, c=1.0):
    """Conformal factor lambda_x = 2 / (1 - c ||x||^2)."""
    return 2.0 / (1.0 - c * _sq_norm(x)).clamp(lo=MIN_NORM)


def expmap(x, v, c=1.0):
    sc = np.sqrt(c)
    n = _norm(v)
    second = ops.tanh(sc * lam(x, c) * n / 2.0) * v / (sc * n)
    return mobius_add(x, second, c)


def logmap(x, y, c=1.0):
    sc = np.sqrt(c)
    w = mobius_add(-x, y, c)
    n = _norm(w)
    return (2.0 / (sc * lam(x, c))) * artanh(sc * n) * w / n


def ptransp0(x, v, c=1.0):
    """Parallel transport of tangent v from the origin to x (gyro-transport)."""
    return (1.0 - c * _sq_norm(x)) * v


def bias_add(x, b, c=1.0):
    """x (+) b implemented as exp_x(PT_{o->x}(b)); b lives in T_o."""
    return expmap(x, ptransp0(x, b, c), c)


def mobius_matvec(x, w, c=1.0):
    """W (x) x: apply a Euclidean linear map in the tangent space at o."""
    return expmap0(ops.matmul(logmap0(x, c), w), c)


def dist(x, y, c=1.0):
    sc = np.sqrt(c)
    w = mobius_add(-x, y, c)
    return (2.0 / sc) * artanh(sc * _norm(w))


def dist0(x, c=1.0):
    sc = np.sqrt(c)
    return (2.0 / sc) * artanh(sc * _norm(x))


def fermi_dirac(d, r, t):
    """Edge probability 1 / (exp((d - r)/t) + 1)."""
    return ops.sigmoid(-(d - r) / t)


def tangent_activation(x, fn, c=1.0):
    """Apply a Euclidean activation in the tangent space at the origin."""
    return expmap0(fn(logmap0(x, c)), c)
