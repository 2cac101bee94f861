"""Nested forward-mode dual numbers over the tensor engine.

A `Dual` holds a primal and a tangent component, each of which is either a
`Tensor` or another `Dual`; nesting the construction k levels deep yields
exact k-th directional derivatives (hyper-dual extraction: for order two,
r.re.re is the value, r.re.eps the first derivative, r.eps.eps the second).
Non-dual operands are treated as constants, which is what makes mixed
expressions like `w * dual` resolve to the right nesting level. Every
component operation is a taped tensor primitive, so extracted derivatives
remain differentiable in reverse mode with respect to parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import AutodiffError, Tensor


def _match_shape(eps, re):
    """Broadcast a tangent to the primal's shape when a constant add/sub
    broadcast the primal up (d broadcast(x) = broadcast(dx))."""
    target = primal_value(re).shape
    if primal_value(eps).shape != target:
        return eps.broadcast_to(target)
    return eps


class Dual:
    __slots__ = ("re", "eps")

    def __init__(self, re, eps):
        self.re = re
        self.eps = eps

    def __repr__(self):
        return f"Dual(re={self.re!r})"

    @property
    def shape(self):
        return self.re.shape

    @property
    def ndim(self):
        return self.re.ndim

    # -- arithmetic; non-Dual operands are constants --------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re + other.re, self.eps + other.eps)
        re = self.re + other
        return Dual(re, _match_shape(self.eps, re))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re - other.re, self.eps - other.eps)
        re = self.re - other
        return Dual(re, _match_shape(self.eps, re))

    def __rsub__(self, other):
        re = other - self.re
        return Dual(re, _match_shape(-self.eps, re))

    def __neg__(self):
        return Dual(-self.re, -self.eps)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re * other.re,
                        self.eps * other.re + self.re * other.eps)
        return Dual(self.re * other, self.eps * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = other.re * other.re
            return Dual(self.re / other.re,
                        (self.eps * other.re - self.re * other.eps) / inv)
        return Dual(self.re / other, self.eps / other)

    def __rtruediv__(self, other):
        # other constant: d(c / x) = -c x' / x^2
        return Dual(other / self.re,
                    -(other * self.eps) / (self.re * self.re))

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            return NotImplemented
        return Dual(self.re ** p, (self.re ** (p - 1.0)) * float(p) * self.eps)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __getitem__(self, key):
        return Dual(self.re[key], self.eps[key])

    def reshape(self, *shape):
        return Dual(self.re.reshape(*shape), self.eps.reshape(*shape))

    def transpose(self, axes=None):
        return Dual(self.re.transpose(axes), self.eps.transpose(axes))

    def broadcast_to(self, shape):
        return Dual(self.re.broadcast_to(shape), self.eps.broadcast_to(shape))


def zeros_like_struct(x, shape=None):
    """A zero of the same nesting structure (constant tensors throughout).

    `shape` overrides the data shape at every level, which is what lifting a
    differently-shaped constant into a dual expression needs."""
    if isinstance(x, Dual):
        return Dual(zeros_like_struct(x.re, shape),
                    zeros_like_struct(x.eps, shape))
    return Tensor(np.zeros(x.shape if shape is None else shape))


def lift_like(x, template):
    """Lift constant `x` to the nesting level of `template` (zero tangents)."""
    if isinstance(template, Dual):
        shape = primal_value(x).shape
        return Dual(lift_like(x, template.re),
                    zeros_like_struct(template.eps, shape))
    return x


def primal_value(x):
    """Innermost primal Tensor of an arbitrarily nested value."""
    while isinstance(x, Dual):
        x = x.re
    return x


@dataclass
class DualBundle:
    """Value plus exact directional derivatives along one coordinate axis."""
    axis: int
    value: object
    tangents: list = field(default_factory=list)

    @property
    def order(self):
        return len(self.tangents)


def _extract(r, k, order):
    """k-th repeated derivative from an order-nested result.

    Components may come out flat (plain Tensor) when the function is linear
    or constant in the seeded variable; unwrapping then follows the constant
    convention — `.re` of a flat value is itself, `.eps` is zero."""
    for _ in range(k):
        r = r.eps if isinstance(r, Dual) else zeros_like_struct(r)
    for _ in range(order - k):
        if isinstance(r, Dual):
            r = r.re
    return r


def directional_derivatives(f, v0, direction, order):
    """Exact repeated directional derivatives of f at v0 along `direction`.

    Returns [f(v0), D_e f, D_e^2 f, ..., D_e^order f]. `v0` and `direction`
    may themselves be Duals when called under an outer seeding (the gPDE path
    wraps an order-2 computation in one more level).
    """
    if order < 0 or order > 3:
        raise AutodiffError(f"directional_derivatives: order {order} "
                            "outside the supported range 0..3")
    x = v0
    for _ in range(order):
        x = Dual(x, direction)
    r = f(x)
    return [_extract(r, k, order) for k in range(order + 1)]


def coordinate_derivatives(f, v0, order, axes=None):
    """Per-axis DualBundles of f's repeated derivatives at v0.

    f maps a coordinate vector of shape (dim,) (or a Dual of one) to any
    nested value; order must be in 1..3. The diagonal of the Hessian comes
    out exactly at order 2; cross terms need explicit direction seeding via
    `directional_derivatives`.
    """
    if order < 1 or order > 3:
        raise AutodiffError(f"coordinate_derivatives: order {order} "
                            "outside the supported range 1..3")
    base = primal_value(v0)
    if base.ndim != 1:
        raise AutodiffError(
            f"coordinate_derivatives: expected a flat coordinate vector, "
            f"got shape {base.shape}")
    dim = base.shape[0]
    if axes is None:
        axes = range(dim)
    bundles = []
    for ax in axes:
        e = np.zeros(dim)
        e[ax] = 1.0
        derivs = directional_derivatives(f, v0, Tensor(e), order)
        bundles.append(DualBundle(axis=ax, value=derivs[0], tangents=derivs[1:]))
    return bundles
