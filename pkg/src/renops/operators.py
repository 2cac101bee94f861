"""Trunk nets over Fourier-encoded coordinates, the DeepONet propagator,
exact coordinate-derivative bundles of the latent field, black/gray-box
effective dynamics, the NOMAD decoder, and projection to data space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, ops
from .autodiff.dual import directional_derivatives, primal_value
from .nn import MLP, Module


class OperatorError(Exception):
    pass


class FourierFeatures:
    """gamma(v) = [cos(Bv); sin(Bv)] with B frozen at init (never trained)."""

    def __init__(self, rng, m_feat, d_coord, scale=1.0):
        self.m_feat = m_feat
        self.d_coord = d_coord
        self.b = Tensor(rng.normal(0.0, scale, size=(m_feat, d_coord)))

    def __call__(self, v):
        if primal_value(v).shape != (self.d_coord,):
            raise OperatorError(
                f"coordinate vector must have shape ({self.d_coord},)")
        col = ops.reshape(v, (self.d_coord, 1))
        bv = ops.reshape(ops.matmul(self.b, col), (self.m_feat,))
        return ops.concat([ops.cos(bv), ops.sin(bv)], axis=0)


def _tile_rows(vec, n):
    width = primal_value(vec).shape[0]
    return ops.broadcast_to(ops.reshape(vec, (1, width)), (n, width))


class Trunk(Module):
    """t_bar = MLP([gamma(v); x_bar]) reshaped to (N', d, p)."""

    def __init__(self, rng, m_feat, n_feat, width, depth, d_field, p_basis,
                 fourier_scale=1.0, ff=None):
        self.n_feat = n_feat
        self.d_field = d_field
        self.p_basis = p_basis
        self.ff = ff if ff is not None \
            else FourierFeatures(rng, m_feat, 1 + d_field, fourier_scale)
        widths = [2 * self.ff.m_feat + n_feat] + [width] * depth \
            + [d_field * p_basis]
        self.mlp = MLP(rng, widths)

    def __call__(self, v, x_tan):
        n, k = primal_value(x_tan).shape
        if k != self.n_feat:
            raise OperatorError(f"trunk expects {self.n_feat} embedding "
                                f"features, got {k}")
        feats = ops.concat([_tile_rows(self.ff(v), n), x_tan], axis=1)
        return ops.reshape(self.mlp(feats), (n, self.d_field, self.p_basis))


def propagate(b_bar, t_bar):
    """sigma_bar = sum_i b_bar_i (*) t_bar_i over the basis index."""
    sb, st = primal_value(b_bar).shape, primal_value(t_bar).shape
    if sb != st:
        raise OperatorError(f"branch/trunk shape mismatch: {sb} vs {st}")
    return ops.reduce_sum(b_bar * t_bar, axis=2)


@dataclass
class LatentField:
    """sigma_bar and its derivative bundle at (t, y=0).

    grad[n, a, k] = d sigma_a / d y_k; lap is the vector Laplacian."""
    sigma: object
    dt: object
    grad: object
    lap: object


def field_derivatives(sigma_fn, d_field, v0=None, t0=1.0):
    """Exact (d_t, grad, Laplacian) of sigma_fn via nested forward duals.

    sigma_fn maps a coordinate vector of shape (1+d,) to the (N, d) field.
    `v0` may be a Dual when the whole bundle is being differentiated once
    more (the gPDE path); all extracted components stay taped, so they
    remain differentiable with respect to parameters.
    """
    if v0 is None:
        base = np.zeros(1 + d_field)
        base[0] = t0
        v0 = Tensor(base)
    dim = 1 + d_field
    e_t = np.zeros(dim)
    e_t[0] = 1.0
    sigma, dt = directional_derivatives(sigma_fn, v0, Tensor(e_t), 1)
    firsts, laps = [], []
    for ax in range(1, dim):
        e = np.zeros(dim)
        e[ax] = 1.0
        _, d1, d2 = directional_derivatives(sigma_fn, v0, Tensor(e), 2)
        firsts.append(d1)
        laps.append(d2)
    grad = ops.stack_last(firsts)
    lap = laps[0]
    for extra in laps[1:]:
        lap = lap + extra
    return LatentField(sigma=sigma, dt=dt, grad=grad, lap=lap)


def advection(sigma, grad):
    """(sigma . grad) sigma, i.e. the row-wise Jacobian-vector product."""
    n, d = primal_value(sigma).shape
    col = ops.reshape(sigma, (n, d, 1))
    return ops.reshape(ops.matmul(grad, col), (n, d))


class BlackBoxDynamics(Module):
    """G_D with its own trunk basis over the concatenated features
    [gamma(v); x_bar; sigma; flatten(grad); lap], combined with b_bar."""

    def __init__(self, rng, m_feat, n_feat, width, depth, d_field, p_basis,
                 fourier_scale=1.0, ff=None):
        self.d_field = d_field
        self.p_basis = p_basis
        self.ff = ff if ff is not None \
            else FourierFeatures(rng, m_feat, 1 + d_field, fourier_scale)
        d_in = 2 * self.ff.m_feat + n_feat + d_field * (d_field + 2)
        self.mlp = MLP(rng, [d_in] + [width] * depth
                       + [d_field * p_basis])

    def __call__(self, field, b_bar, x_tan, v):
        n, d = primal_value(field.sigma).shape
        feats = ops.concat([
            _tile_rows(self.ff(v), n),
            x_tan,
            field.sigma,
            ops.reshape(field.grad, (n, d * d)),
            field.lap,
        ], axis=1)
        t_d = ops.reshape(self.mlp(feats), (n, self.d_field, self.p_basis))
        return propagate(b_bar, t_d)


class GrayBoxDynamics(Module):
    """d sigma / dt ~= -F (sigma . grad) sigma + nu lap(sigma), with both
    coefficient operators built from separate trunks against b_bar."""

    def __init__(self, rng, m_feat, n_feat, width, depth, d_field, p_basis,
                 fourier_scale=1.0, ff=None):
        self.ff = ff if ff is not None \
            else FourierFeatures(rng, m_feat, 1 + d_field, fourier_scale)
        self.trunk_f = Trunk(rng, m_feat, n_feat, width, depth, d_field,
                             p_basis, ff=self.ff)
        self.trunk_nu = Trunk(rng, m_feat, n_feat, width, depth, d_field,
                              p_basis, ff=self.ff)

    def coefficients(self, b_bar, x_tan, v):
        f_coef = propagate(b_bar, self.trunk_f(v, x_tan))
        nu_coef = propagate(b_bar, self.trunk_nu(v, x_tan))
        return f_coef, nu_coef

    def __call__(self, field, b_bar, x_tan, v):
        f_coef, nu_coef = self.coefficients(b_bar, x_tan, v)
        g = -(f_coef * advection(field.sigma, field.grad)) \
            + nu_coef * field.lap
        return f_coef, nu_coef, g


class NomadDecoder(Module):
    """Nonlinear decoder on [flatten(b_bar row); gamma(v); x_bar] -> R^d."""

    def __init__(self, rng, m_feat, n_feat, width, depth, d_field, p_basis,
                 fourier_scale=1.0, ff=None):
        self.d_field = d_field
        self.p_basis = p_basis
        self.ff = ff if ff is not None \
            else FourierFeatures(rng, m_feat, 1 + d_field, fourier_scale)
        d_in = d_field * p_basis + 2 * self.ff.m_feat + n_feat
        self.mlp = MLP(rng, [d_in] + [width] * depth + [d_field])

    def __call__(self, b_bar, v, x_tan):
        n = primal_value(b_bar).shape[0]
        flat_b = ops.reshape(b_bar, (n, self.d_field * self.p_basis))
        feats = ops.concat([flat_b, _tile_rows(self.ff(v), n), x_tan],
                           axis=1)
        return self.mlp(feats)


def project_norm(sigma):
    """P(sigma) = per-row Euclidean norm of the latent field."""
    return ops.sqrt(ops.reduce_sum(sigma * sigma, axis=1))


class ProjectionHead(Module):
    """Perceptron-with-sigmoid alternative to the norm projection."""

    def __init__(self, rng, d_field, width=16):
        self.mlp = MLP(rng, [d_field, width, 1])

    def __call__(self, sigma):
        n = primal_value(sigma).shape[0]
        return ops.reshape(ops.sigmoid(self.mlp(sigma)), (n,))
