"""Composite training loss: symmetric percentage data error, PDE residual
and its gradient regularization, coarse-graining entropies, and Fermi-Dirac
link prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hyperbolic as hyp
from .autodiff import Tensor, ops
from .autodiff.dual import coordinate_derivatives
from .nn import Module


class LossError(Exception):
    pass


def loss_data(u_pred, u_true, eps=1e-7):
    """Symmetric mean squared percentage error; every term lies in [0, 1)."""
    diff = ops.absolute(u_pred - u_true)
    den = ops.absolute(u_pred) + ops.absolute(u_true) + eps
    r = diff / den
    return ops.reduce_mean(r * r)


def loss_pde(dt, g_d):
    """Mean over rows of the squared residual norm ||d_t sigma - G_D||^2."""
    f = dt - g_d
    return ops.reduce_mean(ops.reduce_sum(f * f, axis=1))


def rmse_pde(dt, g_d):
    return ops.sqrt(loss_pde(dt, g_d))


def loss_gpde(residual_fn, v0):
    """Mean over rows and components of ||grad_v f||^2.

    residual_fn maps the coordinate vector (possibly a Dual) to the residual
    field (N, d); each call typically runs the full order-2 derivative
    pipeline one nesting level deeper."""
    bundles = coordinate_derivatives(residual_fn, Tensor(np.asarray(v0)),
                                     order=1)
    sq = None
    for bundle in bundles:
        g = bundle.tangents[0]
        term = g * g
        sq = term if sq is None else sq + term
    return ops.reduce_mean(sq)


def entropy_rows(p):
    """-sum p log p over all entries; log argument clamped at 1e-12."""
    term = p * ops.log(ops.clamp(p, lo=1e-12))
    return -ops.reduce_sum(term)


def row_normalize(a, eps=1e-12):
    s = ops.reduce_sum(a, axis=1, keepdims=True)
    return a / ops.clamp(s, lo=eps)


def loss_entropy(s_levels, a_levels):
    """(L_S, L_A): assignment entropy summed over levels, and the entropy of
    row-normalized coarse adjacencies."""
    zero = Tensor(np.zeros(()))
    l_s = zero
    for s in s_levels:
        l_s = l_s + entropy_rows(s)
    l_a = zero
    for a in a_levels:
        l_a = l_a + entropy_rows(row_normalize(a))
    return l_s, l_a


class LinkPredictor(Module):
    """p_ij = sigmoid(-(d_ij - r)/t) on hyperbolic distances, with learnable
    radius r and softplus-reparameterized temperature."""

    def __init__(self, curvature=1.0, r0=2.0, temp0=1.0):
        self.c = curvature
        self.r = Tensor(np.asarray(float(r0)), requires_grad=True)
        raw = np.log(np.expm1(temp0))
        self.raw_temp = Tensor(np.asarray(raw), requires_grad=True)

    @property
    def temperature(self):
        return ops.softplus(self.raw_temp)

    def prob(self, dist):
        return ops.sigmoid(-(dist - self.r) / self.temperature)

    def _pair_probs(self, x_ball, idx_i, idx_j):
        xi = ops.gather_rows(x_ball, np.asarray(idx_i))
        xj = ops.gather_rows(x_ball, np.asarray(idx_j))
        d = hyp.dist(xi, xj, self.c)
        return ops.reshape(self.prob(d), (len(idx_i),))

    def pair_loss(self, x_ball, idx_i, idx_j, labels):
        """Sum of |label - p_ij|^2 over explicit index pairs."""
        p = self._pair_probs(x_ball, idx_i, idx_j)
        e = p - Tensor(np.asarray(labels, dtype=np.float64))
        return ops.reduce_sum(e * e)

    def dense_loss(self, x_ball, a_norm):
        """Sum over all off-diagonal pairs of |A_ij - p_ij|^2 against a
        row-normalized coarse adjacency."""
        n = x_ball.shape[0]
        dst, src = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        mask = dst != src
        dst, src = dst[mask], src[mask]
        p = self._pair_probs(x_ball, dst, src)
        vals = ops.gather_rows(
            ops.reshape(a_norm, (n * n, 1)), dst * n + src)
        e = p - ops.reshape(vals, (len(dst),))
        return ops.reduce_sum(e * e)


def sample_negative_pairs(graph, n_pairs, rng):
    """Uniform non-edge pairs (i != j), rejection-sampled."""
    pairs = set()
    n = graph.n
    guard = 0
    while len(pairs) < n_pairs:
        i = int(rng.integers(n))
        j = int(rng.integers(n))
        guard += 1
        if guard > 100 * n_pairs + 100:
            break
        if i == j or j in graph.neighbors(i):
            continue
        pairs.add((i, j))
    out = np.array(sorted(pairs), dtype=np.int64)
    return out.reshape(-1, 2)


@dataclass
class LossWeights:
    data: float = 1.0
    pde: float = 1.0
    gpde: float = 0.1
    s: float = 0.0
    a: float = 0.0
    lp: float = 0.0
    regime: str = "none"

    @staticmethod
    def renormalized(data=1.0, pde=1.0, gpde=0.1):
        return LossWeights(data, pde, gpde, 1.0, 1.0, 1.0, "renormalized")

    @staticmethod
    def statistical(data=1.0, pde=1.0, gpde=0.1, small=1e-3):
        return LossWeights(data, pde, gpde, small, small, small,
                           "statistical")


PART_ORDER = ("data", "pde", "gpde", "s", "a", "lp")


def total_loss(parts, weights):
    """Weighted sum of the provided parts; affine in each weight. Missing
    parts count as zero; a NaN part raises naming the offender."""
    total = Tensor(np.zeros(()))
    for name in PART_ORDER:
        part = parts.get(name)
        if part is None:
            continue
        if not np.all(np.isfinite(part.data)):
            raise LossError(f"loss part {name!r} is not finite")
        w = float(getattr(weights, name))
        if w != 0.0:
            total = total + part * w
    return total
