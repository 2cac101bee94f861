"""EdgeConv-style message passing with multi-aggregation, in hyperbolic and
Euclidean flavors. The hyperbolic layer does its affine step on the ball and
all message arithmetic in the tangent space at the origin."""

from __future__ import annotations

import numpy as np

from . import hyperbolic as hyp
from .autodiff import Tensor, ops
from .nn import MLP, Module

AGGREGATORS = ("sum", "max", "mean", "var")


class MessagePassingError(Exception):
    pass


def graph_edges(graph):
    """(edge_dst, edge_src): for CSR row i and stored neighbor j, the message
    flows j -> i. Both directions present for undirected graphs."""
    dst = np.repeat(np.arange(graph.n), np.diff(graph.indptr))
    return dst, graph.indices.copy()


def roma_message(phi, t_i, t_j):
    """m_ij = phi(t_i || t_j - t_i) on tangent-space (or Euclidean) rows."""
    return phi(ops.concat([t_i, t_j - t_i], axis=1))


def multi_aggregate(messages, edge_dst, n_nodes):
    """Concat of (sum, max, mean, population var) over each neighborhood.

    Empty neighborhoods produce zeros in all four slots.
    """
    count = np.bincount(edge_dst, minlength=n_nodes).astype(np.float64)
    denom = Tensor(np.maximum(count, 1.0)[:, None])
    total = ops.scatter_add_rows(messages, edge_dst, n_nodes)
    biggest = ops.segment_max(messages, edge_dst, n_nodes)
    mean = total / denom
    sq_mean = ops.scatter_add_rows(messages * messages, edge_dst,
                                   n_nodes) / denom
    var = (sq_mean - mean * mean).clamp(lo=0.0)
    return ops.concat([total, biggest, mean, var], axis=1)


class MpnnLayer(Module):
    """One message-passing layer.

    Forward: affine in the layer geometry, EdgeConv messages over the given
    edges, four-way aggregation combined by psi, tangent-space residual add,
    tanh activation (re-exp'd to the ball for the hyperbolic flavor).
    """

    def __init__(self, rng, d_in, d_out, geometry="hyperbolic", curvature=1.0,
                 hidden_factor=4):
        if geometry not in ("hyperbolic", "euclidean"):
            raise MessagePassingError(f"unknown geometry {geometry!r}")
        self.geometry = geometry
        self.c = curvature
        self.w = Tensor(np.sqrt(2.0 / (d_in + d_out)) *
                        rng.normal(size=(d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)
        h = hidden_factor * d_out
        self.phi = MLP(rng, [2 * d_out, h, d_out])
        self.psi = MLP(rng, [len(AGGREGATORS) * d_out, h, d_out])
        self.layer_index = None  # set by stacks for error reporting

    def _affine_tangent(self, h):
        if self.geometry == "hyperbolic":
            z = hyp.mobius_matvec(h, self.w, self.c)
            z = hyp.bias_add(z, self.b, self.c)
            return hyp.logmap0(z, self.c)
        return ops.matmul(h, self.w) + self.b

    def __call__(self, h, edge_dst, edge_src):
        n = h.shape[0]
        t = self._affine_tangent(h)
        t_i = ops.gather_rows(t, edge_dst)
        t_j = ops.gather_rows(t, edge_src)
        m = roma_message(self.phi, t_i, t_j)
        agg = self.psi(multi_aggregate(m, edge_dst, n))
        out_t = ops.tanh(t + agg)
        if self.geometry == "hyperbolic":
            out = hyp.expmap0(out_t, self.c)
        else:
            out = out_t
        if not np.all(np.isfinite(out.data)):
            where = f" (layer {self.layer_index})" \
                if self.layer_index is not None else ""
            raise MessagePassingError(f"non-finite layer output{where}")
        return out


class MpnnStack(Module):
    def __init__(self, rng, widths, geometry="hyperbolic", curvature=1.0):
        self.layers = [MpnnLayer(rng, widths[i], widths[i + 1], geometry,
                                 curvature) for i in range(len(widths) - 1)]
        for i, layer in enumerate(self.layers):
            layer.layer_index = i

    def __call__(self, h, edge_dst, edge_src):
        for layer in self.layers:
            h = layer(h, edge_dst, edge_src)
        return h
