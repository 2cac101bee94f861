"""Neural renormalization: ball precoder, soft coarse-graining per level,
and multiscale batch assembly."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hyperbolic as hyp
from .autodiff import Tensor, ops
from .message_passing import MpnnStack
from .nn import Module


class RenormalizationError(Exception):
    pass


def contract_adjacency(a, s):
    """A^(l+1) = S^T A S."""
    return ops.matmul(ops.transpose(s), ops.matmul(a, s))


def contract_history(u, s):
    """u^(l+1) = S^T u."""
    return ops.matmul(ops.transpose(s), u)


def dense_edges(n):
    """All ordered off-diagonal pairs; message-passing support for the small
    soft-adjacency coarse levels."""
    dst, src = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mask = dst != src
    return dst[mask], src[mask]


@dataclass
class MultiscaleBatch:
    x_levels: list               # ball embeddings per level
    u_levels: list               # histories per level
    a_levels: list               # adjacency per level (level 0 constant)
    s_levels: list               # soft assignments, one per coarsening
    xbar_tan: object             # (N', n_feat) tangent-space features
    ubar: object                 # (N', m_hist)
    tags: np.ndarray             # (N',) level id per row
    sizes: list = field(default_factory=list)

    @property
    def n_rows(self):
        return int(self.tags.shape[0])

    def level_slice(self, level):
        start = int(np.sum([s for s in self.sizes[:level]]))
        return slice(start, start + self.sizes[level])


class Precoder(Module):
    """[u^(0); e^(0)] -> ball embedding via exp-map assignment then a stack
    of hyperbolic message-passing layers."""

    def __init__(self, rng, d_in, widths, curvature=1.0):
        self.d_in = d_in
        self.c = curvature
        self.stack = MpnnStack(rng, [d_in] + list(widths), "hyperbolic",
                               curvature)

    def __call__(self, feats, edge_dst, edge_src):
        if feats.shape[1] != self.d_in:
            raise RenormalizationError(
                f"precoder expects width {self.d_in}, got {feats.shape[1]}")
        x = hyp.expmap0(feats, self.c)
        return self.stack(x, edge_dst, edge_src)


class CoarsenLevel(Module):
    """S^(l) from MPNN_CG, coarse embedding from MPNN_emb, linear transport
    of adjacency and histories."""

    def __init__(self, rng, n_feat, n_coarse, hidden, curvature=1.0):
        self.n_coarse = n_coarse
        self.c = curvature
        self.mpnn_cg = MpnnStack(rng, [n_feat, hidden, n_coarse],
                                 "hyperbolic", curvature)
        self.mpnn_emb = MpnnStack(rng, [n_feat, hidden, n_feat],
                                  "hyperbolic", curvature)

    def __call__(self, x, a, u, edge_dst, edge_src):
        n = x.shape[0]
        if self.n_coarse >= n:
            raise RenormalizationError(
                f"coarse size {self.n_coarse} must be < level size {n}")
        logits = hyp.logmap0(self.mpnn_cg(x, edge_dst, edge_src), self.c)
        s = ops.softmax(logits, axis=1)
        z = hyp.logmap0(self.mpnn_emb(x, edge_dst, edge_src), self.c)
        x_next = hyp.expmap0(contract_history(z, s), self.c)
        a_next = contract_adjacency(a, s)
        u_next = contract_history(u, s)
        return s, x_next, a_next, u_next


class Renormalizer(Module):
    """Precoder plus L coarsening levels; produces the multiscale batch."""

    def __init__(self, rng, d_in, n_feat, level_sizes, hidden=16,
                 curvature=1.0, precoder_hidden=None):
        pre_widths = list(precoder_hidden or [2 * n_feat]) + [n_feat]
        self.precoder = Precoder(rng, d_in, pre_widths, curvature)
        self.levels = [CoarsenLevel(rng, n_feat, size, hidden, curvature)
                       for size in level_sizes]
        self.c = curvature

    def __call__(self, feats, a0, u0, edge_dst, edge_src):
        x = self.precoder(feats, edge_dst, edge_src)
        x_levels, u_levels, a_levels, s_levels = [x], [u0], [a0], []
        ed, es = edge_dst, edge_src
        for level in self.levels:
            s, x, a, u = level(x_levels[-1], a_levels[-1], u_levels[-1],
                               ed, es)
            s_levels.append(s)
            x_levels.append(x)
            a_levels.append(a)
            u_levels.append(u)
            ed, es = dense_edges(x.shape[0])
        xbar_tan = ops.concat([hyp.logmap0(xl, self.c) for xl in x_levels],
                              axis=0)
        ubar = ops.concat(u_levels, axis=0)
        sizes = [xl.shape[0] for xl in x_levels]
        tags = np.repeat(np.arange(len(sizes)), sizes)
        return MultiscaleBatch(x_levels, u_levels, a_levels, s_levels,
                               xbar_tan, ubar, tags, sizes)
