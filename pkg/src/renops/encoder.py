"""Function-space lift, positional embeddings over the multiscale batch,
and the pre-norm transformer encoder."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, matmul, ops
from .nn import MLP, Embedding, LayerNorm, Linear, Module


class EncoderError(Exception):
    pass


# name -> (lambda_scale, lambda_index, context)
PE_SETTINGS = {
    "index": (0, 1, False),
    "multiscale": (1, 1, False),
    "context": (0, 0, True),
    "index_context": (0, 1, True),
    "scale_context": (1, 0, True),
    "multiscale_context": (1, 1, True),
    "none": (0, 0, False),
}


@dataclass(frozen=True)
class PositionalConfig:
    lambda_scale: int = 1
    lambda_index: int = 1
    context: bool = False

    def __post_init__(self):
        key = (self.lambda_scale, self.lambda_index, self.context)
        if key not in PE_SETTINGS.values():
            raise EncoderError(f"unknown positional setting {key}")

    @property
    def name(self):
        key = (self.lambda_scale, self.lambda_index, self.context)
        return next(k for k, v in PE_SETTINGS.items() if v == key)

    @staticmethod
    def from_name(name):
        if name not in PE_SETTINGS:
            raise EncoderError(f"unknown positional setting {name!r}")
        ls, li, ctx = PE_SETTINGS[name]
        return PositionalConfig(ls, li, ctx)


def se_kernel(grid, length_scale):
    d = grid[:, None] - grid[None, :]
    return np.exp(-(d ** 2) / (2.0 * length_scale ** 2))


class FunctionLift:
    """Fixed bank of q random functions from a squared-exponential GRF on
    [0, 1], tabulated on a uniform grid and applied elementwise by linear
    interpolation.  Not trainable."""

    def __init__(self, q, length_scale=1.0, grid_n=128, seed=0):
        if q < 1:
            raise EncoderError("function lift needs q >= 1")
        self.q = q
        self.grid = np.linspace(0.0, 1.0, grid_n)
        k = se_kernel(self.grid, length_scale)
        chol = np.linalg.cholesky(k + 1e-10 * np.eye(grid_n))
        rng = np.random.default_rng(seed)
        self.table = (chol @ rng.standard_normal((grid_n, q))).T
        self.clip_counter = {"clipped": 0}

    def __call__(self, u):
        """(N, m) histories -> (N, m*q) lifted features."""
        lifted = ops.interp_linear(u, self.table, self.clip_counter)
        n, m = u.shape
        return ops.reshape(lifted, (n, m * self.q))


class PositionalEmbedding(Module):
    """v_hat = v(u) + context(x) + lambda_s * e_scale + lambda_idx * e_index,
    applied in function space (row width m_hist * q)."""

    def __init__(self, rng, width, n_levels, n_index, n_feat, config):
        self.config = config
        self.width = width
        self.scale_table = Embedding(rng, max(n_levels, 1), width)
        self.index_table = Embedding(rng, max(n_index, 1), width)
        self.context_mlp = MLP(rng, [n_feat, width, width])
        self.context_ln = LayerNorm(width)

    def __call__(self, v, x_tan, tags):
        if v.shape[1] != self.width:
            raise EncoderError(
                f"positional width {self.width} != input {v.shape[1]}")
        out = v
        cfg = self.config
        if cfg.context:
            out = out + self.context_ln(self.context_mlp(x_tan))
        if cfg.lambda_scale:
            out = out + self.scale_table(tags)
        if cfg.lambda_index:
            out = out + self.index_table(np.arange(v.shape[0]))
        return out


class MultiHeadAttention(Module):
    def __init__(self, rng, width, heads, zero_init=True):
        if width % heads != 0:
            raise EncoderError(f"width {width} not divisible by {heads} heads")
        self.heads = heads
        self.d_head = width // heads
        self.wq = Linear(rng, width, width)
        self.wk = Linear(rng, width, width)
        self.wv = Linear(rng, width, width)
        self.wo = Linear(rng, width, width, zero_init=zero_init)

    def _split(self, x, n):
        return x.reshape(n, self.heads, self.d_head).transpose((1, 0, 2))

    def __call__(self, x, capture=None):
        n = x.shape[0]
        q = self._split(self.wq(x), n)
        k = self._split(self.wk(x), n)
        v = self._split(self.wv(x), n)
        scores = matmul(q, k.transpose((0, 2, 1))) \
            * (1.0 / math.sqrt(self.d_head))
        attn = scores.softmax(axis=-1)
        if capture is not None:
            capture.append(attn.data)
        ctx = matmul(attn, v)
        merged = ctx.transpose((1, 0, 2)).reshape(n, self.heads * self.d_head)
        return self.wo(merged)


class TransformerBlock(Module):
    """Pre-norm: b' = b + MHA(LN b); b'' = b' + MLP(LN b')."""

    def __init__(self, rng, width, heads, mlp_ratio=4, zero_init=True):
        self.ln1 = LayerNorm(width)
        self.attn = MultiHeadAttention(rng, width, heads, zero_init)
        self.ln2 = LayerNorm(width)
        self.mlp = MLP(rng, [width, mlp_ratio * width, width],
                       zero_last=zero_init)

    def __call__(self, b, capture=None):
        b = b + self.attn(self.ln1(b), capture)
        return b + self.mlp(self.ln2(b))


class TransformerEncoder(Module):
    """in-projection -> pre-norm blocks -> head reshaped to (N', d, p)."""

    def __init__(self, rng, d_in, width=64, heads=4, n_blocks=2, d_out=3,
                 p_basis=32, mlp_ratio=4, zero_init=True):
        self.d_out = d_out
        self.p_basis = p_basis
        self.in_proj = Linear(rng, d_in, width)
        self.blocks = [TransformerBlock(rng, width, heads, mlp_ratio,
                                        zero_init) for _ in range(n_blocks)]
        self.head = Linear(rng, width, d_out * p_basis)

    def __call__(self, v_hat, capture_attention=False):
        """Returns (b_bar, attention) where attention is a list of
        (heads, N', N') arrays per block, or None."""
        maps = [] if capture_attention else None
        b = self.in_proj(v_hat)
        for block in self.blocks:
            b = block(b, maps)
        n = b.shape[0]
        b_bar = self.head(b).reshape(n, self.d_out, self.p_basis)
        return b_bar, maps
