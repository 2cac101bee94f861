"""Minimal neural building blocks over the taped tensor engine.

A Module is just a parameter registry: anything assigned as a Tensor with
requires_grad, a Module, or a list of Modules is collected in deterministic
attribute order, which fixes optimizer state and checkpoint block layout.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, ops


class Module:
    def named_parameters(self, prefix=""):
        out = []
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    out.append((key, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{key}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{key}.{i}", item))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def n_params(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} "
                           f"unexpected={sorted(extra)}")
        for k, p in own.items():
            if p.data.shape != state[k].shape:
                raise ValueError(f"{k}: shape {state[k].shape} != "
                                 f"{p.data.shape}")
            p.data = np.array(state[k], dtype=np.float64)


def glorot(rng, d_in, d_out):
    std = np.sqrt(2.0 / (d_in + d_out))
    return rng.normal(0.0, std, size=(d_in, d_out))


class Linear(Module):
    def __init__(self, rng, d_in, d_out, bias=True, zero_init=False):
        w = np.zeros((d_in, d_out)) if zero_init else glorot(rng, d_in, d_out)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x):
        y = ops.matmul(x, self.w)
        if self.b is not None:
            y = y + self.b
        return y


class MLP(Module):
    """Dense stack with tanh between layers; last layer linear."""

    def __init__(self, rng, widths, zero_last=False):
        if len(widths) < 2:
            raise ValueError("MLP needs at least input and output widths")
        self.layers = [
            Linear(rng, widths[i], widths[i + 1],
                   zero_init=(zero_last and i == len(widths) - 2))
            for i in range(len(widths) - 1)
        ]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ops.tanh(x)
        return x


class LayerNorm(Module):
    def __init__(self, width, eps=1e-5):
        self.gamma = Tensor(np.ones(width), requires_grad=True)
        self.beta = Tensor(np.zeros(width), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return ops.layer_norm(x, axis=-1, eps=self.eps) * self.gamma + self.beta


class Embedding(Module):
    """Lookup table, rows drawn N(0,1)."""

    def __init__(self, rng, n_rows, width):
        self.table = Tensor(rng.normal(0.0, 1.0, size=(n_rows, width)),
                            requires_grad=True)

    def __call__(self, idx):
        idx = np.asarray(idx)
        if idx.size and (idx.min() < 0 or idx.max() >= self.table.shape[0]):
            raise IndexError(
                f"embedding index out of table of {self.table.shape[0]} rows")
        return ops.gather_rows(self.table, idx)
