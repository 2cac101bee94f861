"""AdamW with decoupled weight decay, global-norm clipping, and the
warmup/linear-decay schedule."""

from __future__ import annotations

import numpy as np


class OptimError(Exception):
    pass


def clip_global_norm(params, max_norm=1.0):
    """Scale all gradients so the global L2 norm is at most max_norm.
    Returns the pre-clip norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad ** 2))
    total = float(np.sqrt(total))
    if total > max_norm:
        scale = max_norm / total
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return total


def lr_schedule(step, peak, warmup, total, decay=None, floor=0.0):
    """Linear warmup to `peak` over `warmup` steps, then linear decay toward
    `floor * peak`, reached at step `decay` (default `total`) and held from
    there on. Steps are 1-indexed."""
    horizon = total if decay is None else decay
    if warmup > total:
        raise OptimError(f"warmup {warmup} exceeds total steps {total}")
    if not 0 < horizon <= total:
        raise OptimError(f"decay horizon {horizon} outside (0, {total}]")
    if not 0.0 <= floor <= 1.0:
        raise OptimError(f"floor {floor} outside [0, 1]")
    if step <= warmup:
        return peak * step / max(warmup, 1)
    frac = min(1.0, (step - warmup) / max(horizon - warmup, 1))
    return peak * (1.0 - (1.0 - floor) * frac)


class AdamW:
    """Decoupled weight decay: p <- p*(1 - lr*wd) - lr * m_hat/(sqrt(v_hat)+eps)."""

    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=5e-3):
        self.params = list(params)
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data *= 1.0 - lr * self.wd
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self):
        return {
            "t": self.t,
            "m": [m.copy() for m in self.m],
            "v": [v.copy() for v in self.v],
        }

    def load_state_dict(self, state):
        if len(state["m"]) != len(self.params):
            raise OptimError("optimizer state does not match parameter list")
        self.t = int(state["t"])
        self.m = [np.array(m) for m in state["m"]]
        self.v = [np.array(v) for v in state["v"]]
