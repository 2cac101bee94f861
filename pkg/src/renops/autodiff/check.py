"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .tensor import TapeError, backward, no_grad, reset_tape


def finite_difference_check(f, params, step=1e-6, max_entries=50, rng=None):
    """Max relative error between backward() gradients and central differences.

    f: zero-argument callable returning a scalar Tensor, closing over `params`
    (leaf Tensors with requires_grad). The error per checked entry is
    |analytic - central| / (|analytic| + |central| + atol); entries are
    subsampled per parameter when larger than `max_entries`. The additive
    `atol` is sized to the central-difference round-off floor eps*|L|/step so
    that structurally-zero derivatives (where the FD estimate is pure
    cancellation noise) do not register as mismatches.
    """
    params = list(params)
    if rng is None:
        rng = np.random.default_rng(0)
    reset_tape()
    loss = f()
    if loss.size != 1:
        raise TapeError("finite_difference_check: f must be scalar-valued")
    atol = 1e-5 * (1.0 + abs(loss.item()))
    backward(loss)
    analytic = []
    for p in params:
        g = p.grad
        analytic.append(np.zeros_like(p.data) if g is None else g.copy())

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if n > max_entries:
            entries = rng.choice(n, size=max_entries, replace=False)
        else:
            entries = range(n)
        for i in entries:
            orig = flat[i]
            flat[i] = orig + step
            with no_grad():
                hi = f().item()
            flat[i] = orig - step
            with no_grad():
                lo = f().item()
            flat[i] = orig
            fd = (hi - lo) / (2.0 * step)
            an = ga.reshape(-1)[i]
            err = abs(an - fd) / (abs(an) + abs(fd) + atol)
            worst = max(worst, err)
    reset_tape()
    return worst
