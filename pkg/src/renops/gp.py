"""Exact Gaussian-process regression with an RBF kernel.

Hyperparameters (lengthscale, signal variance, noise variance) live as log
quantities and are fit by Adam on the exact marginal log likelihood, with
closed-form gradients. Multiple output columns share one kernel matrix, so
a single Cholesky serves every column.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, cholesky

from . import container
from .autodiff import Tensor
from .optim import AdamW

JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
NOISE_STD_FLOOR = 1e-4


class GPError(Exception):
    pass


def _sq_dists(x1, x2):
    a = np.sum(x1 * x1, axis=1)[:, None]
    b = np.sum(x2 * x2, axis=1)[None, :]
    return np.clip(a + b - 2.0 * (x1 @ x2.T), 0.0, None)


def rbf_kernel(x1, x2, lengthscale, signal_var):
    return signal_var * np.exp(-_sq_dists(x1, x2) /
                               (2.0 * lengthscale ** 2))


def _chol_jitter(k):
    n = k.shape[0]
    for j in JITTERS:
        try:
            return cholesky(k + j * np.eye(n), lower=True), j
        except np.linalg.LinAlgError:
            continue
    raise GPError("kernel matrix stayed non-positive-definite up to "
                  f"jitter {JITTERS[-1]:g}")


def _as_columns(y):
    y = np.asarray(y, dtype=np.float64)
    return y[:, None] if y.ndim == 1 else y


class ExactGP:
    """Hyperparameters: lengthscale l = exp(a), signal variance = exp(2b),
    noise variance = exp(2c)."""

    def __init__(self, lengthscale=1.0, signal_std=1.0, noise_std=0.1):
        self.log_lengthscale = float(np.log(lengthscale))
        self.log_signal = float(np.log(signal_std))
        self.log_noise = float(np.log(noise_std))
        self.last_mll = float("nan")

    @property
    def lengthscale(self):
        return float(np.exp(self.log_lengthscale))

    @property
    def signal_var(self):
        return float(np.exp(2.0 * self.log_signal))

    @property
    def noise_var(self):
        return float(np.exp(2.0 * self.log_noise))

    def _train_matrix(self, x):
        k_se = rbf_kernel(x, x, self.lengthscale, self.signal_var)
        k = k_se + self.noise_var * np.eye(x.shape[0])
        return k_se, k

    def mll(self, x, y):
        """Mean over output columns of the exact marginal log likelihood."""
        x = np.asarray(x, dtype=np.float64)
        y = _as_columns(y)
        n = x.shape[0]
        _, k = self._train_matrix(x)
        chol, _ = _chol_jitter(k)
        alpha = cho_solve((chol, True), y)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        quad = np.sum(y * alpha, axis=0)
        per_col = -0.5 * quad - 0.5 * logdet - 0.5 * n * np.log(2 * np.pi)
        return float(np.mean(per_col))

    def mll_grads(self, x, y):
        """(mll, gradient wrt the three log-hyperparameters)."""
        x = np.asarray(x, dtype=np.float64)
        y = _as_columns(y)
        n, n_cols = y.shape
        k_se, k = self._train_matrix(x)
        chol, _ = _chol_jitter(k)
        alpha = cho_solve((chol, True), y)
        k_inv = cho_solve((chol, True), np.eye(n))

        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        quad = np.sum(y * alpha, axis=0)
        mll = float(np.mean(-0.5 * quad - 0.5 * logdet
                            - 0.5 * n * np.log(2 * np.pi)))

        dks = {
            "log_lengthscale": k_se * (_sq_dists(x, x)
                                       / self.lengthscale ** 2),
            "log_signal": 2.0 * k_se,
            "log_noise": 2.0 * self.noise_var * np.eye(n),
        }
        grads = {}
        for name, dk in dks.items():
            data_term = np.mean(np.sum(alpha * (dk @ alpha), axis=0))
            trace_term = np.sum(k_inv * dk)
            grads[name] = float(0.5 * data_term - 0.5 * trace_term)
        return mll, grads

    def fit(self, x, y, iters=1000, lr=5e-2):
        """Maximize the MLL by Adam on the log-hyperparameters."""
        params = {
            "log_lengthscale": Tensor(np.asarray(self.log_lengthscale),
                                      requires_grad=True),
            "log_signal": Tensor(np.asarray(self.log_signal),
                                 requires_grad=True),
            "log_noise": Tensor(np.asarray(self.log_noise),
                                requires_grad=True),
        }
        opt = AdamW(list(params.values()), weight_decay=0.0)
        for _ in range(iters):
            mll, grads = self.mll_grads(x, y)
            for name, p in params.items():
                p.grad = np.asarray(-grads[name])  # ascent on the MLL
            opt.step(lr)
            self.log_lengthscale = float(params["log_lengthscale"].data)
            self.log_signal = float(params["log_signal"].data)
            # noise floor keeps the train matrix invertible near zero noise
            self.log_noise = max(float(params["log_noise"].data),
                                 np.log(NOISE_STD_FLOOR))
            params["log_noise"].data = np.asarray(self.log_noise)
            self.last_mll = mll
        return self

    def predict(self, x_train, y_train, x_test):
        """Posterior mean at x_test, shape (n_test, n_cols)."""
        x_train = np.asarray(x_train, dtype=np.float64)
        x_test = np.asarray(x_test, dtype=np.float64)
        y = _as_columns(y_train)
        _, k = self._train_matrix(x_train)
        chol, _ = _chol_jitter(k)
        alpha = cho_solve((chol, True), y)
        k_star = rbf_kernel(x_train, x_test, self.lengthscale,
                            self.signal_var)
        return k_star.T @ alpha


def save_gp(path, model, extra_meta=None):
    meta = {"kind_detail": "gp"}
    if extra_meta:
        meta.update(extra_meta)
    blocks = {"log_params": np.array([model.log_lengthscale,
                                      model.log_signal, model.log_noise])}
    container.write(path, "checkpoint", meta, blocks)


def load_gp(path):
    _, meta, blocks = container.read(path, expect_kind="checkpoint")
    a, b, c = blocks["log_params"]
    model = ExactGP(np.exp(a), np.exp(b), np.exp(c))
    return model, meta
