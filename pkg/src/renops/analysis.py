"""Post-hoc metrics and structure analysis: relative errors, attention-mass
tables, PCA of attention maps, power-law fits, and embedding similarity.

Everything here works on plain numpy arrays; outputs are meant for CSV/JSON
export, with plotting left to external tools.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class AnalysisError(Exception):
    pass


def rel_l2(u_pred, u_true):
    """sqrt(mean of (|a-b|/(|a|+|b|))^2); rows where both vanish count 0."""
    a = np.asarray(u_pred, dtype=np.float64)
    b = np.asarray(u_true, dtype=np.float64)
    if a.shape != b.shape:
        raise AnalysisError(f"shape mismatch {a.shape} vs {b.shape}")
    den = np.abs(a) + np.abs(b)
    r = np.divide(np.abs(a - b), den, out=np.zeros_like(den),
                  where=den > 0.0)
    return float(np.sqrt(np.mean(r * r)))


def rmse_pde(dt, g_d):
    """sqrt(mean over rows of ||d_t sigma - G_D||^2)."""
    f = np.asarray(dt, dtype=np.float64) - np.asarray(g_d, dtype=np.float64)
    return float(np.sqrt(np.mean(np.sum(f * f, axis=1))))


# -- attention structure ---------------------------------------------------

def attention_stats(maps, tags):
    """Per-layer/head masses and inter-head distances.

    maps: list over blocks of (heads, N', N') row-stochastic arrays.
    tags: (N',) level ids; level 0 is the fine scale.

    Returns a list of row dicts (layer, head, fine_fine, coarse_fine) plus a
    per-layer list of RMS inter-head Frobenius distances.
    """
    tags = np.asarray(tags)
    if tags.ndim != 1:
        raise AnalysisError("tags must be a 1-d level-id array")
    fine = tags == 0
    if not np.any(fine):
        raise AnalysisError("no fine-scale rows in tags")
    rows = []
    head_dist = []
    for layer, a in enumerate(maps):
        a = np.asarray(a)
        if a.ndim != 3 or a.shape[1] != tags.shape[0]:
            raise AnalysisError(f"layer {layer}: attention shape {a.shape} "
                                f"does not match {tags.shape[0]} rows")
        for head in range(a.shape[0]):
            fine_block = a[head][fine]          # fine queries
            rows.append({
                "layer": layer,
                "head": head,
                "fine_fine": float(fine_block[:, fine].sum(axis=1).mean()),
                "coarse_fine": float(fine_block[:, ~fine].sum(axis=1).mean()),
            })
        h = a.shape[0]
        dists = [np.linalg.norm(a[i] - a[j])
                 for i in range(h) for j in range(i + 1, h)]
        head_dist.append(float(np.sqrt(np.mean(np.square(dists))))
                         if dists else 0.0)
    return rows, head_dist


def coarse_to_fine_block(maps, tags, layer=0):
    """Mean-over-heads attention from fine queries into coarse keys at one
    layer; rows are fine nodes."""
    tags = np.asarray(tags)
    fine = tags == 0
    if np.all(fine):
        raise AnalysisError("no coarse rows: model has no multiscale batch")
    a = np.asarray(maps[layer]).mean(axis=0)
    return a[fine][:, ~fine]


def attention_pca(mat, k=16):
    """Centered PCA of the row collection via the covariance eigensystem.

    Returns (components (k, n_cols), ratios (k,), mean). Ratios are against
    the full spectrum, so they are non-increasing and sum to <= 1."""
    x = np.asarray(mat, dtype=np.float64)
    if x.ndim != 2:
        raise AnalysisError("attention_pca expects a matrix")
    n, _ = x.shape
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(n - 1, 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    vals = np.clip(vals, 0.0, None)
    rank = int(np.linalg.matrix_rank(xc)) if n > 1 else 0
    if k > len(vals):
        warnings.warn(f"k={k} exceeds {len(vals)} columns; truncating")
        k = len(vals)
    elif k > rank:
        warnings.warn(f"k={k} exceeds matrix rank {rank}; trailing "
                      "components are noise")
    total = vals.sum()
    ratios = vals[:k] / total if total > 0 else np.zeros(k)
    return vecs[:, :k].T, ratios, mean


# -- scaling fits ----------------------------------------------------------

@dataclass
class PowerLawFit:
    alpha: float       # decay exponent of loss vs parameter count
    p_c: float         # parameter-count scale
    residual: float    # sum of squared log-space residuals

    def loss_at(self, p):
        return (self.p_c / np.asarray(p, dtype=np.float64)) ** self.alpha


def powerlaw_fit(points):
    """OLS in natural-log space for L(P) = (P_c / P)^alpha.

    log L = -alpha log P + alpha log P_c, so alpha = -slope and
    P_c = exp(intercept / alpha)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise AnalysisError("need >= 2 (P, L) points")
    if np.any(pts <= 0.0):
        raise AnalysisError("P and L must be positive")
    lp = np.log(pts[:, 0])
    ll = np.log(pts[:, 1])
    design = np.stack([lp, np.ones_like(lp)], axis=1)
    (slope, intercept), res, _, _ = np.linalg.lstsq(design, ll, rcond=None)
    alpha = -float(slope)
    if alpha == 0.0:
        p_c = float("nan")
    else:
        p_c = float(np.exp(intercept / alpha))
    residual = float(res[0]) if res.size else 0.0
    return PowerLawFit(alpha, p_c, residual)


def pe_similarity(table):
    """Cosine-similarity matrix over embedding rows."""
    x = np.asarray(table, dtype=np.float64)
    norms = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-12)
    n = x / norms
    return n @ n.T
