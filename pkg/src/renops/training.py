"""Training loop: subgraph batch sampling, loss assembly, AdamW with the
warmup/decay schedule, held-out evaluation against a persistence reference,
CSV logging, and checkpointing.

Runs are deterministic per (config, dataset): every random draw comes from
generators seeded by the config, and there is no other mode.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import analysis, gp, graphs
from .autodiff import Tensor, backward, no_grad, reset_tape
from .losses import (LossWeights, loss_data, loss_entropy, loss_gpde,
                     loss_pde, sample_negative_pairs, total_loss)
from .message_passing import graph_edges
from .models import ModelConfig, build_model, save_checkpoint
from .optim import AdamW, clip_global_norm, lr_schedule

CSV_COLUMNS = ("step", "lr", "L_data", "L_PDE", "L_gPDE", "L_S", "L_A",
               "L_LP", "eval_relL2", "eval_rmsePDE")
REGIMES = ("none", "renormalized", "statistical")


class TrainingError(Exception):
    pass


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    steps: int = 20000          # desk default; large runs go longer
    warmup: int = 500
    peak_lr: float = 1e-3
    decay_steps: int = None     # lr reaches its floor here, then holds; None: steps
    lr_floor: float = 0.0       # terminal lr as a fraction of peak_lr
    ema_decay: float = None     # when set, eval and checkpoints use EMA weights
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 5e-3
    clip_norm: float = 1.0
    w_data: float = 1.0
    w_pde: float = 1.0
    w_gpde: float = 0.1
    regime: str = "none"
    n_batch: int = 128
    n_roots: int = 8
    walk_length: int = 16
    m_hist: int = 16
    train_frac: float = 0.8     # time split; the last stretch is held out
    eval_every: int = 100
    eval_samples: int = 4
    # early exit: stop once eval Rel-L2 <= stop_ratio * persistence Rel-L2,
    # or once the wall clock passes max_seconds. None disables either bound.
    stop_ratio: float = None
    max_seconds: float = None
    # GP-variant knobs (ignored by the neural models)
    gp_nodes: int = 32
    gp_iters: int = 1000
    gp_lr: float = 5e-2
    gp_max_train: int = 400

    def __post_init__(self):
        if self.steps < 1:
            raise TrainingError("steps must be >= 1")
        if not 1 <= self.warmup <= self.steps:
            raise TrainingError(f"warmup {self.warmup} outside [1, "
                                f"{self.steps}]")
        if not 0.0 < self.train_frac < 1.0:
            raise TrainingError("train_frac must lie in (0, 1)")
        if self.regime not in REGIMES:
            raise TrainingError(f"unknown regime {self.regime!r}")
        if self.m_hist < 1 or self.n_batch < 1 or self.eval_samples < 1:
            raise TrainingError("m_hist, n_batch, eval_samples must be >= 1")
        if self.decay_steps is not None and not \
                self.warmup < self.decay_steps <= self.steps:
            raise TrainingError(f"decay_steps {self.decay_steps} outside "
                                f"({self.warmup}, {self.steps}]")
        if not 0.0 <= self.lr_floor <= 1.0:
            raise TrainingError("lr_floor must lie in [0, 1]")
        if self.ema_decay is not None and not 0.0 < self.ema_decay < 1.0:
            raise TrainingError("ema_decay must lie in (0, 1)")
        if self.stop_ratio is not None and self.stop_ratio <= 0:
            raise TrainingError("stop_ratio must be positive when set")
        if self.max_seconds is not None and self.max_seconds <= 0:
            raise TrainingError("max_seconds must be positive when set")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        return d

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        return TrainConfig(**d)

    @staticmethod
    def from_json(path):
        with open(path) as f:
            return TrainConfig.from_dict(json.load(f))


def loss_weights_for(tc):
    if tc.regime == "renormalized":
        base = LossWeights.renormalized(tc.w_data, tc.w_pde, tc.w_gpde)
    elif tc.regime == "statistical":
        base = LossWeights.statistical(tc.w_data, tc.w_pde, tc.w_gpde)
    else:
        base = LossWeights(tc.w_data, tc.w_pde, tc.w_gpde)
    return base


# -- batches ---------------------------------------------------------------

@dataclass
class StepBatch:
    nodes: np.ndarray
    feats: Tensor
    a0: Tensor
    u_hist: Tensor
    target: np.ndarray
    target_clean: np.ndarray
    persistence: np.ndarray
    t_query: float
    t_index: int
    edge_dst: np.ndarray
    edge_src: np.ndarray
    subgraph: object


def make_batch(ds, nodes, t_idx, m_hist):
    nodes = np.asarray(nodes, dtype=np.int64)
    t_idx = int(t_idx)
    if t_idx < m_hist or t_idx >= ds.t_count:
        raise TrainingError(f"time index {t_idx} outside "
                            f"[{m_hist}, {ds.t_count})")
    sub = ds.graph if len(nodes) == ds.n \
        else graphs.induced_subgraph(ds.graph, nodes)
    ed, es = graph_edges(sub)
    return StepBatch(
        nodes=nodes,
        feats=Tensor(ds.pe[nodes]),
        a0=Tensor(sub.to_scipy().toarray().astype(np.float64)),
        u_hist=Tensor(ds.u[nodes, t_idx - m_hist:t_idx]),
        target=ds.u[nodes, t_idx],
        target_clean=ds.u_clean[nodes, t_idx],
        persistence=ds.u[nodes, t_idx - 1],
        t_query=float(ds.times[t_idx] / ds.times[-1]),
        t_index=t_idx,
        edge_dst=ed,
        edge_src=es,
        subgraph=sub,
    )


def _sample_nodes(ds, tc, rng):
    n_target = min(tc.n_batch, ds.n)
    if n_target == ds.n:
        return np.arange(ds.n, dtype=np.int64)
    return graphs.saintrw_sample(ds.graph, tc.n_roots, tc.walk_length,
                                 n_target, int(rng.integers(2 ** 31)))


def held_out_start(ds, tc):
    t_hi = int(np.floor(tc.train_frac * ds.t_count))
    if t_hi <= tc.m_hist:
        raise TrainingError("training window empty: trajectory too short "
                            f"for m_hist={tc.m_hist}")
    if t_hi >= ds.t_count:
        raise TrainingError("held-out window empty")
    return t_hi


def eval_specs(ds, tc):
    """Fixed (nodes, t_index) pairs spread over the held-out tail."""
    t_hi = held_out_start(ds, tc)
    times = np.unique(np.linspace(t_hi, ds.t_count - 1,
                                  tc.eval_samples).astype(int))
    specs = []
    for i, t_idx in enumerate(times):
        rng = np.random.default_rng(tc.seed + 9001 + i)
        specs.append((_sample_nodes(ds, tc, rng), int(t_idx)))
    return specs


# -- loss assembly ---------------------------------------------------------

def _step_parts(model, batch, weights, rng):
    """Forward pass and every loss part that has a nonzero weight."""
    cond = model.condition(batch.feats, batch.a0, batch.u_hist,
                           batch.edge_dst, batch.edge_src)
    n0 = batch.nodes.shape[0]
    u_hat = model.forecast(cond, batch.t_query)
    parts = {"data": loss_data(u_hat[:n0], Tensor(batch.target))}

    if model.dynamics is not None and (weights.pde or weights.gpde):
        field, g_d = model.dynamics_residual(cond, batch.t_query)
        if weights.pde:
            parts["pde"] = loss_pde(field.dt, g_d)
        if weights.gpde:
            v0 = np.zeros(1 + model.cfg.d_field)
            v0[0] = batch.t_query
            parts["gpde"] = loss_gpde(model.residual_fn(cond), v0)

    ms = cond.batch
    if ms.s_levels and (weights.s or weights.a):
        l_s, l_a = loss_entropy(ms.s_levels, ms.a_levels[1:])
        parts["s"], parts["a"] = l_s, l_a
    if weights.lp and hasattr(model, "linkpred"):
        parts["lp"] = _linkpred_part(model, batch, ms, rng)
    return parts, cond


def _linkpred_part(model, batch, ms, rng):
    """Level-0 positives + matched negatives, then the dense coarse pairs."""
    from .losses import row_normalize

    lp = model.linkpred
    edges = batch.subgraph.edge_list()
    pos_i = edges[:, 0]
    pos_j = edges[:, 1]
    labels = np.ones(len(pos_i))
    loss = lp.pair_loss(ms.x_levels[0], pos_i, pos_j, labels)
    neg = sample_negative_pairs(batch.subgraph, len(pos_i), rng)
    if len(neg):
        loss = loss + lp.pair_loss(ms.x_levels[0], neg[:, 0], neg[:, 1],
                                   np.zeros(len(neg)))
    for x_level, a_level in zip(ms.x_levels[1:], ms.a_levels[1:]):
        loss = loss + lp.dense_loss(x_level, row_normalize(a_level))
    return loss


# -- evaluation ------------------------------------------------------------

def evaluate_model(model, ds, specs, m_hist):
    """Mean held-out metrics over the fixed eval batches.

    Forecasts are scored against the pre-noise trajectory; the persistence
    reference (carry the last observation forward) is scored the same way."""
    rels, rmses, pers = [], [], []
    for nodes, t_idx in specs:
        reset_tape()
        batch = make_batch(ds, nodes, t_idx, m_hist)
        n0 = len(nodes)
        with no_grad():
            cond = model.condition(batch.feats, batch.a0, batch.u_hist,
                                   batch.edge_dst, batch.edge_src)
            u_hat = model.forecast(cond, batch.t_query)
            rels.append(analysis.rel_l2(u_hat.data[:n0], batch.target_clean))
            if model.dynamics is not None:
                field, g_d = model.dynamics_residual(cond, batch.t_query)
                rmses.append(analysis.rmse_pde(field.dt.data, g_d.data))
        pers.append(analysis.rel_l2(batch.persistence, batch.target_clean))
    reset_tape()
    return {
        "rel_l2": float(np.mean(rels)),
        "rmse_pde": float(np.mean(rmses)) if rmses else float("nan"),
        "persistence_rel_l2": float(np.mean(pers)),
    }


# -- the loop --------------------------------------------------------------

@dataclass
class TrainResult:
    rows: list
    total_trace: list
    best_rel_l2: float
    best_step: int
    final_metrics: dict
    persistence_rel_l2: float
    checkpoint_best: str
    checkpoint_final: str
    log_path: str


def _fmt(x):
    return "" if x is None else f"{x:.10g}"


def train(tc, ds, out_dir):
    """Returns a TrainResult; writes metrics.csv, config.json, and best and
    final checkpoints under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    tc.to_json(os.path.join(out_dir, "config.json"))
    if tc.model.variant == "GP":
        return _train_gp(tc, ds, out_dir)

    n_nodes = min(tc.n_batch, ds.n)
    if tc.model.n_batch < n_nodes:
        raise TrainingError(f"model n_batch {tc.model.n_batch} smaller than "
                            f"sampled batch {n_nodes}")
    if tc.m_hist != tc.model.m_hist:
        raise TrainingError(f"m_hist mismatch: train {tc.m_hist} vs model "
                            f"{tc.model.m_hist}")

    model = build_model(tc.model, tc.seed)
    opt = AdamW(model.parameters(), (tc.beta1, tc.beta2),
                weight_decay=tc.weight_decay)
    ema = None
    if tc.ema_decay is not None:
        ema = [p.data.copy() for p in opt.params]
    weights = loss_weights_for(tc)
    rng = np.random.default_rng(tc.seed)
    specs = eval_specs(ds, tc)
    t_lo, t_hi = tc.m_hist, held_out_start(ds, tc)

    log_path = os.path.join(out_dir, "metrics.csv")
    best_path = os.path.join(out_dir, "ckpt_best.bin")
    final_path = os.path.join(out_dir, "ckpt_final.bin")
    rows, trace = [], []
    best_rel, best_step = float("inf"), -1
    last_metrics = None
    t_start = time.monotonic()
    stop = False

    with open(log_path, "w", newline="") as logf:
        writer = csv.writer(logf)
        writer.writerow(CSV_COLUMNS)
        for step in range(1, tc.steps + 1):
            reset_tape()
            nodes = _sample_nodes(ds, tc, rng)
            t_idx = int(rng.integers(t_lo, t_hi))
            batch = make_batch(ds, nodes, t_idx, tc.m_hist)
            parts, _ = _step_parts(model, batch, weights, rng)
            total = total_loss(parts, weights)
            tval = float(total.data)
            if not np.isfinite(tval) or tval > 1e6:
                detail = {k: float(v.data) for k, v in parts.items()}
                raise TrainingError(f"divergence at step {step}: total="
                                    f"{tval:.3e}, parts={detail}")
            model.zero_grad()
            backward(total)
            clip_global_norm(model.parameters(), tc.clip_norm)
            lr = lr_schedule(step, tc.peak_lr, tc.warmup, tc.steps,
                             tc.decay_steps, tc.lr_floor)
            opt.step(lr)
            if ema is not None:
                for shadow, p in zip(ema, opt.params):
                    shadow *= tc.ema_decay
                    shadow += (1.0 - tc.ema_decay) * p.data

            if tc.max_seconds is not None \
                    and time.monotonic() - t_start >= tc.max_seconds:
                stop = True
            metrics = None
            if step % tc.eval_every == 0 or step == tc.steps or stop:
                if ema is not None:
                    raw = [p.data for p in opt.params]
                    for p, shadow in zip(opt.params, ema):
                        p.data = shadow
                metrics = evaluate_model(model, ds, specs, tc.m_hist)
                last_metrics = metrics
                if metrics["rel_l2"] < best_rel:
                    best_rel, best_step = metrics["rel_l2"], step
                    save_checkpoint(best_path, model, {
                        "train": tc.to_dict(), "step": step,
                        "metrics": metrics,
                    })
                if ema is not None:
                    for p, live in zip(opt.params, raw):
                        p.data = live
                if tc.stop_ratio is not None and metrics["rel_l2"] \
                        <= tc.stop_ratio * metrics["persistence_rel_l2"]:
                    stop = True

            row = {
                "step": step, "lr": lr,
                "L_data": float(parts["data"].data),
                "L_PDE": float(parts["pde"].data)
                if "pde" in parts else None,
                "L_gPDE": float(parts["gpde"].data)
                if "gpde" in parts else None,
                "L_S": float(parts["s"].data) if "s" in parts else None,
                "L_A": float(parts["a"].data) if "a" in parts else None,
                "L_LP": float(parts["lp"].data) if "lp" in parts else None,
                "eval_relL2": metrics["rel_l2"] if metrics else None,
                "eval_rmsePDE": metrics["rmse_pde"]
                if metrics and np.isfinite(metrics["rmse_pde"]) else None,
            }
            rows.append(row)
            trace.append(tval)
            writer.writerow([_fmt(row[c]) if c != "step" else step
                             for c in CSV_COLUMNS])
            logf.flush()
            if stop:
                break

    if ema is not None:
        # logged metrics refer to the averaged weights; save those
        for p, shadow in zip(opt.params, ema):
            p.data = shadow
    save_checkpoint(final_path, model, {
        "train": tc.to_dict(), "step": step, "metrics": last_metrics,
    })
    return TrainResult(
        rows=rows, total_trace=trace, best_rel_l2=best_rel,
        best_step=best_step, final_metrics=last_metrics,
        persistence_rel_l2=last_metrics["persistence_rel_l2"],
        checkpoint_best=best_path, checkpoint_final=final_path,
        log_path=log_path)


# -- GP baseline path ------------------------------------------------------

def _train_gp(tc, ds, out_dir):
    """Shared-kernel exact GP over the time axis: hyperparameters are fit on
    a node subset, predictions reuse one Cholesky for all columns."""
    t_hi = held_out_start(ds, tc)
    stride = max(1, t_hi // tc.gp_max_train)
    idx_train = np.arange(0, t_hi, stride)
    x_train = ds.times[idx_train][:, None]

    rng = np.random.default_rng(tc.seed)
    fit_nodes = rng.choice(ds.n, size=min(tc.gp_nodes, ds.n), replace=False)
    fit_nodes.sort()
    model = gp.ExactGP()
    model.fit(x_train, ds.u[fit_nodes][:, idx_train].T,
              iters=tc.gp_iters, lr=tc.gp_lr)

    specs = eval_specs(ds, tc)
    rels, pers = [], []
    for nodes, t_idx in specs:
        mean = model.predict(x_train, ds.u[nodes][:, idx_train].T,
                             ds.times[[t_idx]][:, None])
        rels.append(analysis.rel_l2(mean[0], ds.u_clean[nodes, t_idx]))
        pers.append(analysis.rel_l2(ds.u[nodes, t_idx - 1],
                                    ds.u_clean[nodes, t_idx]))
    metrics = {
        "rel_l2": float(np.mean(rels)),
        "rmse_pde": float("nan"),
        "persistence_rel_l2": float(np.mean(pers)),
    }

    log_path = os.path.join(out_dir, "metrics.csv")
    with open(log_path, "w", newline="") as logf:
        writer = csv.writer(logf)
        writer.writerow(CSV_COLUMNS)
        writer.writerow([tc.gp_iters, _fmt(tc.gp_lr), _fmt(-model.last_mll),
                         "", "", "", "", "", _fmt(metrics["rel_l2"]), ""])
    ckpt = os.path.join(out_dir, "ckpt_final.bin")
    gp.save_gp(ckpt, model, {"train": tc.to_dict(), "metrics": metrics})
    return TrainResult(
        rows=[], total_trace=[], best_rel_l2=metrics["rel_l2"],
        best_step=tc.gp_iters, final_metrics=metrics,
        persistence_rel_l2=metrics["persistence_rel_l2"],
        checkpoint_best=ckpt, checkpoint_final=ckpt, log_path=log_path)
