"""Forecast model zoo.

One ForecastModel class covers every neural variant; the config tag decides
which conditioning branch (plain ResNet, Euclidean message passing, or the
hyperbolic renormalizer), which decoder (basis product vs nonlinear), and
whether an effective-dynamics operator rides along. The GP baseline is not a
neural model and lives in renops.gp.

All frozen randomness (function-lift table, Fourier coordinate matrix) is
derived from cfg.frozen_seed rather than the init stream, so a checkpoint
plus its config rebuilds the exact same function.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import container
from .autodiff import Tensor, ops
from .encoder import (FunctionLift, PositionalConfig, PositionalEmbedding,
                      TransformerEncoder)
from .losses import LinkPredictor
from .message_passing import MpnnStack
from .nn import LayerNorm, Linear, Module
from .operators import (BlackBoxDynamics, GrayBoxDynamics, NomadDecoder,
                        Trunk, FourierFeatures, field_derivatives,
                        project_norm, propagate)
from .renormalize import MultiscaleBatch, Renormalizer


class ModelError(Exception):
    pass


VARIANTS = ("GP", "DON", "DON-MP", "NOMAD-MP", "DON-PI", "DON-MP-PI",
            "NOMAD-MP-PI", "ROMA")
# variants whose conditioning runs message passing / a transformer encoder
MP_VARIANTS = ("DON-MP", "NOMAD-MP", "DON-MP-PI", "NOMAD-MP-PI", "ROMA")
NOMAD_VARIANTS = ("NOMAD-MP", "NOMAD-MP-PI")
PI_VARIANTS = ("DON-PI", "DON-MP-PI", "NOMAD-MP-PI", "ROMA")
DYNAMICS_KINDS = ("none", "blackbox", "graybox")


@dataclass
class ModelConfig:
    variant: str = "ROMA"
    d_in: int = 16             # raw node feature width (Laplacian encodings)
    n_feat: int = 16           # embedding width after the precoder
    m_hist: int = 16           # history samples per node
    q_lift: int = 4            # random functions in the lift
    width: int = 64            # transformer embedding dim
    heads: int = 4
    n_blocks: int = 2
    d_field: int = 3           # latent field dimension d
    p_basis: int = 32
    m_fourier: int = 8
    trunk_width: int = 64
    trunk_depth: int = 3
    n_batch: int = 128         # level-0 rows per forward pass (fixes PE table)
    level_sizes: tuple = ()
    pe_setting: str = "multiscale_context"
    dynamics: str = None       # resolved per variant when left unset
    curvature: float = 1.0
    mpnn_hidden: int = 16
    resnet_blocks: int = 2
    lift_length_scale: float = 1.0
    lift_grid_n: int = 128
    fourier_scale: float = 1.0
    frozen_seed: int = 0

    def __post_init__(self):
        self.level_sizes = tuple(int(s) for s in self.level_sizes)
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}")
        if self.dynamics is None:
            self.dynamics = "blackbox" if self.variant in PI_VARIANTS \
                else "none"
        if self.dynamics not in DYNAMICS_KINDS:
            raise ModelError(f"unknown dynamics kind {self.dynamics!r}")
        if self.variant in PI_VARIANTS and self.dynamics == "none":
            raise ModelError(f"{self.variant} requires an effective-dynamics "
                             "operator (blackbox or graybox)")
        if self.variant not in PI_VARIANTS and self.dynamics != "none":
            raise ModelError(f"{self.variant} does not take dynamics="
                             f"{self.dynamics!r}")
        if self.level_sizes and self.variant != "ROMA":
            raise ModelError("coarsening levels are a ROMA feature")
        if self.width % self.heads != 0:
            raise ModelError(f"width {self.width} not divisible by "
                             f"{self.heads} heads")
        PositionalConfig.from_name(self.pe_setting)

    @property
    def n_rows(self):
        """Total multiscale rows per forward pass."""
        return self.n_batch + sum(self.level_sizes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["level_sizes"] = list(self.level_sizes)
        return d

    @staticmethod
    def from_dict(d):
        return ModelConfig(**dict(d, level_sizes=tuple(d["level_sizes"])))


@dataclass
class Conditioned:
    """Everything the decoders need after one conditioning pass."""
    batch: MultiscaleBatch
    b_bar: object              # (N', d, p)
    x_tan: object              # (N', n_feat)
    attention: object = None


class ResBlock(Module):
    def __init__(self, rng, width):
        self.ln = LayerNorm(width)
        self.fc1 = Linear(rng, width, width)
        self.fc2 = Linear(rng, width, width, zero_init=True)

    def __call__(self, h):
        return h + self.fc2(ops.tanh(self.fc1(self.ln(h))))


class ResNetBranch(Module):
    """Per-node branch net for the no-message-passing baselines."""

    def __init__(self, rng, d_in, width, n_blocks, d_field, p_basis):
        self.d_field = d_field
        self.p_basis = p_basis
        self.in_proj = Linear(rng, d_in, width)
        self.blocks = [ResBlock(rng, width) for _ in range(n_blocks)]
        self.head = Linear(rng, width, d_field * p_basis)

    def __call__(self, v):
        h = self.in_proj(v)
        for block in self.blocks:
            h = block(h)
        n = h.shape[0]
        return ops.reshape(self.head(h), (n, self.d_field, self.p_basis))


def _single_level_batch(x_tan, a0, u0):
    n = x_tan.shape[0]
    return MultiscaleBatch([x_tan], [u0], [a0], [], x_tan, u0,
                           np.zeros(n, dtype=np.int64), [n])


class ForecastModel(Module):
    def __init__(self, rng, cfg):
        if cfg.variant == "GP":
            raise ModelError("the GP baseline is handled by renops.gp, "
                             "not the neural model zoo")
        self.cfg = cfg
        self.lift = FunctionLift(cfg.q_lift, cfg.lift_length_scale,
                                 cfg.lift_grid_n, seed=cfg.frozen_seed)
        frozen = np.random.default_rng(cfg.frozen_seed + 1)
        self.ff = FourierFeatures(frozen, cfg.m_fourier, 1 + cfg.d_field,
                                  cfg.fourier_scale)
        d_func = cfg.m_hist * cfg.q_lift

        if cfg.variant == "ROMA":
            self.renorm = Renormalizer(rng, cfg.d_in, cfg.n_feat,
                                       cfg.level_sizes, cfg.mpnn_hidden,
                                       cfg.curvature)
            self.linkpred = LinkPredictor(cfg.curvature)
        elif cfg.variant in MP_VARIANTS:
            self.precoder = MpnnStack(rng, [cfg.d_in, 2 * cfg.n_feat,
                                            cfg.n_feat], "euclidean")
        else:
            self.feat_proj = Linear(rng, cfg.d_in, cfg.n_feat)

        if cfg.variant in MP_VARIANTS:
            self.pos = PositionalEmbedding(
                rng, d_func, len(cfg.level_sizes) + 1, cfg.n_rows,
                cfg.n_feat, PositionalConfig.from_name(cfg.pe_setting))
            self.encoder = TransformerEncoder(
                rng, d_func, cfg.width, cfg.heads, cfg.n_blocks,
                cfg.d_field, cfg.p_basis)
        else:
            self.branch = ResNetBranch(rng, d_func, cfg.width,
                                       cfg.resnet_blocks, cfg.d_field,
                                       cfg.p_basis)

        trunk_args = (cfg.m_fourier, cfg.n_feat, cfg.trunk_width,
                      cfg.trunk_depth, cfg.d_field, cfg.p_basis)
        if cfg.variant in NOMAD_VARIANTS:
            self.decoder = NomadDecoder(rng, *trunk_args, ff=self.ff)
        else:
            self.trunk = Trunk(rng, *trunk_args, ff=self.ff)

        if cfg.dynamics == "blackbox":
            self.dynamics = BlackBoxDynamics(rng, *trunk_args, ff=self.ff)
        elif cfg.dynamics == "graybox":
            self.dynamics = GrayBoxDynamics(rng, *trunk_args, ff=self.ff)
        else:
            self.dynamics = None

    # -- conditioning ------------------------------------------------------

    def condition(self, feats, a0, u_hist, edge_dst, edge_src,
                  capture_attention=False):
        """feats (N, d_in), a0 (N, N), u_hist (N, m) -> Conditioned."""
        cfg = self.cfg
        if cfg.variant == "ROMA":
            batch = self.renorm(feats, a0, u_hist, edge_dst, edge_src)
            x_tan, u_all, tags = batch.xbar_tan, batch.ubar, batch.tags
        elif cfg.variant in MP_VARIANTS:
            x_tan = self.precoder(feats, edge_dst, edge_src)
            batch = _single_level_batch(x_tan, a0, u_hist)
            u_all, tags = u_hist, batch.tags
        else:
            x_tan = self.feat_proj(feats)
            batch = _single_level_batch(x_tan, a0, u_hist)
            u_all, tags = u_hist, batch.tags

        maps = None
        if cfg.variant in MP_VARIANTS:
            v = self.lift(u_all)
            b_bar, maps = self.encoder(self.pos(v, x_tan, tags),
                                       capture_attention)
        else:
            b_bar = self.branch(self.lift(u_all))
        return Conditioned(batch, b_bar, x_tan, maps)

    # -- decoding ----------------------------------------------------------

    def sigma_fn(self, cond):
        """Coordinate vector (1+d,) -> latent field rows (N', d)."""
        if self.cfg.variant in NOMAD_VARIANTS:
            return lambda v: self.decoder(cond.b_bar, v, cond.x_tan)
        return lambda v: propagate(cond.b_bar, self.trunk(v, cond.x_tan))

    def coordinates(self, t):
        v = np.zeros(1 + self.cfg.d_field)
        v[0] = float(t)
        return Tensor(v)

    def forecast(self, cond, t):
        """Projected field value for every multiscale row at time t."""
        sigma = self.sigma_fn(cond)(self.coordinates(t))
        return project_norm(sigma)

    # -- effective dynamics ------------------------------------------------

    def _g(self, field, cond, v):
        if isinstance(self.dynamics, GrayBoxDynamics):
            _, _, g = self.dynamics(field, cond.b_bar, cond.x_tan, v)
            return g
        return self.dynamics(field, cond.b_bar, cond.x_tan, v)

    def dynamics_residual(self, cond, t):
        """(field bundle, G_D) at v = (t, 0, ..., 0)."""
        if self.dynamics is None:
            raise ModelError(f"{self.cfg.variant} has no dynamics operator")
        v0 = self.coordinates(t)
        field = field_derivatives(self.sigma_fn(cond), self.cfg.d_field,
                                  v0=v0)
        return field, self._g(field, cond, v0)

    def residual_fn(self, cond):
        """v -> f(v) = d_t sigma - G_D, for the gradient regularizer."""
        if self.dynamics is None:
            raise ModelError(f"{self.cfg.variant} has no dynamics operator")

        def f(v):
            field = field_derivatives(self.sigma_fn(cond), self.cfg.d_field,
                                      v0=v)
            return field.dt - self._g(field, cond, v)

        return f


def build_model(cfg, seed=0):
    return ForecastModel(np.random.default_rng(seed), cfg)


def transplant_forecast(src, dst):
    """Copy every forecast-path parameter of src into dst.

    src may carry extra modules (the effective dynamics); dst must not have
    any parameter src lacks."""
    state = src.state_dict()
    own = dict(dst.named_parameters())
    missing = set(own) - set(state)
    if missing:
        raise ModelError(f"transplant target wants unknown parameters: "
                         f"{sorted(missing)}")
    for key, p in own.items():
        if p.data.shape != state[key].shape:
            raise ModelError(f"{key}: shape {state[key].shape} != "
                             f"{p.data.shape}")
        p.data = state[key].copy()


def equalize_width(cfg, target_params, max_mult=64):
    """Scale transformer/trunk widths so the parameter count approaches
    target_params; returns (adjusted config, achieved count).

    Width moves in multiples of cfg.heads; the trunk width follows the same
    multiplier. Intended for desk-scale parameter matching of the baselines
    against ROMA, so the search stays in small models."""
    if target_params < 1:
        raise ModelError("target parameter count must be positive")

    def count(mult):
        c = dataclasses.replace(cfg, width=mult * cfg.heads,
                                trunk_width=mult * cfg.heads)
        return build_model(c, seed=0).n_params()

    lo, hi = 1, 2
    while count(hi) < target_params and hi < max_mult:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count(mid) < target_params:
            lo = mid
        else:
            hi = mid
    best = min((lo, hi), key=lambda m: abs(count(m) - target_params))
    adjusted = dataclasses.replace(cfg, width=best * cfg.heads,
                                   trunk_width=best * cfg.heads)
    return adjusted, count(best)


def save_checkpoint(path, model, extra_meta=None):
    meta = {"model": model.cfg.to_dict()}
    if extra_meta:
        meta.update(extra_meta)
    blocks = {k: p.data for k, p in model.named_parameters()}
    container.write(path, "checkpoint", meta, blocks)


def load_checkpoint(path):
    """Returns (model, meta); the model is rebuilt from the stored config
    and loaded with the stored parameters."""
    _, meta, blocks = container.read(path, expect_kind="checkpoint")
    cfg = ModelConfig.from_dict(meta["model"])
    model = build_model(cfg, seed=0)
    model.load_state_dict(blocks)
    return model, meta
