"""
Hierarchical attention encoder.

The stacked kinematic inputs are embedded to width ``C``; each of the
``n_levels`` levels doubles the width, adds a learned positional embedding and
runs a pre-norm attention block and a pre-norm MLP block, both residual. Every
level (including the initial embedding) is projected back to pose space as a
positional offset, and the mean offset corrects the input poses.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .errors import ConfigError, DimensionError
from .kinematics import shift
from .layers import (
    AttentionParams,
    MLPParams,
    NormParams,
    attention,
    init_attention,
    init_conv,
    init_mlp,
    init_norm,
    mlp,
    norm,
    uniform,
    zeros,
)
from .tensor import DiffTensor


@dataclass
class LevelParams:
    expand: DiffTensor  # (C*2^(l-1)) x (C*2^l)
    pos: DiffTensor  # T' x (C*2^l)
    norm1: NormParams
    attn: AttentionParams
    norm2: NormParams
    mlp: MLPParams

    @property
    def width(self):
        return self.expand.shape[1]


@dataclass
class EncoderParams:
    W0: DiffTensor  # (K*4D) x C
    levels: list
    offset_heads: list  # n_levels + 1 Conv1dParams, level width -> K*D


@dataclass
class EncoderOutput:
    z_levels: list  # [Z0, Z1_hat, ..., ZNL_hat]
    offsets: list
    offset_mean: DiffTensor
    refined: DiffTensor
    attention: list = field(default_factory=list)


def init_encoder_params(cfg, rng):
    dtype = np.dtype(cfg.dtype)
    F = cfg.features
    W0 = uniform(rng, 4 * F, (4 * F, cfg.C), dtype)
    levels = []
    for level in range(1, cfg.n_levels + 1):
        w_in, w = cfg.level_width(level - 1), cfg.level_width(level)
        levels.append(
            LevelParams(
                expand=uniform(rng, w_in, (w_in, w), dtype),
                pos=zeros((cfg.n_sampled, w), dtype),
                norm1=init_norm(w, dtype),
                attn=init_attention(rng, w, dtype),
                norm2=init_norm(w, dtype),
                mlp=init_mlp(rng, w, cfg.mlp_ratio * w, dtype),
            )
        )
    heads = [init_conv(rng, cfg.level_width(l), F, dtype, zero=True) for l in range(cfg.n_levels + 1)]
    return EncoderParams(W0=W0, levels=levels, offset_heads=heads)


def embed_initial(flow, p_cur, p_next, p_prev, W0):
    """Stack flow, current, next and previous poses along features, project to ``C``."""
    parts = [tn.tensor(x) for x in (flow, p_cur, p_next, p_prev)]
    if len({p.shape for p in parts}) != 1:
        raise DimensionError("embed_initial: inputs differ in shape: " + ", ".join(str(p.shape) for p in parts))
    return tn.matmul(tn.concat(parts, axis=-1), W0)


def encoder_level(z_prev, lp, heads, slope=0.01, eps=1e-5):
    """One hierarchical level; returns the encoded features and attention weights."""
    if z_prev.shape[-1] != lp.expand.shape[0]:
        raise DimensionError(
            f"encoder_level: input width {z_prev.shape[-1]} does not match expansion {lp.expand.shape}"
        )
    if z_prev.shape[-2] != lp.pos.shape[0]:
        raise DimensionError(
            f"encoder_level: {z_prev.shape[-2]} timesteps but positional embedding has {lp.pos.shape[0]}"
        )
    z = tn.add(tn.matmul(z_prev, lp.expand), lp.pos)
    h = norm(z, lp.norm1, eps)
    a, weights = attention(h, h, lp.attn, heads)
    z_bar = tn.add(a, z)
    z_hat = tn.add(mlp(norm(z_bar, lp.norm2, eps), lp.mlp, slope), z_bar)
    return z_hat, weights


def project_offsets(z_levels, offset_heads, divisor="levels_plus_one"):
    """Per-level pose offsets and their combination.

    ``divisor`` selects between dividing the summed offsets by the number of
    offsets actually summed (``levels_plus_one``) or by the number of encoder
    levels (``levels``).
    """
    if len(z_levels) != len(offset_heads):
        raise ConfigError(f"{len(z_levels)} feature levels but {len(offset_heads)} offset heads")
    offsets = [tn.conv1d_time(z, h.w, h.b) for z, h in zip(z_levels, offset_heads)]
    if divisor == "levels_plus_one":
        n = len(offsets)
    elif divisor == "levels":
        n = max(len(offsets) - 1, 1)
    else:
        raise ConfigError(f"unknown offset divisor {divisor!r}")
    total = offsets[0]
    for x in offsets[1:]:
        total = tn.add(total, x)
    return offsets, tn.div(total, float(n))


def refine(p, offset_mean):
    p = tn.tensor(p)
    if p.shape != offset_mean.shape:
        raise DimensionError(f"refine: poses {p.shape} vs offsets {offset_mean.shape}")
    return tn.add(p, offset_mean)


def encode(p, feats, params, cfg, center=None):
    """Full encoder pass over sampled poses ``p [..., T', K*D]``.

    ``center`` (broadcastable to ``p``) is subtracted from every pose-valued
    embedding input; the refined output stays in absolute coordinates.
    """
    p = np.asarray(p, dtype=cfg.dtype)
    c = np.zeros((), dtype=p.dtype) if center is None else center
    zero = np.zeros_like(p)
    flow = feats.flow.astype(cfg.dtype) - c if cfg.use_flow else zero
    if cfg.use_neighbors:
        p_next, p_prev = shift(p, cfg.d_t) - c, shift(p, -cfg.d_t) - c
    else:
        p_next = p_prev = zero
    z = embed_initial(flow, p - c, p_next, p_prev, params.W0)
    z_levels, maps = [z], []
    for lp in params.levels:
        z, weights = encoder_level(z, lp, cfg.heads, cfg.leaky_slope, cfg.ln_eps)
        z_levels.append(z)
        maps.append(weights)
    offsets, offset_mean = project_offsets(z_levels, params.offset_heads, cfg.offset_divisor)
    return EncoderOutput(
        z_levels=z_levels,
        offsets=offsets,
        offset_mean=offset_mean,
        refined=refine(p, offset_mean),
        attention=maps,
    )
