"""
Kinematic decoder: derivative features and encoder offsets form the attention
memory; the refined poses, upsampled to the full frame rate, form the query
stream. The output is projected back to pose coordinates.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .errors import DimensionError
from .layers import (
    AttentionParams,
    Conv1dParams,
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
class DecoderLayerParams:
    norm1: NormParams
    self_attn: AttentionParams
    norm2: NormParams
    cross_attn: AttentionParams
    norm3: NormParams
    mlp: MLPParams


@dataclass
class DecoderParams:
    wv: DiffTensor  # KD x KD
    bv: DiffTensor
    wa: DiffTensor
    ba: DiffTensor
    WP: DiffTensor  # T x T' temporal interpolation
    value_conv: Conv1dParams  # KD -> C
    E_pos0: DiffTensor  # T x C
    WM: DiffTensor  # 3KD (+C) x C
    layers: list
    final_norm: NormParams
    WD: DiffTensor  # C x KD


@dataclass
class DecoderOutput:
    poses: DiffTensor  # T x KD, the final poses
    self_attention: list = field(default_factory=list)
    cross_attention: list = field(default_factory=list)


def linear_interpolation_matrix(T, N):
    """``T x floor(T/N)`` weights reconstructing every frame from stride-``N`` samples.

    Frames past the last sample hold its value. Rows sum to one.
    """
    n = T // N
    W = np.zeros((T, n))
    for t in range(T):
        s = t / N
        i = int(np.floor(s))
        if i >= n - 1:
            W[t, n - 1] = 1.0
            continue
        frac = s - i
        W[t, i] = 1.0 - frac
        W[t, i + 1] = frac
    return W


def init_decoder_params(cfg, rng):
    dtype = np.dtype(cfg.dtype)
    F, C = cfg.features, cfg.C
    mem_in = 3 * F + (C if cfg.memory_with_embedding else 0)
    layers = [
        DecoderLayerParams(
            norm1=init_norm(C, dtype),
            self_attn=init_attention(rng, C, dtype),
            norm2=init_norm(C, dtype),
            cross_attn=init_attention(rng, C, dtype),
            norm3=init_norm(C, dtype),
            mlp=init_mlp(rng, C, cfg.mlp_ratio * C, dtype),
        )
        for _ in range(cfg.n_decoder_layers)
    ]
    return DecoderParams(
        wv=uniform(rng, F, (F, F), dtype),
        bv=zeros(F, dtype),
        wa=uniform(rng, F, (F, F), dtype),
        ba=zeros(F, dtype),
        WP=tn.parameter(linear_interpolation_matrix(cfg.T, cfg.N), dtype=dtype),
        value_conv=init_conv(rng, F, C, dtype),
        E_pos0=zeros((cfg.T, C), dtype),
        WM=uniform(rng, mem_in, (mem_in, C), dtype),
        layers=layers,
        final_norm=init_norm(C, dtype),
        WD=zeros((C, F), dtype),
    )


def derivative_features(v, a, params, use_wb=True):
    """Velocity and squared-acceleration features.

    With ``use_wb`` the per-timestep affine maps are applied; without it the
    raw velocity and squared acceleration pass through.
    """
    v, a = tn.tensor(v), tn.tensor(a)
    F = params.wv.shape[0]
    if v.shape[-1] != F or a.shape[-1] != F:
        raise DimensionError(f"derivative_features: v {v.shape}, a {a.shape} vs feature width {F}")
    a2 = tn.square(a)
    if not use_wb:
        return v, a2
    return tn.conv1d_time(v, params.wv, params.bv), tn.conv1d_time(a2, params.wa, params.ba)


def upsample(p, WP):
    p = tn.tensor(p)
    if p.shape[-2] != WP.shape[1]:
        raise DimensionError(f"interpolation matrix {WP.shape} cannot upsample {p.shape[-2]} sampled frames")
    return tn.matmul(WP, p)


def interpolate_values(p_refined, WP, value_conv, E_pos0, return_upsampled=False, center=None):
    """Upsample refined poses to the full rate and embed them as the value stream.

    ``center`` is subtracted from the upsampled poses before embedding.
    """
    up = upsample(p_refined, WP)
    if E_pos0.shape[0] != WP.shape[0]:
        raise DimensionError(f"value positional embedding {E_pos0.shape} vs {WP.shape[0]} frames")
    src = up if center is None else tn.sub(up, center)
    V = tn.add(tn.conv1d_time(src, value_conv.w, value_conv.b), E_pos0)
    return (V, up) if return_upsampled else V


def decode_final(V, S_v, S_a, X, params, heads, slope=0.01, eps=1e-5, z0=None, base=None):
    """Cross-attention decoder.

    The memory is ``(S_v; S_a; X) @ WM`` (with ``z0`` appended when given);
    ``V`` is the query stream. ``base``, when given, is added to the projected
    output as a residual.
    """
    blocks = [tn.tensor(x) for x in (S_v, S_a, X)]
    if z0 is not None:
        blocks.append(tn.tensor(z0))
    if len({b.shape[:-1] for b in blocks}) != 1:
        raise DimensionError("decode_final: memory inputs differ in leading shape: " + ", ".join(str(b.shape) for b in blocks))
    mem_in = sum(b.shape[-1] for b in blocks)
    if mem_in != params.WM.shape[0]:
        raise DimensionError(f"decode_final: memory width {mem_in} does not match WM {params.WM.shape}")
    memory = tn.matmul(tn.concat(blocks, axis=-1), params.WM)
    x = tn.tensor(V)
    if x.shape[-1] != params.WM.shape[1]:
        raise DimensionError(f"decode_final: value stream {x.shape} vs model width {params.WM.shape[1]}")
    self_maps, cross_maps = [], []
    for lp in params.layers:
        h = norm(x, lp.norm1, eps)
        a, w_self = attention(h, h, lp.self_attn, heads)
        x = tn.add(x, a)
        a, w_cross = attention(norm(x, lp.norm2, eps), memory, lp.cross_attn, heads)
        x = tn.add(x, a)
        x = tn.add(x, mlp(norm(x, lp.norm3, eps), lp.mlp, slope))
        self_maps.append(w_self)
        cross_maps.append(w_cross)
    out = tn.matmul(norm(x, params.final_norm, eps), params.WD)
    if base is not None:
        out = tn.add(base, out)
    return DecoderOutput(poses=out, self_attention=self_maps, cross_attention=cross_maps)
