"""The full refinement network: kinematic features, encoder and decoder."""

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .decoder import (
    DecoderOutput,
    decode_final,
    derivative_features,
    init_decoder_params,
    interpolate_values,
)
from .encoder import EncoderOutput, encode, init_encoder_params
from .errors import ConfigError, DimensionError
from .kinematics import kinematic_features
from .layers import iter_parameters


@dataclass
class ModelOutput:
    encoder: EncoderOutput
    decoder: DecoderOutput

    @property
    def refined(self):
        return self.encoder.refined

    @property
    def final(self):
        return self.decoder.poses


class HanetModel:
    """Parameter set plus forward pass.

    Inputs are sampled poses ``[B, T', K*D]``; outputs carry the refined
    sampled poses ``[B, T', K*D]`` and the final full-rate poses
    ``[B, T, K*D]``.
    """

    def __init__(self, cfg, seed=0):
        self.cfg = cfg.validate()
        rng = tn.default_rng(seed)
        self.encoder = init_encoder_params(cfg, rng)
        self.decoder = init_decoder_params(cfg, rng)

    def named_parameters(self):
        yield from iter_parameters(self.encoder, "encoder.")
        yield from iter_parameters(self.decoder, "decoder.")

    def parameters(self):
        return dict(self.named_parameters())

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise ConfigError(f"checkpoint parameters do not match model: missing {missing}, unexpected {extra}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ConfigError(f"parameter {name}: checkpoint shape {arr.shape} vs model {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def __call__(self, p):
        return self.forward(p)

    def forward(self, p):
        cfg = self.cfg
        p = np.asarray(p, dtype=cfg.dtype)
        if p.ndim == 2:
            p = p[None]
        if p.shape[-2:] != (cfg.n_sampled, cfg.features):
            raise DimensionError(
                f"model expects sampled poses [..., {cfg.n_sampled}, {cfg.features}], got {p.shape}"
            )
        feats = kinematic_features(p, cfg.d_t)
        center = p.mean(axis=-2, keepdims=True) if cfg.center_inputs else None
        enc = encode(p, feats, self.encoder, cfg, center=center)

        v = feats.velocity_prev if cfg.velocity_direction == "prev" else feats.velocity_next
        a = feats.acceleration
        zero = np.zeros_like(p)
        v = v if cfg.use_velocity else zero
        a = a if cfg.use_acceleration else zero
        S_v, S_a = derivative_features(v.astype(cfg.dtype), a.astype(cfg.dtype), self.decoder, cfg.use_wb)

        dec = self.decoder
        V, up = interpolate_values(
            enc.refined, dec.WP, dec.value_conv, dec.E_pos0, return_upsampled=True, center=center
        )
        out = decode_final(
            V,
            S_v,
            S_a,
            enc.offset_mean,
            dec,
            cfg.heads,
            cfg.leaky_slope,
            cfg.ln_eps,
            z0=enc.z_levels[0] if cfg.memory_with_embedding else None,
            base=up if cfg.decoder_residual else None,
        )
        return ModelOutput(encoder=enc, decoder=out)

    def predict(self, p):
        """Forward without recording a graph; returns plain arrays ``(refined, final)``."""
        with tn.no_grad():
            out = self.forward(p)
        return out.refined.data, out.final.data
