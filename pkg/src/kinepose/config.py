"""Model, loss and training configuration with dotted-key overrides."""

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError

OFFSET_DIVISORS = ("levels_plus_one", "levels")
ONLINE_NORMS = ("off", "l1", "l2", "l1+l2")


@dataclass
class ModelConfig:
    T: int = 16  # window length in frames
    N: int = 2  # sampling interval inside the window
    K: int = 15
    D: int = 2
    C: int = 16  # initial embedding width
    n_levels: int = 5
    heads: int = 4
    d_t: int = 1  # kinematic interval, in sampled steps
    mlp_ratio: int = 2
    leaky_slope: float = 0.01
    ln_eps: float = 1e-5
    offset_divisor: str = "levels_plus_one"
    decoder_layers: int = 0  # 0 means n_levels
    velocity_direction: str = "prev"
    memory_with_embedding: bool = False
    decoder_residual: bool = True
    center_inputs: bool = True  # subtract the window's mean pose before embedding
    use_flow: bool = True
    use_neighbors: bool = True
    use_velocity: bool = True
    use_acceleration: bool = True
    use_wb: bool = True
    dtype: str = "float64"

    @property
    def n_sampled(self):
        return self.T // self.N

    @property
    def features(self):
        return self.K * self.D

    @property
    def n_decoder_layers(self):
        return self.decoder_layers or self.n_levels

    def level_width(self, level):
        return self.C * 2**level

    def validate(self):
        for name in ("T", "N", "K", "C", "heads", "d_t", "mlp_ratio"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1, got {getattr(self, name)}")
        if self.n_levels < 1:
            raise ConfigError(f"model.n_levels must be >= 1, got {self.n_levels}")
        if self.D not in (2, 3):
            raise ConfigError(f"model.D must be 2 or 3, got {self.D}")
        if self.N > self.T:
            raise ConfigError(f"model.N={self.N} exceeds window length T={self.T}")
        for level in range(self.n_levels + 1):
            if self.level_width(level) % self.heads:
                raise ConfigError(
                    f"level {level} width {self.level_width(level)} is not divisible by heads={self.heads}"
                )
        if self.offset_divisor not in OFFSET_DIVISORS:
            raise ConfigError(f"model.offset_divisor must be one of {OFFSET_DIVISORS}")
        if self.velocity_direction not in ("prev", "next"):
            raise ConfigError("model.velocity_direction must be 'prev' or 'next'")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError("model.dtype must be 'float64' or 'float32'")
        return self


@dataclass
class LossConfig:
    lambda_topk: float = 0.5
    n_topk: int = 0  # 0 means floor(N_j / 2)
    lambda_s: float = 1.0
    online: str = "l1+l2"

    def topk_count(self, n_joints):
        k = self.n_topk or max(n_joints // 2, 1)
        if not 1 <= k <= n_joints:
            raise ConfigError(f"loss.n_topk={k} outside [1, {n_joints}]")
        return k

    def validate(self):
        if self.lambda_topk < 0:
            raise ConfigError(f"loss.lambda_topk must be >= 0, got {self.lambda_topk}")
        if self.lambda_s < 0:
            raise ConfigError(f"loss.lambda_s must be >= 0, got {self.lambda_s}")
        if self.n_topk < 0:
            raise ConfigError(f"loss.n_topk must be >= 0, got {self.n_topk}")
        if self.online not in ONLINE_NORMS:
            raise ConfigError(f"loss.online must be one of {ONLINE_NORMS}, got {self.online!r}")
        return self


@dataclass
class TrainConfig:
    lr_init: float = 1e-3
    warmup_epochs: int = 5
    total_epochs: int = 200
    batch_size: int = 64
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 1.0  # 0 disables
    seed: int = 0
    window_stride: int = 4
    val_fraction: float = 0.2
    annotate_every: int = 1  # supervise every M-th window frame
    checkpoint_every: int = 0
    eval_every: int = 10
    freeze: list = field(default_factory=list)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def validate(self):
        if self.lr_init <= 0:
            raise ConfigError(f"train.lr_init must be > 0, got {self.lr_init}")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ConfigError(
                f"warmup_epochs={self.warmup_epochs} must be in [0, total_epochs={self.total_epochs})"
            )
        if self.batch_size < 1 or self.window_stride < 1 or self.annotate_every < 1:
            raise ConfigError("batch_size, window_stride and annotate_every must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        self.model.validate()
        self.loss.validate()
        return self


def to_dict(cfg):
    return dataclasses.asdict(cfg)


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(
            f"unknown key(s) {', '.join(prefix + k for k in unknown)}; valid keys: "
            + ", ".join(valid_keys(cls, prefix))
        )
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        kwargs[name] = _build(sub, value, f"{prefix}{name}.") if sub else value
    return cls(**kwargs)


_NESTED = {(TrainConfig, "model"): ModelConfig, (TrainConfig, "loss"): LossConfig}


def valid_keys(cls=TrainConfig, prefix=""):
    keys = []
    for f in dataclasses.fields(cls):
        sub = _NESTED.get((cls, f.name))
        if sub:
            keys.extend(valid_keys(sub, f"{prefix}{f.name}."))
        else:
            keys.append(prefix + f.name)
    return keys


def train_config_from_dict(data):
    return _build(TrainConfig, data, "")


def model_config_from_dict(data):
    return _build(ModelConfig, data, "model.")


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data, overrides):
    """Apply ``key.sub=value`` strings to a nested config dict (in place)."""
    allowed = set(valid_keys())
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}; valid keys: " + ", ".join(valid_keys()))
        node = data
        *path, leaf = key.split(".")
        for part in path:
            node = node.setdefault(part, {})
        node[leaf] = parse_value(raw)
    return data
