"""
Optimization loop: AdamW with decoupled weight decay, linear warmup followed by
cosine annealing, global-norm gradient clipping, checkpoints and per-epoch
history records.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .config import TrainConfig, to_dict, train_config_from_dict
from .data import build_windows, split_by_sequence
from .errors import ConfigError, NumericalError
from .inference import evaluate_model
from .loss import compute_losses
from .model import HanetModel

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def lr_at(step, cfg, steps_per_epoch=1):
    """Learning rate at optimizer step ``step`` (0-based).

    Ramps linearly from 0 to ``lr_init`` over the warmup epochs, then follows
    a half cosine down to 0 at the last step of the last epoch.
    """
    warm = cfg.warmup_epochs * steps_per_epoch
    last = cfg.total_epochs * steps_per_epoch - 1
    if step < warm:
        return cfg.lr_init * step / warm
    if last <= warm:
        return cfg.lr_init
    progress = min((step - warm) / (last - warm), 1.0)
    return cfg.lr_init * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class Moments:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adamw_step(params, grads, moments, lr, cfg):
    """One AdamW update of the arrays in ``params`` (in place).

    Returns False and leaves everything untouched if any gradient is non-finite.
    Parameters without a gradient entry are skipped.
    """
    if any(not np.all(np.isfinite(g)) for g in grads.values()):
        return False
    moments.t += 1
    t = moments.t
    b1, b2 = cfg.beta1, cfg.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    for name, g in grads.items():
        p = params[name]
        m = moments.m[name]
        v = moments.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p *= 1.0 - lr * cfg.weight_decay
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return True


def clip_grad_norm(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


@dataclass
class Checkpoint:
    params: dict
    moments: Moments
    epoch: int
    step: int
    config: dict
    history: list = field(default_factory=list)
    version: int = CHECKPOINT_VERSION

    @property
    def train_config(self):
        return train_config_from_dict(self.config)

    def manifest(self):
        return {
            "version": self.version,
            "epoch": self.epoch,
            "step": self.step,
            "adam_t": self.moments.t,
            "parameters": [[k, list(v.shape), str(v.dtype)] for k, v in self.params.items()],
            "config": self.config,
            "history": self.history,
        }


def save_checkpoint(ckpt, path):
    arrays = {"__manifest__": np.array(json.dumps(ckpt.manifest()))}
    for k, v in ckpt.params.items():
        arrays[f"param/{k}"] = v
        arrays[f"m/{k}"] = ckpt.moments.m[k]
        arrays[f"v/{k}"] = ckpt.moments.v[k]
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        if "__manifest__" not in z:
            raise ConfigError(f"{path}: not a checkpoint (no manifest)")
        man = json.loads(str(z["__manifest__"]))
        if man.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {man.get('version')}")
        params, m, v = {}, {}, {}
        for name, shape, _ in man["parameters"]:
            params[name] = z[f"param/{name}"]
            if list(params[name].shape) != shape:
                raise ConfigError(f"{path}: parameter {name} has shape {params[name].shape}, manifest says {shape}")
            m[name] = z[f"m/{name}"]
            v[name] = z[f"v/{name}"]
    return Checkpoint(
        params=params,
        moments=Moments(m, v, man["adam_t"]),
        epoch=man["epoch"],
        step=man["step"],
        config=man["config"],
        history=man.get("history", []),
    )


def model_from_checkpoint(ckpt):
    cfg = ckpt.train_config
    model = HanetModel(cfg.model, seed=cfg.seed)
    model.load_state_dict(ckpt.params)
    return model


class Trainer:
    def __init__(self, cfg: TrainConfig, model=None):
        self.cfg = cfg.validate()
        self.model = model or HanetModel(cfg.model, seed=cfg.seed)
        self.params = self.model.parameters()
        self.trainable = [
            k for k in self.params if not any(k.startswith(prefix) for prefix in cfg.freeze)
        ]
        self.moments = Moments.zeros_like({k: p.data for k, p in self.params.items()})
        self.epoch = 0
        self.step = 0
        self.skipped_steps = 0
        self.history = []

    @classmethod
    def from_checkpoint(cls, ckpt):
        trainer = cls(ckpt.train_config, model_from_checkpoint(ckpt))
        trainer.moments = Moments(
            {k: np.array(a) for k, a in ckpt.moments.m.items()},
            {k: np.array(a) for k, a in ckpt.moments.v.items()},
            ckpt.moments.t,
        )
        trainer.epoch, trainer.step = ckpt.epoch, ckpt.step
        trainer.history = list(ckpt.history)
        return trainer

    def checkpoint(self):
        return Checkpoint(
            params=self.model.state_dict(),
            moments=Moments(
                {k: a.copy() for k, a in self.moments.m.items()},
                {k: a.copy() for k, a in self.moments.v.items()},
                self.moments.t,
            ),
            epoch=self.epoch,
            step=self.step,
            config=to_dict(self.cfg),
            history=list(self.history),
        )

    def losses(self, x, y, vis, sampled_idx):
        out = self.model(x)
        return compute_losses(out, y, vis, sampled_idx, self.cfg.loss)

    def train_step(self, x, y, vis, sampled_idx, lr):
        self.model.zero_grad()
        report = self.losses(x, y, vis, sampled_idx)
        if not math.isfinite(report.total):
            raise NumericalError(f"non-finite training loss at step {self.step}")
        tn.backward(report.total_tensor)
        report.total_tensor = None
        grads = {}
        for k in self.trainable:
            g = self.params[k].grad
            grads[k] = np.zeros_like(self.params[k].data) if g is None else g
        if self.cfg.grad_clip > 0 and all(np.all(np.isfinite(g)) for g in grads.values()):
            clip_grad_norm(grads, self.cfg.grad_clip)
        ok = adamw_step({k: self.params[k].data for k in self.trainable}, grads, self.moments, lr, self.cfg)
        if not ok:
            self.skipped_steps += 1
            log.warning("skipped step %d: non-finite gradient", self.step)
        self.step += 1
        return report

    def run_epoch(self, ws):
        cfg = self.cfg
        n = len(ws)
        spe = steps_per_epoch(n, cfg.batch_size)
        order = tn.default_rng([cfg.seed, self.epoch]).permutation(n)
        sums = {"weighted_refined": 0.0, "weighted_final": 0.0, "online": 0.0, "total": 0.0}
        lr = 0.0
        for b in range(spe):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            lr = lr_at(self.step, cfg, spe)
            rep = self.train_step(ws.inputs[idx], ws.targets[idx], ws.vis[idx], ws.sampled_idx, lr)
            for k in sums:
                sums[k] += getattr(rep, k) * len(idx)
        self.epoch += 1
        record = {"epoch": self.epoch, "step": self.step, "lr": lr}
        record.update({k: v / n for k, v in sums.items()})
        record["skipped_steps"] = self.skipped_steps
        return record

    def fit(self, train_ws, val_pairs=(), out_dir=None, on_epoch=None):
        cfg = self.cfg
        if len(train_ws) == 0:
            raise ConfigError("training set has no windows")
        last_good = None
        while self.epoch < cfg.total_epochs:
            try:
                record = self.run_epoch(train_ws)
            except NumericalError:
                if out_dir and last_good:
                    log.error("training diverged; last good checkpoint kept at %s", last_good)
                raise
            if val_pairs and cfg.eval_every and (self.epoch % cfg.eval_every == 0 or self.epoch == cfg.total_epochs):
                for k, v in evaluate_model(self.model, val_pairs).items():
                    record[f"val_{k}"] = v
            self.history.append(record)
            if on_epoch:
                on_epoch(record)
            if out_dir and cfg.checkpoint_every and self.epoch % cfg.checkpoint_every == 0:
                last_good = os.path.join(out_dir, "checkpoint.npz")
                save_checkpoint(self.checkpoint(), last_good)
        return self.history


def steps_per_epoch(n_windows, batch_size):
    return max(math.ceil(n_windows / batch_size), 1)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list
    model: HanetModel
    train_pairs: list
    val_pairs: list


def prepare(cfg, dataset):
    train_pairs, val_pairs = split_by_sequence(dataset, cfg.val_fraction, cfg.seed)
    m = cfg.model
    ws = build_windows(train_pairs, m.T, m.N, cfg.window_stride, cfg.annotate_every)
    if ws.skipped:
        log.info("skipped %d sequences shorter than T=%d", ws.skipped, m.T)
    return ws, train_pairs, val_pairs


def train(cfg, dataset, out_dir=None, resume=None, on_epoch=None):
    """Train on ``(clean, corrupted)`` pairs; returns the final checkpoint and history."""
    if not dataset:
        raise ConfigError("dataset is empty")
    trainer = Trainer.from_checkpoint(resume) if resume is not None else Trainer(cfg)
    ws, train_pairs, val_pairs = prepare(trainer.cfg, dataset)
    trainer.fit(ws, val_pairs, out_dir=out_dir, on_epoch=on_epoch)
    ckpt = trainer.checkpoint()
    if out_dir:
        save_checkpoint(ckpt, os.path.join(out_dir, "checkpoint.npz"))
    return TrainResult(ckpt, trainer.history, trainer.model, train_pairs, val_pairs)
