"""
Synthetic motion sequences with estimator-like corruption, sliding windows and
sequence-level train/validation splits.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import ConfigError
from .kinematics import PoseSequence, sample_indices
from .metrics import JHMDB_GROUPS, JHMDB_JOINTS

DROPOUT_BEHAVIORS = ("hold", "jump")


@dataclass
class SyntheticSpec:
    n_sequences: int = 200
    frames: int = 64
    keypoints: int = 8
    dims: int = 2
    fps: float = 30.0
    # clean motion: per-joint sinusoid mixture around a random rest pose, plus global sway
    n_components: int = 3
    amplitude: float = 0.05
    freq_min: float = 0.1  # Hz
    freq_max: float = 1.0
    sway_amplitude: float = 0.08
    sway_freq_max: float = 0.3
    pose_spread: float = 0.25
    # corruption
    sigma: float = 0.03  # scalar, or one value per joint
    dropout: float = 0.1
    dropout_behavior: str = "hold"
    jump_scale: float = 0.1
    burst_prob: float = 0.0
    burst_scale: float = 0.15
    seed: int = 0

    def sigma_per_joint(self):
        s = np.broadcast_to(np.asarray(self.sigma, dtype=float), (self.keypoints,))
        return s.copy()

    def validate(self):
        for name in ("n_sequences", "frames", "keypoints", "n_components"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.dims not in (2, 3):
            raise ConfigError(f"dims must be 2 or 3, got {self.dims}")
        if self.fps <= 0:
            raise ConfigError(f"fps must be > 0, got {self.fps}")
        try:
            sig = self.sigma_per_joint()
        except ValueError:
            raise ConfigError(f"sigma must be a scalar or {self.keypoints} values") from None
        if (sig < 0).any() or not np.isfinite(sig).all():
            raise ConfigError("sigma must be finite and >= 0")
        for name in ("dropout", "burst_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be a probability in [0, 1], got {p}")
        for name in ("amplitude", "sway_amplitude", "pose_spread", "jump_scale", "burst_scale"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0 < self.freq_min <= self.freq_max or self.sway_freq_max <= 0:
            raise ConfigError("need 0 < freq_min <= freq_max and sway_freq_max > 0")
        if self.dropout_behavior not in DROPOUT_BEHAVIORS:
            raise ConfigError(f"dropout_behavior must be one of {DROPOUT_BEHAVIORS}, got {self.dropout_behavior!r}")
        return self

    def accel_bound(self):
        """Upper bound on the per-joint second-difference norm of clean trajectories."""
        w = 2 * np.pi * self.freq_max / self.fps
        ws = 2 * np.pi * self.sway_freq_max / self.fps
        per_coord = self.n_components * self.amplitude * w**2 + self.sway_amplitude * ws**2
        return float(np.sqrt(self.dims) * per_coord)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown field(s) {', '.join(unknown)}; valid fields: {', '.join(sorted(names))}")
        return cls(**data).validate()


def joint_layout(K):
    if K == len(JHMDB_JOINTS):
        return list(JHMDB_JOINTS), {g: list(v) for g, v in JHMDB_GROUPS.items()}
    return [f"joint{j}" for j in range(K)], {}


def _clean_motion(spec, rng):
    T, K, D = spec.frames, spec.keypoints, spec.dims
    t = np.arange(T, dtype=float)[:, None, None]
    rest = 0.5 + rng.uniform(-spec.pose_spread, spec.pose_spread, size=(K, D))
    coords = np.broadcast_to(rest, (T, K, D)).copy()
    for _ in range(spec.n_components):
        amp = rng.uniform(0.0, spec.amplitude, size=(K, D))
        freq = rng.uniform(spec.freq_min, spec.freq_max, size=(K, D))
        phase = rng.uniform(0.0, 2 * np.pi, size=(K, D))
        coords += amp * np.sin(2 * np.pi * freq * t / spec.fps + phase)
    amp = rng.uniform(0.0, spec.sway_amplitude, size=D)
    freq = rng.uniform(0.0, spec.sway_freq_max, size=D)
    phase = rng.uniform(0.0, 2 * np.pi, size=D)
    coords += amp * np.sin(2 * np.pi * freq * t / spec.fps + phase)
    return coords


def _corrupt(clean, spec, rng):
    T, K, D = clean.shape
    noisy = clean + rng.normal(size=clean.shape) * spec.sigma_per_joint()[None, :, None]
    bursts = rng.random((T, K)) < spec.burst_prob
    jumps = rng.normal(0.0, spec.burst_scale, size=clean.shape)
    noisy = np.where(bursts[..., None], noisy + jumps, noisy)
    dropped = rng.random((T, K)) < spec.dropout
    if spec.dropout_behavior == "hold":
        for t in range(1, T):
            noisy[t, dropped[t]] = noisy[t - 1, dropped[t]]
    else:
        jump = clean + rng.normal(0.0, spec.jump_scale, size=clean.shape)
        noisy = np.where(dropped[..., None], jump, noisy)
    return noisy, ~dropped


def generate(spec):
    """Return ``[(clean, corrupted), ...]`` sequence pairs, deterministic in ``spec.seed``."""
    spec.validate()
    names, groups = joint_layout(spec.keypoints)
    pairs = []
    for i, child in enumerate(np.random.SeedSequence(spec.seed).spawn(spec.n_sequences)):
        rng = tn.default_rng(child)
        clean = _clean_motion(spec, rng)
        noisy, vis = _corrupt(clean, spec, rng)
        common = dict(seq_id=f"seq{i:04d}", fps=spec.fps, joint_names=names, joint_groups=groups)
        pairs.append(
            (
                PoseSequence(clean, np.ones(vis.shape, dtype=bool), source="synthetic-clean", **common),
                PoseSequence(noisy, vis, source="synthetic-corrupted", **common),
            )
        )
    return pairs


def fill_invisible(coords, vis):
    """Replace non-finite coordinates with the nearest earlier (else later) finite value."""
    coords = np.array(coords, dtype=float)
    T, K = coords.shape[:2]
    ok = np.isfinite(coords).all(axis=-1)
    for j in range(K):
        good = np.flatnonzero(ok[:, j])
        if len(good) == 0:
            coords[:, j] = 0.0
            continue
        src = np.searchsorted(good, np.arange(T), side="right") - 1
        src = good[np.clip(src, 0, None)]
        coords[:, j] = coords[src, j]
    return coords


@dataclass
class Window:
    inputs: np.ndarray  # [T', K*D] sampled corrupted poses
    target: np.ndarray  # [T, K*D] full-rate supervision poses
    target_vis: np.ndarray  # [T, K]
    start: int
    sampled_idx: np.ndarray  # relative to the window start
    frame_idx: np.ndarray  # absolute frames of the sampled inputs


def window_starts(frames, T, stride, cover_tail=False):
    if frames < T:
        return []
    starts = list(range(0, frames - T + 1, stride))
    if cover_tail and starts[-1] != frames - T:
        starts.append(frames - T)
    return starts


def annotation_mask(T, every=1):
    m = np.zeros(T, dtype=bool)
    m[::every] = True
    return m


def windows(seq, T, N, stride, target=None, annotate_every=1, cover_tail=False):
    """Yield overlapping windows; inputs come from ``seq``, supervision from ``target``."""
    target = seq if target is None else target
    rel = sample_indices(T, N)
    coords = fill_invisible(seq.coords, seq.visibility).reshape(seq.frames, -1)
    tgt = target.flat()
    ann = annotation_mask(T, annotate_every)
    for s in window_starts(seq.frames, T, stride, cover_tail):
        yield Window(
            inputs=coords[s + rel],
            target=tgt[s : s + T],
            target_vis=target.visibility[s : s + T] & ann[:, None],
            start=s,
            sampled_idx=rel,
            frame_idx=s + rel,
        )


@dataclass
class WindowSet:
    inputs: np.ndarray  # [W, T', F]
    targets: np.ndarray  # [W, T, F]
    vis: np.ndarray  # [W, T, K]
    sampled_idx: np.ndarray
    skipped: int = 0

    def __len__(self):
        return len(self.inputs)


def build_windows(pairs, T, N, stride, annotate_every=1):
    """Stack windows from ``(clean, corrupted)`` pairs; too-short sequences are skipped and counted."""
    xs, ys, vs, skipped = [], [], [], 0
    for clean, noisy in pairs:
        if noisy.frames < T:
            skipped += 1
            continue
        for w in windows(noisy, T, N, stride, target=clean, annotate_every=annotate_every):
            xs.append(w.inputs)
            ys.append(w.target)
            vs.append(w.target_vis)
    rel = sample_indices(T, N)
    if not xs:
        return WindowSet(np.zeros((0, len(rel), 0)), np.zeros((0, T, 0)), np.zeros((0, T, 0), bool), rel, skipped)
    return WindowSet(np.stack(xs), np.stack(ys), np.stack(vs), rel, skipped)


def split_by_sequence(pairs, val_fraction=0.2, seed=0):
    """Seeded split of whole sequences into ``(train, val)``."""
    n = len(pairs)
    order = tn.default_rng(seed).permutation(n)
    n_val = int(round(n * val_fraction))
    if val_fraction > 0 and n > 1:
        n_val = min(max(n_val, 1), n - 1)
    val_ids = set(order[:n_val].tolist())
    train = [p for i, p in enumerate(pairs) if i not in val_ids]
    val = [p for i, p in enumerate(pairs) if i in val_ids]
    return train, val
