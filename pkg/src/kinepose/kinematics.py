"""
Keypoint kinematic features computed from pose windows.

All feature functions take arrays shaped ``[..., T', F]`` (time on the
second-to-last axis, flattened ``K*D`` coordinates last) and return arrays of
the same shape. Neighbour indices ``t +/- d_t`` that fall outside the window
are clamped to the nearest valid frame (replicate padding), so a clamped
difference step contributes zero.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ConfigError, DimensionError


@dataclass
class PoseSequence:
    """``T`` frames of ``K`` keypoints in ``D`` dimensions with per-joint visibility.

    Coordinates are in normalized units: a fraction of the bounding-box side
    for 2-D data, millimetres for 3-D data.
    """

    coords: np.ndarray
    visibility: np.ndarray = None
    seq_id: str = ""
    source: str = ""
    fps: float = 30.0
    joint_names: list = field(default_factory=list)
    joint_groups: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 3:
            raise DimensionError(f"coords must be T x K x D, got shape {self.coords.shape}")
        t, k, d = self.coords.shape
        if t < 1 or k < 1:
            raise DimensionError(f"need at least one frame and one keypoint, got shape {self.coords.shape}")
        if d not in (2, 3):
            raise DimensionError(f"coordinate dimension must be 2 or 3, got {d}")
        if self.visibility is None:
            self.visibility = np.ones((t, k), dtype=bool)
        self.visibility = np.asarray(self.visibility, dtype=bool)
        if self.visibility.shape != (t, k):
            raise DimensionError(f"visibility shape {self.visibility.shape} does not match coords {(t, k)}")
        bad = self.visibility & ~np.isfinite(self.coords).all(axis=-1)
        if bad.any():
            f, j = np.argwhere(bad)[0]
            raise ValueError(f"non-finite coordinate at visible joint {j} of frame {f}")
        if not self.joint_names:
            self.joint_names = [f"joint{j}" for j in range(k)]
        if len(self.joint_names) != k:
            raise DimensionError(f"{len(self.joint_names)} joint names for {k} keypoints")

    @property
    def frames(self):
        return self.coords.shape[0]

    @property
    def keypoints(self):
        return self.coords.shape[1]

    @property
    def dims(self):
        return self.coords.shape[2]

    def flat(self):
        """Coordinates as ``T x (K*D)``."""
        return self.coords.reshape(self.frames, -1)

    def with_coords(self, coords, source=None):
        return PoseSequence(
            coords=coords,
            visibility=self.visibility.copy(),
            seq_id=self.seq_id,
            source=self.source if source is None else source,
            fps=self.fps,
            joint_names=list(self.joint_names),
            joint_groups={g: list(v) for g, v in self.joint_groups.items()},
        )


@dataclass
class KinematicFeatures:
    flow: np.ndarray
    velocity_prev: np.ndarray
    velocity_next: np.ndarray
    acceleration: np.ndarray
    interval: int = 1


def sample_indices(T, N):
    """Frame offsets ``0, N, 2N, ...`` of the ``floor(T/N)`` sampled inputs."""
    if N < 1:
        raise ConfigError(f"sampling interval N must be >= 1, got {N}")
    n = T // N
    if n < 1:
        raise ConfigError(f"window T={T} holds no samples at interval N={N}")
    return np.arange(n) * N


def sample_window(seq, T, N, start=0):
    """Sampled poses ``[T//N, K*D]`` of the window at ``start`` plus their frame indices."""
    if T < 1 or start < 0 or start + T > seq.frames:
        raise BoundsError(
            f"window [{start}, {start + T}) exceeds sequence of {seq.frames} frames"
        )
    idx = start + sample_indices(T, N)
    return seq.flat()[idx], idx


def _clamped(T, offsets):
    return np.clip(np.arange(T) + offsets, 0, T - 1)


def _check_interval(d_t):
    if int(d_t) != d_t or d_t < 1:
        raise ConfigError(f"interval d_t must be a positive integer, got {d_t}")
    return int(d_t)


def shift(p, d):
    """``p[t + d]`` along the time axis with clamped indices."""
    p = np.asarray(p)
    return np.take(p, _clamped(p.shape[-2], d), axis=-2)


def compute_flow(p, d_t=1):
    """Centered three-point average ``(P_t + P_{t+d} + P_{t-d}) / 3``.

    Evaluated as ``P_t`` plus the mean neighbour difference so that constant
    tracks come back bit-for-bit.
    """
    d_t = _check_interval(d_t)
    p = np.asarray(p, dtype=float)
    return p + ((shift(p, d_t) - p) + (shift(p, -d_t) - p)) / 3.0


def compute_velocity(p, d_t=1, direction="prev"):
    d_t = _check_interval(d_t)
    p = np.asarray(p, dtype=float)
    if direction == "prev":
        return (p - shift(p, -d_t)) / d_t
    if direction == "next":
        return (shift(p, d_t) - p) / d_t
    raise ConfigError(f"velocity direction must be 'prev' or 'next', got {direction!r}")


def compute_acceleration(v, d_t=1):
    d_t = _check_interval(d_t)
    v = np.asarray(v, dtype=float)
    return (v - shift(v, -d_t)) / d_t


def kinematic_features(p, d_t=1):
    v_prev = compute_velocity(p, d_t, "prev")
    return KinematicFeatures(
        flow=compute_flow(p, d_t),
        velocity_prev=v_prev,
        velocity_next=compute_velocity(p, d_t, "next"),
        acceleration=compute_acceleration(v_prev, d_t),
        interval=d_t,
    )
