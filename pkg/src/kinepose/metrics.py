"""PCK, MPJPE and acceleration error over pose arrays ``[T, K, D]``."""

from dataclasses import dataclass, field

import numpy as np

PCK_THRESHOLDS = (0.2, 0.1, 0.05)

# Table layout used when reporting per-group PCK on 15-joint skeletons.
JHMDB_JOINTS = [
    "neck", "belly", "head", "r_shoulder", "l_shoulder", "r_hip", "l_hip",
    "r_elbow", "l_elbow", "r_knee", "l_knee", "r_wrist", "l_wrist", "r_ankle", "l_ankle",
]
JHMDB_GROUPS = {
    "Head": [2],
    "Sho.": [3, 4],
    "Elb.": [7, 8],
    "Wri.": [11, 12],
    "Hip": [5, 6],
    "Knee": [9, 10],
    "Ank.": [13, 14],
}


@dataclass
class MetricReport:
    pck: dict = field(default_factory=dict)  # threshold -> {"mean": v, group: v}; None when undefined
    mpjpe: float = None
    accel: float = None
    counts: dict = field(default_factory=dict)
    excluded_frames: int = 0

    def as_dict(self):
        return {
            "pck": {str(t): v for t, v in self.pck.items()},
            "mpjpe": self.mpjpe,
            "accel": self.accel,
            "counts": self.counts,
            "excluded_frames": self.excluded_frames,
        }


def _prep(pred, gt, vis=None):
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    if vis is None:
        vis = np.ones(gt.shape[:-1], dtype=bool)
    vis = np.asarray(vis, dtype=bool)
    if vis.shape != gt.shape[:-1]:
        raise ValueError(f"visibility {vis.shape} vs poses {gt.shape}")
    return pred, gt, vis


def bbox_diagonal(gt, vis=None):
    """Per-frame diagonal of the tight box around the visible ground-truth joints."""
    gt = np.asarray(gt, dtype=float)
    if vis is None:
        vis = np.ones(gt.shape[:-1], dtype=bool)
    out = np.zeros(gt.shape[0])
    for t in range(gt.shape[0]):
        pts = gt[t][vis[t]]
        if len(pts):
            out[t] = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    return out


def pck(pred, gt, vis=None, bbox_size=None, thresholds=PCK_THRESHOLDS, groups=None):
    """Fraction of visible joints within ``threshold * bbox_size`` of ground truth.

    Returns ``(scores, counts, excluded)`` where ``scores[thr]`` maps ``"mean"``
    and each group name to a value in [0, 1], or ``None`` when no joint was
    evaluated. Frames with non-positive bbox size are excluded and counted.
    """
    pred, gt, vis = _prep(pred, gt, vis)
    if bbox_size is None:
        bbox_size = bbox_diagonal(gt, vis)
    bbox = np.broadcast_to(np.asarray(bbox_size, dtype=float), (gt.shape[0],))
    valid_frames = bbox > 0
    excluded = int((~valid_frames).sum())
    mask = vis & valid_frames[:, None]
    dist = np.linalg.norm(pred - gt, axis=-1)
    ratio = dist / np.where(valid_frames, bbox, 1.0)[:, None]
    groups = dict(groups or {})
    counts = {"mean": int(mask.sum())}
    for name, joints in groups.items():
        counts[name] = int(mask[:, joints].sum())
    scores = {}
    for thr in thresholds:
        hit = (ratio < thr) & mask
        row = {"mean": float(hit.sum() / mask.sum()) if mask.any() else None}
        for name, joints in groups.items():
            n = mask[:, joints].sum()
            row[name] = float(hit[:, joints].sum() / n) if n else None
        scores[thr] = row
    return scores, counts, excluded


def mpjpe(pred, gt, vis=None):
    """Mean L2 distance over visible (frame, joint) pairs; ``None`` if none are visible."""
    pred, gt, vis = _prep(pred, gt, vis)
    if not vis.any():
        return None
    return float(np.linalg.norm(pred - gt, axis=-1)[vis].mean())


def second_difference(x):
    x = np.asarray(x, dtype=float)
    return x[2:] - 2.0 * x[1:-1] + x[:-2]


def accel_error(pred, gt):
    """Mean norm of the second-difference discrepancy per (frame, joint); ``None`` if T < 3."""
    pred, gt, _ = _prep(pred, gt)
    if pred.shape[0] < 3:
        return None
    return float(np.linalg.norm(second_difference(pred) - second_difference(gt), axis=-1).mean())


def evaluate(pred, gt, vis=None, bbox_size=None, thresholds=PCK_THRESHOLDS, groups=None):
    pred, gt, vis = _prep(pred, gt, vis)
    scores, counts, excluded = pck(pred, gt, vis, bbox_size, thresholds, groups)
    return MetricReport(
        pck=scores,
        mpjpe=mpjpe(pred, gt, vis),
        accel=accel_error(pred, gt),
        counts=counts,
        excluded_frames=excluded,
    )


def format_report(report, groups=None, title="refined"):
    """Text table: per-group PCK at the largest threshold, mean PCK at each threshold, MPJPE, Accel."""
    groups = list(groups or [])
    thrs = sorted(report.pck, reverse=True)

    def pct(v):
        return "-" if v is None else f"{100 * v:.1f}"

    def num(v):
        return "-" if v is None else f"{v:.6g}"

    lines = []
    if thrs:
        top = thrs[0]
        head = ["Method"] + [f"{g}@{top:g}" for g in groups] + [f"PCK@{t:g}" for t in thrs] + ["MPJPE", "Accel"]
        row = [title] + [pct(report.pck[top].get(g)) for g in groups]
        row += [pct(report.pck[t]["mean"]) for t in thrs] + [num(report.mpjpe), num(report.accel)]
        widths = [max(len(a), len(b)) for a, b in zip(head, row)]
        lines.append("  ".join(h.ljust(w) for h, w in zip(head, widths)))
        lines.append("  ".join(r.ljust(w) for r, w in zip(row, widths)))
    if report.excluded_frames:
        lines.append(f"excluded frames (zero bbox): {report.excluded_frames}")
    return "\n".join(lines)
