"""Full-sequence refinement with overlapping windows, and sequence-level evaluation."""

import numpy as np

from .data import fill_invisible, window_starts
from .errors import BoundsError, ConfigError
from .kinematics import sample_indices
from .metrics import PCK_THRESHOLDS, evaluate


def refine_sequence(model, seq, stride=None, batch_size=256):
    """Refine every frame of ``seq``; overlapping window predictions are averaged per frame."""
    cfg = model.cfg
    if (seq.keypoints, seq.dims) != (cfg.K, cfg.D):
        raise ConfigError(
            f"model expects K={cfg.K}, D={cfg.D} but sequence has K={seq.keypoints}, D={seq.dims}"
        )
    if seq.frames < cfg.T:
        raise BoundsError(f"sequence has {seq.frames} frames, shorter than the window T={cfg.T}")
    stride = stride or max(cfg.T // 2, 1)
    flat = fill_invisible(seq.coords, seq.visibility).reshape(seq.frames, -1)
    rel = sample_indices(cfg.T, cfg.N)
    starts = window_starts(seq.frames, cfg.T, stride, cover_tail=True)
    acc = np.zeros_like(flat)
    count = np.zeros(seq.frames)
    # windows are reduced in start order regardless of batching
    for i in range(0, len(starts), batch_size):
        chunk = starts[i : i + batch_size]
        inputs = np.stack([flat[s + rel] for s in chunk])
        _, final = model.predict(inputs)
        for s, pred in zip(chunk, final):
            acc[s : s + cfg.T] += pred
            count[s : s + cfg.T] += 1
    out = acc / count[:, None]
    return seq.with_coords(out.reshape(seq.coords.shape), source=f"refined:{seq.source}")


def evaluate_pairs(preds, gts, thresholds=PCK_THRESHOLDS):
    """Pool metrics over several sequences, weighting by evaluated joint counts."""
    tot = {"mpjpe": 0.0, "mpjpe_n": 0, "accel": 0.0, "accel_n": 0}
    hits = {t: 0.0 for t in thresholds}
    pck_n = 0
    for pred, gt in zip(preds, gts):
        rep = evaluate(pred.coords, gt.coords, gt.visibility, thresholds=thresholds)
        n = int(gt.visibility.sum())
        if rep.mpjpe is not None:
            tot["mpjpe"] += rep.mpjpe * n
            tot["mpjpe_n"] += n
        if rep.accel is not None:
            m = (gt.frames - 2) * gt.keypoints
            tot["accel"] += rep.accel * m
            tot["accel_n"] += m
        c = rep.counts["mean"]
        for t in thresholds:
            if rep.pck[t]["mean"] is not None:
                hits[t] += rep.pck[t]["mean"] * c
        pck_n += c
    out = {
        "mpjpe": tot["mpjpe"] / tot["mpjpe_n"] if tot["mpjpe_n"] else None,
        "accel": tot["accel"] / tot["accel_n"] if tot["accel_n"] else None,
    }
    for t in thresholds:
        out[f"pck@{t:g}"] = hits[t] / pck_n if pck_n else None
    return out


def evaluate_model(model, pairs, stride=None):
    """Refine the corrupted member of each ``(clean, corrupted)`` pair and score it."""
    preds = [refine_sequence(model, noisy, stride) for _, noisy in pairs]
    return evaluate_pairs(preds, [clean for clean, _ in pairs])
