"""
Training objective: hard-keypoint weighted L1 loss, per-joint online mutual
learning between the refined and final poses, and their weighted total.

Pose tensors are ``[..., T, K*D]`` with visibility ``[..., T, K]``. Leading
axes are window samples; per-joint errors and the top-k set are computed per
sample, and scalar losses are averaged over samples.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .errors import DimensionError


@dataclass
class WeightedLoss:
    value: tn.DiffTensor
    per_joint: np.ndarray  # [..., K]
    topk: np.ndarray  # [..., K] boolean selection mask
    all_invisible: bool = False

    @property
    def topk_indices(self):
        return [np.flatnonzero(row) for row in self.topk.reshape(-1, self.topk.shape[-1])]


@dataclass
class OnlineLoss:
    value: tn.DiffTensor
    final_is_target: np.ndarray  # [..., K]
    refined_target: np.ndarray = None  # detached values used as targets
    final_target: np.ndarray = None


@dataclass
class LossReport:
    weighted_refined: float
    weighted_final: float
    online: float
    total: float
    per_joint_refined: np.ndarray = None
    per_joint_final: np.ndarray = None
    topk_indices: list = field(default_factory=list)
    all_invisible: bool = False
    total_tensor: tn.DiffTensor = None
    online_detail: OnlineLoss = None

    def as_dict(self):
        return {
            "weighted_refined": self.weighted_refined,
            "weighted_final": self.weighted_final,
            "online": self.online,
            "total": self.total,
        }


def _as_mask(vis):
    return np.asarray(vis, dtype=bool)


def joint_errors(pred, gt, vis, norm="l1"):
    """Per-joint distance averaged over visible frames, ``[..., K]``.

    Also returns the visible-frame counts. Joints never visible get error 0.
    """
    pred, gt = tn.tensor(pred), tn.tensor(gt)
    vis = _as_mask(vis)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    *lead, T, F = pred.shape
    K = vis.shape[-1]
    if vis.shape[-2] != T or F % K:
        raise DimensionError(f"visibility {vis.shape} does not match poses {pred.shape}")
    d = tn.reshape(tn.sub(pred, gt), (*lead, T, K, F // K))
    if norm == "l1":
        dist = tn.sum(tn.abs(d), axis=-1)
    elif norm == "l2":
        dist = tn.sqrt(tn.sum(tn.square(d), axis=-1))
    else:
        raise ValueError(f"unknown norm {norm!r}")
    mask = vis.astype(pred.dtype)
    count = mask.sum(axis=-2)
    err = tn.div(tn.sum(tn.mul(dist, mask), axis=-2), np.maximum(count, 1.0))
    return err, count


def _topk_mask(errors, counts, n_topk):
    vals = np.where(counts > 0, errors, -np.inf)
    order = np.argsort(-vals, axis=-1, kind="stable")[..., :n_topk]
    mask = np.zeros(errors.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=-1)
    return mask & (counts > 0)


def weighted_loss(pred, gt, vis, cfg, norm="l1"):
    """Mean per-joint error plus ``lambda/N_k`` times the sum over the ``N_k`` worst joints."""
    err, count = joint_errors(pred, gt, vis, norm)
    K = err.shape[-1]
    n_topk = cfg.topk_count(K)
    topk = _topk_mask(err.data, count, n_topk)
    per_sample = tn.add(
        tn.div(tn.sum(err, axis=-1), float(K)),
        tn.mul(tn.sum(tn.mul(err, topk.astype(err.dtype)), axis=-1), cfg.lambda_topk / n_topk),
    )
    return WeightedLoss(
        value=tn.mean(per_sample),
        per_joint=err.data,
        topk=topk,
        all_invisible=not bool(count.any()),
    )


def _on_sampled(final, gt, vis, refined_frames, sampled_idx):
    if final.shape[-2] == refined_frames:
        return final, gt, vis
    if sampled_idx is None:
        raise DimensionError(
            f"refined poses have {refined_frames} frames, final {final.shape[-2]}; sampled indices required"
        )
    idx = np.asarray(sampled_idx)
    return tn.take(final, idx, axis=-2), np.take(gt, idx, axis=-2), np.take(vis, idx, axis=-2)


def online_target_mask(refined, final, gt, vis):
    """True at joints where the final poses are strictly closer to ground truth."""
    e_final, _ = joint_errors(final, gt, vis)
    e_ref, _ = joint_errors(refined, gt, vis)
    return e_final.data < e_ref.data


def online_loss(refined, final, gt, vis, cfg, sampled_idx=None, frozen=None):
    """Per joint, the better of refined/final (vs ground truth) supervises the other.

    The target side is detached, so it gets no gradient from its joint's term.
    Comparison and supervision happen on the sampled frames. Passing the
    result of an earlier call as ``frozen`` reuses its target selection and
    target values, which turns the term into the fixed surrogate whose exact
    derivative backward computes (used by finite-difference checks).
    """
    refined, final = tn.tensor(refined), tn.tensor(final)
    gt = np.asarray(gt.data if isinstance(gt, tn.DiffTensor) else gt)
    vis = _as_mask(vis)
    final_s, gt_s, vis_s = _on_sampled(final, gt, vis, refined.shape[-2], sampled_idx)
    if refined.shape != final_s.shape:
        raise DimensionError(f"refined {refined.shape} vs final {final_s.shape} on shared frames")
    if frozen is None:
        final_target = online_target_mask(refined, final_s, gt_s, vis_s)
        ref_const, fin_const = refined.data.copy(), final_s.data.copy()
    else:
        final_target = frozen.final_is_target
        ref_const, fin_const = frozen.refined_target, frozen.final_target
    if cfg.online == "off":
        return OnlineLoss(tn.tensor(np.zeros((), dtype=refined.dtype)), final_target, ref_const, fin_const)
    norms = {"l1": ["l1"], "l2": ["l2"], "l1+l2": ["l1", "l2"]}[cfg.online]
    m = final_target.astype(refined.dtype)
    per_sample = None
    for n in norms:
        ref_learns, _ = joint_errors(refined, fin_const, vis_s, n)
        fin_learns, _ = joint_errors(final_s, ref_const, vis_s, n)
        term = tn.sum(tn.add(tn.mul(ref_learns, m), tn.mul(fin_learns, 1.0 - m)), axis=-1)
        per_sample = term if per_sample is None else tn.add(per_sample, term)
    return OnlineLoss(tn.mean(per_sample), final_target, ref_const, fin_const)


def _value(x):
    if isinstance(x, (WeightedLoss, OnlineLoss)):
        return x.value
    return tn.tensor(np.asarray(x, dtype=float))


def total_loss(weighted_refined, weighted_final, online, cfg):
    """Combine the three components as ``refined + lambda_s * final + online``."""
    wr, wf, lo = _value(weighted_refined), _value(weighted_final), _value(online)
    total = tn.add(tn.add(wr, tn.mul(wf, cfg.lambda_s)), lo)
    report = LossReport(
        weighted_refined=wr.item(),
        weighted_final=wf.item(),
        online=lo.item(),
        total=total.item(),
        total_tensor=total,
    )
    if isinstance(weighted_refined, WeightedLoss):
        report.per_joint_refined = weighted_refined.per_joint
        report.topk_indices = weighted_refined.topk_indices
        report.all_invisible = weighted_refined.all_invisible
    if isinstance(online, OnlineLoss):
        report.online_detail = online
    if isinstance(weighted_final, WeightedLoss):
        report.per_joint_final = weighted_final.per_joint
        report.all_invisible = report.all_invisible or weighted_final.all_invisible
    return report


def compute_losses(output, gt, vis, sampled_idx, cfg, frozen_online=None):
    """Full objective for a model output against full-rate ground truth ``[..., T, K*D]``."""
    gt = np.asarray(gt)
    vis = _as_mask(vis)
    idx = np.asarray(sampled_idx)
    gt_s, vis_s = np.take(gt, idx, axis=-2), np.take(vis, idx, axis=-2)
    wr = weighted_loss(output.refined, gt_s, vis_s, cfg)
    wf = weighted_loss(output.final, gt, vis, cfg)
    lo = online_loss(output.refined, output.final, gt, vis, cfg, sampled_idx=idx, frozen=frozen_online)
    return total_loss(wr, wf, lo, cfg)
