"""Keypoint accuracy metrics.

PCKh: a predicted joint is correct when its Euclidean distance to the ground
truth is at most tau * head_size; only labeled joints (v > 0) are evaluated.
The report carries per-joint accuracies plus the pooled mean (total correct
over total evaluated) for every threshold.

OKS: mean over labeled joints of exp(-d^2 / (2 * area * k_i^2)) with the
standard per-joint constants k_i.  AP averages 101-point interpolated
precision over OKS thresholds 0.50:0.05:0.95, with greedy score-descending
matching of predictions to unmatched ground truths per image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricsError

OKS_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class PckhReport:
    taus: tuple[float, ...]
    per_joint: dict[float, tuple[float, ...]]  # nan where never evaluable
    mean: dict[float, float]
    evaluable_per_joint: tuple[int, ...]
    n_instances: int
    flagged: bool  # true when nothing was evaluable

    def to_dict(self) -> dict:
        return {
            "kind": "pckh",
            "taus": list(self.taus),
            "per_joint": {str(t): list(self.per_joint[t]) for t in self.taus},
            "mean": {str(t): self.mean[t] for t in self.taus},
            "evaluable_per_joint": list(self.evaluable_per_joint),
            "n_instances": self.n_instances,
            "flagged": self.flagged,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self, joint_names: list[str] | None = None) -> str:
        names = joint_names or [f"joint_{j}" for j in
                                range(len(self.evaluable_per_joint))]
        width = max(len(n) for n in names + ["mean"]) + 2
        header = f"{'':<{width}}" + "".join(f"pckh@{t:<6}" for t in self.taus)
        lines = [header]
        for j, name in enumerate(names):
            cells = "".join(f"{self.per_joint[t][j]:<11.4f}" for t in self.taus)
            lines.append(f"{name:<{width}}{cells}")
        cells = "".join(f"{self.mean[t]:<11.4f}" for t in self.taus)
        lines.append(f"{'mean':<{width}}{cells}")
        return "\n".join(lines)


def pckh(pred: np.ndarray, gt: np.ndarray, head_sizes: np.ndarray,
         taus=(0.5, 0.1)) -> PckhReport:
    """PCKh over a batch.

    pred: (N, J, 2+) predicted coordinates; gt: (N, J, 3) with visibility;
    head_sizes: (N,) per-instance reference lengths.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    head_sizes = np.asarray(head_sizes, dtype=np.float64)
    if pred.ndim != 3 or gt.ndim != 3 or pred.shape[:2] != gt.shape[:2]:
        raise MetricsError(
            f"pred {pred.shape} and gt {gt.shape} must be (N, J, .) alike"
        )
    if head_sizes.shape != (pred.shape[0],):
        raise MetricsError(f"head_sizes must be (N,), got {head_sizes.shape}")
    if np.any(head_sizes <= 0):
        raise MetricsError("head sizes must be positive")
    taus = tuple(float(t) for t in taus)

    labeled = gt[:, :, 2] > 0
    dist = np.linalg.norm(pred[:, :, :2] - gt[:, :, :2], axis=2)
    evaluable = labeled.sum(axis=0)
    per_joint: dict[float, tuple[float, ...]] = {}
    mean: dict[float, float] = {}
    for tau in taus:
        correct = (dist <= tau * head_sizes[:, None]) & labeled
        with np.errstate(invalid="ignore"):
            acc = np.where(evaluable > 0,
                           correct.sum(axis=0) / np.maximum(evaluable, 1),
                           np.nan)
        per_joint[tau] = tuple(float(a) for a in acc)
        total = int(evaluable.sum())
        mean[tau] = float(correct.sum() / total) if total else float("nan")
    return PckhReport(
        taus, per_joint, mean,
        tuple(int(c) for c in evaluable), pred.shape[0],
        flagged=bool(evaluable.sum() == 0),
    )


def oks(pred: np.ndarray, gt: np.ndarray, area: float, k: np.ndarray) -> float:
    """Object keypoint similarity for one instance pair."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if gt.shape[0] != pred.shape[0] or gt.shape[0] != k.shape[0]:
        raise MetricsError("pred, gt and k must agree on the joint count")
    if area <= 0:
        raise MetricsError(f"instance area must be positive, got {area}")
    labeled = gt[:, 2] > 0
    if not labeled.any():
        raise MetricsError("OKS undefined: instance has no labeled joints")
    d2 = np.sum((pred[labeled, :2] - gt[labeled, :2]) ** 2, axis=1)
    sims = np.exp(-d2 / (2.0 * area * k[labeled] ** 2))
    return float(sims.mean())


@dataclass(frozen=True)
class OksApReport:
    thresholds: tuple[float, ...]
    ap_per_threshold: dict[float, float]
    ap: float
    ap50: float
    n_predictions: int
    n_ground_truths: int
    flagged: bool  # true when there was no ground truth to match

    def to_dict(self) -> dict:
        return {
            "kind": "oks_ap",
            "thresholds": list(self.thresholds),
            "ap_per_threshold": {str(t): self.ap_per_threshold[t]
                                 for t in self.thresholds},
            "ap": self.ap,
            "ap50": self.ap50,
            "n_predictions": self.n_predictions,
            "n_ground_truths": self.n_ground_truths,
            "flagged": self.flagged,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _interpolated_ap(scores, flags, n_gt: int) -> float:
    """101-point interpolated average precision."""
    if not scores:
        return 0.0
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    tp = np.cumsum([flags[i] for i in order]).astype(np.float64)
    fp = np.cumsum([not flags[i] for i in order]).astype(np.float64)
    precision = tp / np.maximum(tp + fp, 1)
    recall = tp / n_gt
    # running max of precision from the right = interpolated precision
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    points = np.linspace(0.0, 1.0, 101)
    idx = np.searchsorted(recall, points, side="left")
    capped = precision[np.minimum(idx, len(recall) - 1)]
    return float(np.mean(np.where(idx < len(recall), capped, 0.0)))


def average_precision(predictions, ground_truths, k,
                      thresholds=OKS_THRESHOLDS) -> OksApReport:
    """OKS-threshold-averaged AP.

    predictions: per image, a list of (keypoints (J, 2+), score);
    ground_truths: per image, a list of (keypoints (J, 3), area).
    The two outer lists must align image by image.
    """
    if len(predictions) != len(ground_truths):
        raise MetricsError("predictions and ground truths must align per image")
    k = np.asarray(k, dtype=np.float64)
    thresholds = tuple(float(t) for t in thresholds)
    n_gt = sum(len(g) for g in ground_truths)
    n_pred = sum(len(p) for p in predictions)
    if n_gt == 0:
        nan = float("nan")
        return OksApReport(thresholds, {t: nan for t in thresholds}, nan, nan,
                           n_pred, 0, flagged=True)

    sim_matrices = []
    for preds, gts in zip(predictions, ground_truths):
        sims = np.zeros((len(preds), len(gts)))
        for i, (kps, _) in enumerate(preds):
            for j, (gt_kps, area) in enumerate(gts):
                sims[i, j] = oks(kps, gt_kps, area, k)
        sim_matrices.append(sims)

    ap_per: dict[float, float] = {}
    for t in thresholds:
        scores_all, flags_all = [], []
        for img, (preds, gts) in enumerate(zip(predictions, ground_truths)):
            sims = sim_matrices[img]
            order = sorted(range(len(preds)), key=lambda i: (-preds[i][1], i))
            used = set()
            for i in order:
                best, best_sim = -1, -1.0
                for j in range(len(gts)):
                    # ties resolve to the lowest ground-truth index
                    if j not in used and sims[i, j] >= t and sims[i, j] > best_sim:
                        best, best_sim = j, sims[i, j]
                matched = best >= 0
                if matched:
                    used.add(best)
                # sort key makes cross-image ties deterministic
                scores_all.append((-preds[i][1], img, i))
                flags_all.append(matched)
        ap_per[t] = _interpolated_ap(scores_all, flags_all, n_gt)

    ap = float(np.mean([ap_per[t] for t in thresholds]))
    return OksApReport(thresholds, ap_per, ap,
                       ap_per.get(0.5, float("nan")), n_pred, n_gt,
                       flagged=False)
