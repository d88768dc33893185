"""Evaluation: flip-averaged inference, decoding, metric reports.

Each sample is cropped deterministically from its annotated box, run through
the network together with its horizontal mirror, and the two heatmap stacks
are merged (un-flip + left/right channel swap + average).  Decoded map
coordinates are scaled by the output stride and mapped back to original
image pixels through the inverse crop affine.

MPII-style and fixture samples are scored with PCKh, COCO-style samples with
OKS AP (instance score = mean joint confidence).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .augment import apply_transform, identity_params, invert_affine, transform_points
from .datasets import Sample, joint_table, read_image
from .errors import EvalError
from .graph import ModelGraph
from .heatmaps import decode, flip_merge
from .metrics import OksApReport, PckhReport, average_precision, pckh
from .network import ParameterStore, forward
from .train import normalize_image

PCKH_TAUS = (0.5, 0.1)


@dataclass
class EvalOutcome:
    tag: str
    report: PckhReport | OksApReport
    predictions: list[dict]


def evaluate(graph: ModelGraph, params: ParameterStore, samples: list[Sample],
             flip: bool = True, blur: bool = True, batch_size: int = 8,
             device: str = "cpu",
             images: list[np.ndarray] | None = None) -> EvalOutcome:
    if not samples:
        raise EvalError("evaluation needs at least one sample")
    cfg = graph.config
    n_joints = cfg.num_joints
    for s in samples:
        if s.keypoints.shape[0] != n_joints:
            raise EvalError(
                f"ann {s.ann_id} has {s.keypoints.shape[0]} joints, "
                f"model predicts {n_joints}"
            )
    tag = samples[0].tag
    table = joint_table(tag, n_joints)
    dev = torch.device(device)
    size = cfg.input_size

    predictions: list[dict] = []
    pred_image_coords = np.zeros((len(samples), n_joints, 3))
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo:lo + batch_size]
        crops, matrices = [], []
        for i, s in enumerate(chunk):
            image = images[lo + i] if images is not None else read_image(s)
            crop, _, matrix = apply_transform(
                image, s.keypoints, identity_params(s.center, s.box_side),
                size, table.flip_pairs)
            crops.append(normalize_image(crop))
            matrices.append(matrix)
        xb = torch.from_numpy(np.stack(crops)).to(dev)
        with torch.no_grad():
            if flip:
                both = torch.cat([xb, torch.flip(xb, dims=(3,))])
                out = forward(graph, params, both).cpu().numpy()
                heat, heat_flipped = out[:len(chunk)], out[len(chunk):]
            else:
                heat = forward(graph, params, xb).cpu().numpy()
                heat_flipped = None
        for i, s in enumerate(chunk):
            maps = heat[i].astype(np.float64)
            if heat_flipped is not None:
                maps = flip_merge(maps, heat_flipped[i], table.flip_pairs)
            joints_map = decode(maps, blur=blur)
            joints_crop = joints_map.copy()
            joints_crop[:, :2] *= size / cfg.output_size
            inv = invert_affine(matrices[i])
            joints_image = joints_crop.copy()
            joints_image[:, :2] = transform_points(inv, joints_crop[:, :2])
            pred_image_coords[lo + i] = joints_image
            predictions.append({
                "image_id": s.image_id,
                "ann_id": s.ann_id,
                "joints_map": [[round(v, 4) for v in row] for row in joints_map],
                "joints_image": [[round(v, 4) for v in row]
                                 for row in joints_image],
            })

    if tag == "coco":
        if table.oks_k is None:
            raise EvalError("coco evaluation needs per-joint oks constants")
        image_ids = sorted({s.image_id for s in samples})
        index = {img: i for i, img in enumerate(image_ids)}
        preds_by_image: list[list] = [[] for _ in image_ids]
        gts_by_image: list[list] = [[] for _ in image_ids]
        for i, s in enumerate(samples):
            score = float(pred_image_coords[i, :, 2].mean())
            preds_by_image[index[s.image_id]].append(
                (pred_image_coords[i], score))
            gts_by_image[index[s.image_id]].append((s.keypoints, s.area))
        report: PckhReport | OksApReport = average_precision(
            preds_by_image, gts_by_image, np.asarray(table.oks_k))
    else:
        gt = np.stack([s.keypoints for s in samples])
        heads = np.asarray([s.head_size for s in samples], dtype=np.float64)
        report = pckh(pred_image_coords, gt, heads, taus=PCKH_TAUS)
    return EvalOutcome(tag, report, predictions)
