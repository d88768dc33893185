"""Training-time geometric augmentation.

A sample is described by a square box (center, side) around the person.  The
multiplicative scale jitter resizes that box, the crop warps it to the model
input square, rotating around the box center.  Horizontal flips are applied
after the warp (image mirror + x reflection + left/right joint swap), so the
affine matrix itself never contains the flip.

Draw order inside ``sample_params`` is fixed and documented: rotation gate,
rotation value, scale gate, scale value, flip gate.  Gated values are always
drawn so the random stream has a fixed length per call.  Half-body cropping
draws its own gate first, then (if the sample has enough labeled joints) an
upper/lower coin, and replaces the box by the padded bounding box of the
chosen joint subset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import cv2
import numpy as np

from .config import AugmentPolicy
from .errors import AugmentError
from .heatmaps import flip_pair_permutation


@dataclass(frozen=True)
class AugmentParams:
    rotation_deg: float
    scale: float
    flip: bool
    half_body: bool
    center: tuple[float, float]
    box_side: float


def identity_params(center, box_side: float) -> AugmentParams:
    return AugmentParams(0.0, 1.0, False, False,
                         (float(center[0]), float(center[1])), float(box_side))


def sample_params(rng: np.random.Generator, policy: AugmentPolicy,
                  center, box_side: float) -> AugmentParams:
    rot_gate = rng.random()
    rot_value = rng.uniform(-policy.rotation_max_deg, policy.rotation_max_deg)
    rotation = rot_value if rot_gate < policy.p_rotate else 0.0
    scale_gate = rng.random()
    scale_value = rng.uniform(policy.scale_min, policy.scale_max)
    scale = scale_value if scale_gate < policy.p_scale else 1.0
    flip = bool(rng.random() < policy.p_flip)
    return AugmentParams(rotation, scale, flip, False,
                         (float(center[0]), float(center[1])), float(box_side))


def half_body(keypoints: np.ndarray, rng: np.random.Generator,
              policy: AugmentPolicy, upper: list[int],
              lower: list[int]) -> tuple[tuple[float, float], float] | None:
    """Maybe replace the person box by a padded upper- or lower-body box.

    Returns (center, side) or None for a no-op.  Requires at least
    ``half_body_min_visible`` labeled joints overall and two labeled joints
    on the chosen side.
    """
    if rng.random() >= policy.p_half_body:
        return None
    keypoints = np.asarray(keypoints, dtype=np.float64)
    labeled = keypoints[:, 2] > 0
    if int(labeled.sum()) < policy.half_body_min_visible:
        return None
    chosen = upper if rng.random() < 0.5 else lower
    idx = [j for j in chosen if labeled[j]]
    if len(idx) < 2:
        return None
    pts = keypoints[idx, :2]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    side = float(max(hi - lo)) * policy.half_body_padding
    if side <= 0:
        return None
    center = ((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0)
    return center, side


def build_affine(params: AugmentParams, input_size: int) -> np.ndarray:
    """2x3 matrix mapping the (scaled, rotated) box onto the input square."""
    side = params.box_side * params.scale
    if side <= 0:
        raise AugmentError(
            f"degenerate box: side {params.box_side} x scale {params.scale}"
        )
    zoom = input_size / side
    theta = math.radians(params.rotation_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    lin = zoom * np.array([[cos_t, -sin_t], [sin_t, cos_t]], dtype=np.float64)
    center = np.array(params.center, dtype=np.float64)
    out_center = np.array([input_size / 2.0, input_size / 2.0])
    shift = out_center - lin @ center
    return np.concatenate([lin, shift[:, None]], axis=1)


def invert_affine(matrix: np.ndarray) -> np.ndarray:
    full = np.vstack([matrix, [0.0, 0.0, 1.0]])
    det = np.linalg.det(full)
    if abs(det) < 1e-12:
        raise AugmentError("affine matrix is singular")
    return np.linalg.inv(full)[:2]


def transform_points(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points @ matrix[:, :2].T + matrix[:, 2]


def apply_transform(image: np.ndarray, keypoints: np.ndarray,
                    params: AugmentParams, input_size: int,
                    flip_pairs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Warp image and keypoints; returns (crop, keypoints, matrix).

    Keypoints are (J, 3) rows [x, y, v] in source-image pixels; the result is
    in crop pixels.  Visible joints pushed outside the crop are downgraded to
    occluded (v=1).  The returned matrix excludes the flip.
    """
    matrix = build_affine(params, input_size)
    crop = cv2.warpAffine(image, matrix, (input_size, input_size),
                          flags=cv2.INTER_LINEAR)
    keypoints = np.asarray(keypoints, dtype=np.float64).copy()
    keypoints[:, :2] = transform_points(matrix, keypoints[:, :2])
    if params.flip:
        crop = np.ascontiguousarray(crop[:, ::-1])
        keypoints[:, 0] = (input_size - 1) - keypoints[:, 0]
        perm = flip_pair_permutation(keypoints.shape[0], flip_pairs)
        keypoints = keypoints[perm]
    inside = (
        (keypoints[:, 0] >= 0) & (keypoints[:, 0] < input_size)
        & (keypoints[:, 1] >= 0) & (keypoints[:, 1] < input_size)
    )
    visible = keypoints[:, 2] == 2
    keypoints[visible & ~inside, 2] = 1
    return crop, keypoints, matrix


def augment_sample(image: np.ndarray, keypoints: np.ndarray, center,
                   box_side: float, policy: AugmentPolicy,
                   rng: np.random.Generator, input_size: int, flip_pairs,
                   upper: list[int], lower: list[int]):
    """Full training pipeline for one sample.

    Returns (crop, keypoints, matrix, params).
    """
    hb = half_body(keypoints, rng, policy, upper, lower)
    if hb is not None:
        center, box_side = hb
    params = sample_params(rng, policy, center, box_side)
    if hb is not None:
        params = replace(params, half_body=True)
    crop, kps, matrix = apply_transform(image, keypoints, params,
                                        input_size, flip_pairs)
    return crop, kps, matrix, params
