"""Gaussian heatmap codec.

Encoding writes an unnormalized Gaussian (sigma = 2 by default) centered at
the keypoint rounded to the nearest pixel, so the peak value is exactly 1.0.
Joints that are invisible, or whose rounded center falls outside the map, are
encoded all-zero and flagged in the returned mask.

Decoding blurs with a fixed 5x5 Gaussian kernel (sigma = 1, reflect borders),
takes the row-major argmax, and refines by a quarter-pixel shift per axis
toward the larger immediate neighbor (applied only when both neighbors
exist; ties, including roundoff-level differences, shift nothing).
Confidence is the peak value of the pre-blur map.  An all-zero map decodes
to the map center with confidence 0.

Sub-pixel accuracy holds away from the border: reflect padding inflates
blurred values within 3 px of the map edge, so the <= 0.5 px round-trip
guarantee applies to keypoints whose rounded center is at least 3 px inside
the map.  Nearer the edge the decoded point is still within 1.5 px.

``flip_merge`` averages a heatmap stack with the stack produced from the
horizontally flipped input: the second stack is un-flipped along x and its
left/right channel pairs are swapped before averaging.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import CodecError

BLUR_KERNEL_SIZE = 5
BLUR_SIGMA = 1.0
DEFAULT_SIGMA = 2.0


def blur_kernel(size: int = BLUR_KERNEL_SIZE, sigma: float = BLUR_SIGMA) -> np.ndarray:
    """Normalized 2D Gaussian kernel (float64, sums to 1)."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    one_d = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(one_d, one_d)
    return kernel / kernel.sum()


def encode(keypoints: np.ndarray, map_size: int,
           sigma: float = DEFAULT_SIGMA) -> tuple[np.ndarray, np.ndarray]:
    """Render (J, 3) keypoints [x, y, v] to (J, S, S) maps plus a valid mask.

    Coordinates are in map pixels.  Returns float64 maps with peak exactly
    1.0 at the rounded center, and a boolean mask saying which joints were
    actually encoded (visible and in bounds).
    """
    keypoints = np.asarray(keypoints, dtype=np.float64)
    if keypoints.ndim != 2 or keypoints.shape[1] != 3:
        raise CodecError(f"keypoints must be (J, 3), got {keypoints.shape}")
    if sigma <= 0:
        raise CodecError(f"sigma must be > 0, got {sigma}")
    n_joints = keypoints.shape[0]
    maps = np.zeros((n_joints, map_size, map_size), dtype=np.float64)
    mask = np.zeros(n_joints, dtype=bool)
    centers = np.rint(keypoints[:, :2]).astype(np.int64)
    ys, xs = np.mgrid[0:map_size, 0:map_size]
    for j in range(n_joints):
        if keypoints[j, 2] <= 0:
            continue
        cx, cy = centers[j]
        if not (0 <= cx < map_size and 0 <= cy < map_size):
            continue
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        maps[j] = np.exp(-d2 / (2.0 * sigma ** 2))
        mask[j] = True
    return maps, mask


TIE_RTOL = 1e-9


def _neighbor_sign(right: float, left: float) -> float:
    """Sign of the neighbor difference; roundoff-level gaps count as ties.

    A symmetric peak blurred in floating point leaves ~1e-16 noise between
    its neighbors, which must not turn into a quarter-pixel shift.
    """
    diff = right - left
    if abs(diff) <= TIE_RTOL * (abs(right) + abs(left)):
        return 0.0
    return 1.0 if diff > 0 else -1.0


def _quarter_offset(blurred: np.ndarray, px: int, py: int) -> tuple[float, float]:
    size_y, size_x = blurred.shape
    dx = dy = 0.0
    if 0 < px < size_x - 1:
        dx = 0.25 * _neighbor_sign(blurred[py, px + 1], blurred[py, px - 1])
    if 0 < py < size_y - 1:
        dy = 0.25 * _neighbor_sign(blurred[py + 1, px], blurred[py - 1, px])
    return dx, dy


def decode(maps: np.ndarray, blur: bool = True) -> np.ndarray:
    """Decode (J, S, S) maps to (J, 3) rows [x, y, confidence]."""
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3:
        raise CodecError(f"heatmap stack must be (J, H, W), got {maps.shape}")
    n_joints, size_y, size_x = maps.shape
    if blur:
        kernel = blur_kernel()[None]
        blurred = ndimage.correlate(maps, kernel, mode="reflect")
    else:
        blurred = maps
    out = np.zeros((n_joints, 3), dtype=np.float64)
    flat = blurred.reshape(n_joints, -1)
    peaks = flat.argmax(axis=1)  # row-major, first occurrence wins ties
    for j in range(n_joints):
        if not maps[j].any():
            out[j] = (size_x // 2, size_y // 2, 0.0)
            continue
        py, px = divmod(int(peaks[j]), size_x)
        dx, dy = _quarter_offset(blurred[j], px, py)
        out[j] = (px + dx, py + dy, maps[j].max())
    return out


def flip_pair_permutation(n_joints: int, pairs) -> np.ndarray:
    """Channel permutation swapping each left/right pair."""
    perm = np.arange(n_joints)
    seen = set()
    for left, right in pairs:
        for idx in (left, right):
            if not (0 <= idx < n_joints):
                raise CodecError(f"flip pair index {idx} outside [0, {n_joints})")
            if idx in seen:
                raise CodecError(f"joint {idx} appears in more than one flip pair")
            seen.add(idx)
        perm[left], perm[right] = right, left
    return perm


def flip_merge(maps: np.ndarray, maps_flipped: np.ndarray, pairs) -> np.ndarray:
    """Average predictions from the original and the flipped input."""
    maps = np.asarray(maps, dtype=np.float64)
    maps_flipped = np.asarray(maps_flipped, dtype=np.float64)
    if maps.shape != maps_flipped.shape:
        raise CodecError(
            f"stack shapes differ: {maps.shape} vs {maps_flipped.shape}"
        )
    perm = flip_pair_permutation(maps.shape[0], pairs)
    restored = maps_flipped[perm, :, ::-1]
    return 0.5 * (maps + restored)
