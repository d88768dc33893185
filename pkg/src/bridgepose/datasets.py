"""Dataset loading: COCO-style and converted MPII annotations, plus a
deterministic synthetic fixture.

All loaders emit ``Sample`` records with keypoints as (J, 3) float arrays of
[x, y, v], v in {0 unlabeled, 1 occluded, 2 visible}.  Visible joints outside
the image bounds are downgraded to occluded at load so every emitted sample
satisfies the invariants.  Samples are ordered by (image_id, ann_id).

The converted MPII schema (produced by scripts/convert_mpii_annotations.py)
is a JSON array of records::

    {"image": "012345.jpg", "image_size": [w, h],
     "center": [cx, cy], "box_side": side_px,
     "joints": [[x, y, v], ... 16 rows],
     "head_box": [x1, y1, x2, y2]}

head_size = 0.6 * the head-box diagonal; boxes with non-positive width or
height are rejected.

The fixture renders each joint as an additive Gaussian color blob (one hue
per joint) on black, with blob centers separated by at least 6 blob sigmas so
every center pixel carries its pure color.  head_size is image_size / 4.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import cv2
import numpy as np

from .config import FixtureSpec
from .errors import DatasetError

COCO_BOX_PADDING = 1.25
MPII_HEAD_FACTOR = 0.6
FIXTURE_SEPARATION_SIGMAS = 6.0


@dataclass(frozen=True)
class JointTable:
    names: tuple[str, ...]
    flip_pairs: tuple[tuple[int, int], ...]
    upper: tuple[int, ...]
    lower: tuple[int, ...]
    skeleton: tuple[tuple[int, int], ...]
    oks_k: tuple[float, ...] | None = None


def _fixture_table(num_joints: int) -> JointTable:
    half = (num_joints + 1) // 2
    return JointTable(
        names=tuple(f"joint_{j}" for j in range(num_joints)),
        flip_pairs=(),
        upper=tuple(range(half)),
        lower=tuple(range(half, num_joints)),
        skeleton=tuple((j, j + 1) for j in range(num_joints - 1)),
    )


def joint_table(tag: str, num_joints: int | None = None) -> JointTable:
    """Joint metadata for a dataset tag ('mpii', 'coco' or 'fixture')."""
    if tag == "fixture":
        if num_joints is None:
            raise DatasetError("fixture joint table needs num_joints")
        return _fixture_table(num_joints)
    if tag not in ("mpii", "coco"):
        raise DatasetError(f"unknown dataset tag {tag!r}")
    raw = json.loads(
        resources.files("bridgepose.data").joinpath(f"joints_{tag}.json").read_text()
    )
    table = JointTable(
        names=tuple(raw["names"]),
        flip_pairs=tuple((a, b) for a, b in raw["flip_pairs"]),
        upper=tuple(raw["upper"]),
        lower=tuple(raw["lower"]),
        skeleton=tuple((a, b) for a, b in raw["skeleton"]),
        oks_k=tuple(raw["oks_k"]) if "oks_k" in raw else None,
    )
    if num_joints is not None and num_joints != len(table.names):
        raise DatasetError(
            f"{tag} has {len(table.names)} joints, config wants {num_joints}"
        )
    return table


@dataclass(frozen=True)
class Sample:
    tag: str
    image_id: int
    ann_id: int
    image_path: str | None
    width: int
    height: int
    center: tuple[float, float]
    box_side: float
    keypoints: np.ndarray  # (J, 3) float64
    head_size: float | None = None
    area: float | None = None


def validate_sample(sample: Sample) -> Sample:
    """Enforce the sample invariants; returns the (possibly fixed) sample."""
    kps = np.asarray(sample.keypoints, dtype=np.float64)
    if kps.ndim != 2 or kps.shape[1] != 3:
        raise DatasetError(
            f"ann {sample.ann_id}: keypoints must be (J, 3), got {kps.shape}"
        )
    if not np.isin(kps[:, 2], (0, 1, 2)).all():
        raise DatasetError(
            f"ann {sample.ann_id}: visibility flags must be 0, 1 or 2"
        )
    if sample.box_side <= 0 or not math.isfinite(sample.box_side):
        raise DatasetError(f"ann {sample.ann_id}: box side {sample.box_side}")
    if not all(math.isfinite(c) for c in sample.center):
        raise DatasetError(f"ann {sample.ann_id}: non-finite center")
    wants_head = sample.tag in ("mpii", "fixture")
    if wants_head and (sample.head_size is None or sample.area is not None):
        raise DatasetError(f"ann {sample.ann_id}: {sample.tag} needs head_size only")
    if not wants_head and (sample.area is None or sample.head_size is not None):
        raise DatasetError(f"ann {sample.ann_id}: {sample.tag} needs area only")
    if sample.head_size is not None and sample.head_size <= 0:
        raise DatasetError(f"ann {sample.ann_id}: head_size must be positive")
    if sample.area is not None and sample.area <= 0:
        raise DatasetError(f"ann {sample.ann_id}: area must be positive")
    inside = (
        (kps[:, 0] >= 0) & (kps[:, 0] < sample.width)
        & (kps[:, 1] >= 0) & (kps[:, 1] < sample.height)
    )
    kps = kps.copy()
    kps[(kps[:, 2] == 2) & ~inside, 2] = 1
    kps.setflags(write=False)
    return replace(sample, keypoints=kps)


def read_image(sample: Sample) -> np.ndarray:
    """Load the sample's image as (H, W, 3) uint8 RGB."""
    if sample.image_path is None:
        raise DatasetError(f"ann {sample.ann_id}: sample has no image path")
    bgr = cv2.imread(str(sample.image_path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise DatasetError(f"cannot read image {sample.image_path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def _load_json(path) -> object:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as err:
        raise DatasetError(f"{path}: {err}") from err
    except json.JSONDecodeError as err:
        raise DatasetError(
            f"{path}: line {err.lineno} column {err.colno}: {err.msg}"
        ) from err


def load_coco(path, images_root=None) -> list[Sample]:
    """COCO-style keypoint annotations -> samples tagged 'coco'."""
    data = _load_json(path)
    if not isinstance(data, dict) or "images" not in data or "annotations" not in data:
        raise DatasetError(f"{path}: expected an object with images and annotations")
    images = {}
    for rec in data["images"]:
        try:
            images[rec["id"]] = rec
        except (TypeError, KeyError) as err:
            raise DatasetError(f"{path}: image record missing 'id'") from err
    samples = []
    for ann in data["annotations"]:
        try:
            ann_id, image_id = ann["id"], ann["image_id"]
            flat = ann["keypoints"]
            bbox = ann["bbox"]
        except (TypeError, KeyError) as err:
            raise DatasetError(f"{path}: annotation missing key {err}") from err
        if ann.get("iscrowd"):
            continue
        if image_id not in images:
            raise DatasetError(f"{path}: ann {ann_id} references image {image_id}")
        if len(flat) % 3 != 0:
            raise DatasetError(f"{path}: ann {ann_id} keypoints not triplets")
        kps = np.asarray(flat, dtype=np.float64).reshape(-1, 3)
        if not (kps[:, 2] > 0).any():
            continue  # nothing labeled on this instance
        x, y, w, h = (float(v) for v in bbox)
        if w <= 0 or h <= 0:
            raise DatasetError(f"{path}: ann {ann_id} has degenerate bbox")
        area = float(ann.get("area", w * h))
        if area <= 0:
            raise DatasetError(f"{path}: ann {ann_id} has non-positive area")
        img = images[image_id]
        image_path = None
        if images_root is not None:
            image_path = str(Path(images_root) / img["file_name"])
        samples.append(validate_sample(Sample(
            tag="coco", image_id=int(image_id), ann_id=int(ann_id),
            image_path=image_path,
            width=int(img["width"]), height=int(img["height"]),
            center=(x + w / 2.0, y + h / 2.0),
            box_side=max(w, h) * COCO_BOX_PADDING,
            keypoints=kps, area=area,
        )))
    samples.sort(key=lambda s: (s.image_id, s.ann_id))
    return samples


def load_mpii(path, images_root=None) -> list[Sample]:
    """Converted MPII annotations (schema in the module docstring)."""
    data = _load_json(path)
    if not isinstance(data, list):
        raise DatasetError(f"{path}: expected a JSON array of records")
    image_ids: dict[str, int] = {}
    samples = []
    for idx, rec in enumerate(data):
        try:
            name = rec["image"]
            width, height = rec["image_size"]
            cx, cy = rec["center"]
            box_side = float(rec["box_side"])
            joints = rec["joints"]
            x1, y1, x2, y2 = (float(v) for v in rec["head_box"])
        except (TypeError, KeyError, ValueError) as err:
            raise DatasetError(f"{path}: record {idx} malformed: {err}") from err
        if x2 - x1 <= 0 or y2 - y1 <= 0:
            raise DatasetError(f"{path}: record {idx} has a degenerate head box")
        head_size = MPII_HEAD_FACTOR * math.hypot(x2 - x1, y2 - y1)
        image_id = image_ids.setdefault(name, len(image_ids))
        image_path = str(Path(images_root) / name) if images_root else None
        samples.append(validate_sample(Sample(
            tag="mpii", image_id=image_id, ann_id=idx, image_path=image_path,
            width=int(width), height=int(height),
            center=(float(cx), float(cy)), box_side=box_side,
            keypoints=np.asarray(joints, dtype=np.float64),
            head_size=head_size,
        )))
    samples.sort(key=lambda s: (s.image_id, s.ann_id))
    return samples


def fixture_palette(num_joints: int) -> np.ndarray:
    """One saturated RGB color per joint, hues evenly spaced.

    Full saturation and value keep every color at maximal angular
    separation from the gray axis, which is what a linear color filter
    followed by a rectifier can discriminate; brighter-vs-dimmer variants
    of one hue direction are not separable that way.
    """
    colors = [colorsys.hsv_to_rgb(j / num_joints, 1.0, 1.0)
              for j in range(num_joints)]
    return np.asarray(colors, dtype=np.float64) * 255.0


def _place_blobs(rng: np.random.Generator, n: int, size: int,
                 sigma: float) -> np.ndarray:
    margin = 4.0 * sigma
    if size - 1 - margin < margin:
        raise DatasetError(
            f"blob sigma {sigma} leaves no interior on a {size}px image"
        )
    min_dist = FIXTURE_SEPARATION_SIGMAS * sigma
    points: list[np.ndarray] = []
    for _ in range(n):
        for _attempt in range(10_000):
            p = rng.uniform(margin, size - 1 - margin, size=2)
            if all(np.linalg.norm(p - q) >= min_dist for q in points):
                points.append(p)
                break
        else:
            raise DatasetError(
                f"cannot place {n} separated blobs on a {size}px image"
            )
    return np.asarray(points)


def render_fixture_image(centers: np.ndarray, size: int, sigma: float,
                         palette: np.ndarray) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    canvas = np.zeros((size, size, 3), dtype=np.float64)
    for (cx, cy), color in zip(centers, palette):
        blob = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma ** 2))
        canvas += blob[:, :, None] * color
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def make_fixture(spec: FixtureSpec, out_dir) -> list[Sample]:
    """Generate the synthetic dataset under ``out_dir`` and return its samples.

    Layout: ``images/img_0000.png`` ... plus ``annotations.json``.  Fully
    deterministic in the spec (identical bytes on regeneration).
    """
    spec.validate()
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    palette = fixture_palette(spec.num_joints)
    table = _fixture_table(spec.num_joints)
    head_size = spec.image_size / 4.0

    images, annotations = [], []
    for i in range(spec.n_samples):
        centers = _place_blobs(rng, spec.num_joints, spec.image_size,
                               spec.blob_sigma)
        image = render_fixture_image(centers, spec.image_size,
                                     spec.blob_sigma, palette)
        name = f"img_{i:04d}.png"
        ok = cv2.imwrite(str(out_dir / "images" / name),
                         cv2.cvtColor(image, cv2.COLOR_RGB2BGR))
        if not ok:
            raise DatasetError(f"failed to write {out_dir / 'images' / name}")
        kps = np.concatenate(
            [centers, np.full((spec.num_joints, 1), 2.0)], axis=1
        )
        images.append({
            "id": i, "file_name": name,
            "width": spec.image_size, "height": spec.image_size,
        })
        annotations.append({
            "id": i, "image_id": i,
            "keypoints": [round(v, 4) for v in kps.flatten().tolist()],
            "num_keypoints": spec.num_joints,
            "bbox": [0.0, 0.0, float(spec.image_size), float(spec.image_size)],
            "head_size": head_size,
        })
    doc = {
        "fixture_spec": {
            "n_samples": spec.n_samples, "image_size": spec.image_size,
            "num_joints": spec.num_joints, "blob_sigma": spec.blob_sigma,
            "seed": spec.seed,
        },
        "images": images,
        "annotations": annotations,
        "categories": [{
            "name": "fixture",
            "keypoints": list(table.names),
            "skeleton": [list(p) for p in table.skeleton],
        }],
    }
    with open(out_dir / "annotations.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return load_fixture(out_dir)


def load_fixture(fixture_dir) -> list[Sample]:
    fixture_dir = Path(fixture_dir)
    data = _load_json(fixture_dir / "annotations.json")
    if not isinstance(data, dict) or "fixture_spec" not in data:
        raise DatasetError(f"{fixture_dir}: not a fixture directory")
    images = {rec["id"]: rec for rec in data["images"]}
    samples = []
    for ann in data["annotations"]:
        img = images[ann["image_id"]]
        kps = np.asarray(ann["keypoints"], dtype=np.float64).reshape(-1, 3)
        size = int(img["width"])
        samples.append(validate_sample(Sample(
            tag="fixture", image_id=int(ann["image_id"]), ann_id=int(ann["id"]),
            image_path=str(fixture_dir / "images" / img["file_name"]),
            width=size, height=int(img["height"]),
            center=(size / 2.0, size / 2.0), box_side=float(size),
            keypoints=kps, head_size=float(ann["head_size"]),
        )))
    samples.sort(key=lambda s: (s.image_id, s.ann_id))
    return samples


def load_dataset(path, images_root=None) -> tuple[list[Sample], str]:
    """Auto-detect fixture directory / COCO file / converted MPII file."""
    p = Path(path)
    if p.is_dir():
        return load_fixture(p), "fixture"
    data = _load_json(p)
    if isinstance(data, dict) and "fixture_spec" in data:
        return load_fixture(p.parent), "fixture"
    if isinstance(data, dict):
        return load_coco(p, images_root), "coco"
    return load_mpii(p, images_root), "mpii"
