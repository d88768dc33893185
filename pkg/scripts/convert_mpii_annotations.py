#!/usr/bin/env python
"""Convert community MPII pose JSON into the schema load_mpii() expects.

Input records (one JSON array) follow the widely circulated conversion of the
MPII release::

    {"image": "015601864.jpg", "center": [594.0, 257.0], "scale": 3.021,
     "joints": [[x, y], ... 16], "joints_vis": [1, 0, ...],
     "headbox": [x1, y1, x2, y2]}          # optional

Output records (see bridgepose.datasets.load_mpii)::

    {"image": ..., "image_size": [w, h], "center": [cx, cy],
     "box_side": scale * 200, "joints": [[x, y, v], ...],
     "head_box": [x1, y1, x2, y2]}

Visibility mapping: unlabeled joints (negative coordinates) -> 0, labeled but
occluded -> 1, visible -> 2.  When the input has no head box, a square box
centered between upper neck (8) and head top (9) with side equal to their
distance is substituted.  Image sizes are read from --images-root when given,
otherwise bounded by the joint coordinates.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

NECK, HEAD_TOP = 8, 9


def image_size(args, name: str, joints) -> tuple[int, int]:
    if args.images_root:
        import cv2

        img = cv2.imread(str(Path(args.images_root) / name))
        if img is not None:
            return img.shape[1], img.shape[0]
        print(f"warning: cannot read {name}, bounding by joints", file=sys.stderr)
    xs = [x for x, y in joints if x >= 0]
    ys = [y for x, y in joints if y >= 0]
    margin = 1.1
    return (int(max(xs) * margin) + 1 if xs else 1,
            int(max(ys) * margin) + 1 if ys else 1)


def head_box(rec: dict, joints, vis) -> list[float]:
    for key in ("headbox", "head_box"):
        if key in rec:
            return [float(v) for v in rec[key]]
    (nx, ny), (hx, hy) = joints[NECK], joints[HEAD_TOP]
    if vis[NECK] == 0 or vis[HEAD_TOP] == 0:
        raise ValueError("record lacks a head box and head joints")
    side = max(math.hypot(hx - nx, hy - ny), 1.0)
    cx, cy = (nx + hx) / 2.0, (ny + hy) / 2.0
    return [cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2]


def convert(rec: dict, args) -> dict:
    center = rec.get("center", rec.get("objpos"))
    joints = [[float(x), float(y)] for x, y in rec["joints"]]
    joints_vis = [int(v) for v in rec["joints_vis"]]
    rows = []
    for (x, y), vis in zip(joints, joints_vis):
        if x < 0 or y < 0:
            rows.append([0.0, 0.0, 0])
        else:
            rows.append([x, y, 2 if vis else 1])
    width, height = image_size(args, rec["image"], joints)
    return {
        "image": rec["image"],
        "image_size": [width, height],
        "center": [float(center[0]), float(center[1])],
        "box_side": float(rec["scale"]) * 200.0,
        "joints": rows,
        "head_box": head_box(rec, joints, joints_vis),
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("input", help="community MPII json (array of records)")
    parser.add_argument("output", help="converted annotation file")
    parser.add_argument("--images-root", default=None,
                        help="read true image sizes from this directory")
    args = parser.parse_args()

    with open(args.input, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    out, skipped = [], 0
    for i, rec in enumerate(records):
        try:
            out.append(convert(rec, args))
        except (KeyError, ValueError, TypeError) as err:
            print(f"warning: skipping record {i}: {err}", file=sys.stderr)
            skipped += 1
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(out)} records ({skipped} skipped) -> {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
