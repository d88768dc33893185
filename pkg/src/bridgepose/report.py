"""Report rendering: delimited outputs plus matplotlib figures.

Every report path pairs machine-readable output (JSON/JSONL/TSV) with a PNG
figure rendered off-screen (Agg backend).
"""

from __future__ import annotations

import json
from pathlib import Path

import cv2
import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .complexity import ComplexityReport  # noqa: E402
from .metrics import OksApReport, PckhReport  # noqa: E402


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def write_tsv(path, header: list[str], rows) -> None:
    lines = ["\t".join(header)]
    lines += ["\t".join(str(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _new_axes(width=6.0, height=4.0):
    fig, ax = plt.subplots(figsize=(width, height))
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def loss_curve_figure(log_records: list[dict], path) -> None:
    steps = [r["step"] for r in log_records]
    losses = [r["loss"] for r in log_records]
    fig, ax = _new_axes()
    ax.plot(steps, losses, lw=0.8, label="loss")
    if len(losses) >= 20:
        kernel = np.ones(10) / 10.0
        smooth = np.convolve(losses, kernel, mode="valid")
        ax.plot(steps[9:], smooth, lw=1.6, label="loss (10-step mean)")
    ax.set_xlabel("step")
    ax.set_ylabel("heatmap mse")
    ax.set_yscale("log")
    ax.legend()
    _save(fig, path)


def pckh_figure(report: PckhReport, joint_names: list[str], path) -> None:
    fig, ax = _new_axes(width=8.0)
    xs = np.arange(len(joint_names))
    width = 0.8 / max(len(report.taus), 1)
    for k, tau in enumerate(report.taus):
        vals = report.per_joint[tau]
        ax.bar(xs + k * width, vals, width=width, label=f"pckh@{tau}")
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(joint_names, rotation=60, ha="right", fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.legend()
    _save(fig, path)


def ap_figure(report: OksApReport, path) -> None:
    fig, ax = _new_axes()
    ts = list(report.thresholds)
    ax.plot(ts, [report.ap_per_threshold[t] for t in ts], marker="o")
    ax.set_xlabel("oks threshold")
    ax.set_ylabel("average precision")
    ax.set_ylim(0, 1.05)
    ax.set_title(f"AP {report.ap:.3f}")
    _save(fig, path)


def complexity_figure(report: ComplexityReport, path) -> None:
    names = [e.name for e in report.entries]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 0.25 * len(names) + 2))
    ys = np.arange(len(names))
    ax1.barh(ys, [e.params for e in report.entries])
    ax1.set_yticks(ys)
    ax1.set_yticklabels(names, fontsize=6)
    ax1.invert_yaxis()
    ax1.set_xlabel("parameters")
    ax2.barh(ys, [e.flops for e in report.entries], color="tab:orange")
    ax2.set_yticks(ys)
    ax2.set_yticklabels([])
    ax2.invert_yaxis()
    ax2.set_xlabel("flops")
    fig.suptitle(
        f"total {report.total_params / 1e6:.2f}M params, "
        f"{report.total_flops / 1e9:.2f}G flops at {report.input_size}px"
    )
    _save(fig, path)


def ablation_figure(rows: list[dict], path) -> None:
    fig, ax = _new_axes()
    names = [r["variant"] for r in rows]
    xs = np.arange(len(names))
    metric = "pckh@0.5" if "pckh@0.5" in rows[0] else "ap"
    ax.bar(xs, [r.get(metric, float("nan")) for r in rows])
    ax.set_xticks(xs)
    ax.set_xticklabels(names, rotation=15)
    ax.set_ylabel(metric)
    ax.set_ylim(0, 1.05)
    _save(fig, path)


def draw_overlay(image_rgb: np.ndarray, joints: np.ndarray, skeleton,
                 min_confidence: float = 0.05) -> np.ndarray:
    """Skeleton and joint markers drawn on a copy of the image."""
    canvas = image_rgb.copy()
    n = joints.shape[0]
    colors = [
        tuple(int(c) for c in col) for col in
        (plt.cm.hsv(np.linspace(0, 1, n, endpoint=False))[:, :3] * 255)
    ]
    for a, b in skeleton:
        if joints[a, 2] >= min_confidence and joints[b, 2] >= min_confidence:
            pa = (int(round(joints[a, 0])), int(round(joints[a, 1])))
            pb = (int(round(joints[b, 0])), int(round(joints[b, 1])))
            cv2.line(canvas, pa, pb, colors[a], 2, cv2.LINE_AA)
    for j in range(n):
        if joints[j, 2] >= min_confidence:
            p = (int(round(joints[j, 0])), int(round(joints[j, 1])))
            cv2.circle(canvas, p, 3, colors[j], -1, cv2.LINE_AA)
    return canvas
