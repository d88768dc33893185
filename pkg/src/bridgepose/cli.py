"""Command line entry points.

Subcommands: make-fixture, complexity, train, eval, infer, ablate.  Every
command takes --config/--set/--seed/--device and (where it writes files)
--out; outputs land only inside the chosen output directory, alongside a
config.txt snapshot that reproduces the run.  Exit codes: 0 success, 1 usage
or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import cv2
import numpy as np
import torch

from . import report as rep
from .complexity import count_complexity
from .config import (RunConfig, apply_overrides, config_from_text,
                     config_to_text, load_config)
from .datasets import joint_table, load_dataset, make_fixture
from .errors import BridgeposeError, ConfigError
from .evaluate import evaluate
from .graph import build_graph
from .metrics import PckhReport
from .train import load_params, train


def _check_device(name: str) -> str:
    try:
        dev = torch.device(name)
    except RuntimeError as err:
        raise ConfigError(f"invalid device {name!r}: {err}") from err
    if dev.type == "cuda" and not torch.cuda.is_available():
        raise ConfigError("cuda requested but not available")
    return name


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(out: Path, config: RunConfig) -> None:
    (out / "config.txt").write_text(config_to_text(config), encoding="utf-8")


def _config(args) -> RunConfig:
    return load_config(args.config, args.set)


def _table_for_joints(n_joints: int):
    if n_joints == 16:
        return joint_table("mpii")
    if n_joints == 17:
        return joint_table("coco")
    return joint_table("fixture", n_joints)


def cmd_make_fixture(args) -> int:
    config = _config(args)
    out = _out_dir(args)
    spec = replace(config.fixture, seed=args.seed)
    samples = make_fixture(spec, out)
    _snapshot(out, replace(config, fixture=spec))
    print(f"fixture: {len(samples)} samples, {spec.num_joints} joints, "
          f"{spec.image_size}px -> {out}")
    return 0


def cmd_complexity(args) -> int:
    config = _config(args)
    graph = build_graph(config.model)
    report = count_complexity(graph)
    print(report.table())
    if args.out:
        out = _out_dir(args)
        (out / "complexity.json").write_text(report.to_json(), encoding="utf-8")
        (out / "complexity.tsv").write_text(report.to_tsv(), encoding="utf-8")
        rep.complexity_figure(report, out / "figures" / "complexity.png")
        _snapshot(out, config)
    print(f"total: {report.total_params:,} params, "
          f"{report.total_flops:,} flops at {report.input_size}px input")
    return 0


def _load_training_data(args, config: RunConfig):
    samples, tag = load_dataset(args.data)
    n_joints = samples[0].keypoints.shape[0] if samples else 0
    if n_joints != config.model.num_joints:
        raise ConfigError(
            f"dataset has {n_joints} joints but model.num_joints is "
            f"{config.model.num_joints}; use --set model.num_joints={n_joints}"
        )
    return samples, tag


def cmd_train(args) -> int:
    config = _config(args)
    out = _out_dir(args)
    samples, _ = _load_training_data(args, config)
    result = train(config, samples, out, seed=args.seed, device=args.device,
                   resume=args.resume)
    _snapshot(out, config)
    records = rep.read_jsonl(result.log_path)
    if records:
        rep.loss_curve_figure(records, out / "figures" / "loss_curve.png")
    print(f"trained {result.steps} steps / {result.epochs} epochs, "
          f"final loss {result.final_loss:.6g}")
    print(f"checkpoint: {result.final_checkpoint}")
    return 0


def cmd_eval(args) -> int:
    out = _out_dir(args)
    params, meta = load_params(args.checkpoint)
    config = config_from_text(meta["run_config"])
    if args.set:
        config = apply_overrides(config, args.set)
    graph = build_graph(config.model)
    samples, tag = load_dataset(args.data)
    outcome = evaluate(graph, params, samples, device=args.device)
    (out / "report.json").write_text(outcome.report.to_json(), encoding="utf-8")
    rep.write_jsonl(out / "predictions.jsonl", outcome.predictions)
    table = joint_table(tag, config.model.num_joints)
    if isinstance(outcome.report, PckhReport):
        text = outcome.report.table(list(table.names))
        rep.pckh_figure(outcome.report, list(table.names),
                        out / "figures" / "pckh_per_joint.png")
        headline = f"pckh@0.5 = {outcome.report.mean[0.5]:.4f}"
    else:
        text = json.dumps(outcome.report.to_dict(), indent=2)
        rep.ap_figure(outcome.report, out / "figures" / "ap_curve.png")
        headline = f"ap = {outcome.report.ap:.4f}"
    (out / "report.txt").write_text(text + "\n", encoding="utf-8")
    _snapshot(out, config)
    print(text)
    print(headline)
    return 0


def cmd_infer(args) -> int:
    out = _out_dir(args)
    params, meta = load_params(args.checkpoint)
    config = config_from_text(meta["run_config"])
    graph = build_graph(config.model)
    table = _table_for_joints(config.model.num_joints)
    from .datasets import Sample, validate_sample

    records = []
    failures = 0
    for image_arg in args.images:
        bgr = cv2.imread(image_arg, cv2.IMREAD_COLOR)
        if bgr is None:
            print(f"warning: cannot read {image_arg}, skipping", file=sys.stderr)
            failures += 1
            continue
        image = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
        h, w = image.shape[:2]
        sample = validate_sample(Sample(
            tag="fixture", image_id=0, ann_id=0, image_path=None,
            width=w, height=h, center=(w / 2.0, h / 2.0),
            box_side=float(max(w, h)),
            keypoints=np.zeros((config.model.num_joints, 3)),
            head_size=max(w, h) / 4.0,
        ))
        # Plain single-pass inference: flip merging assumes the dataset's
        # left/right pairing, which arbitrary input images do not carry.
        outcome = evaluate(graph, params, [sample], flip=False,
                           device=args.device, images=[image])
        joints = np.asarray(outcome.predictions[0]["joints_image"])
        overlay = rep.draw_overlay(image, joints, table.skeleton)
        name = Path(image_arg).stem
        overlay_path = out / f"{name}_overlay.png"
        cv2.imwrite(str(overlay_path), cv2.cvtColor(overlay, cv2.COLOR_RGB2BGR))
        records.append({
            "image": image_arg,
            "overlay": str(overlay_path),
            "joints": outcome.predictions[0]["joints_image"],
        })
    rep.write_jsonl(out / "predictions.jsonl", records)
    print(f"inferred {len(records)} image(s), {failures} failed -> {out}")
    if records:
        return 0
    print("error: no image could be processed", file=sys.stderr)
    return 2


ABLATION_VARIANTS = (
    ("baseline", "false", "false"),
    ("bridges", "true", "false"),
    ("bridges_attention", "true", "true"),
)


def cmd_ablate(args) -> int:
    config = _config(args)
    out = _out_dir(args)
    samples, tag = load_dataset(args.data)
    rows, failed = [], []
    graphs = {}
    for variant, bridges, hsa in ABLATION_VARIANTS:
        cfg = apply_overrides(config, [
            f"model.bridges_enabled={bridges}",
            f"model.hsa_enabled={hsa}",
        ])
        try:
            if samples[0].keypoints.shape[0] != cfg.model.num_joints:
                raise ConfigError(
                    f"dataset joints do not match model.num_joints"
                )
            graph = build_graph(cfg.model)
            graphs[variant] = graph
            comp = count_complexity(graph)
            result = train(cfg, samples, out / variant, seed=args.seed,
                           device=args.device)
            params, _ = load_params(result.final_checkpoint, graph)
            outcome = evaluate(graph, params, samples, device=args.device)
            row = {
                "variant": variant,
                "bridges_enabled": bridges == "true",
                "hsa_enabled": hsa == "true",
                "params": comp.total_params,
                "flops": comp.total_flops,
                "n_edges": len(graph.edges),
                "n_bridge_edges": len(graph.bridge_edges),
            }
            if isinstance(outcome.report, PckhReport):
                for tau in outcome.report.taus:
                    row[f"pckh@{tau}"] = outcome.report.mean[tau]
            else:
                row["ap"] = outcome.report.ap
            rows.append(row)
        except Exception as err:  # persist partial results on failure
            failed.append(variant)
            rows.append({"variant": variant, "error": str(err)})
    structure = _check_ablation_structure(graphs)
    doc = {"rows": rows, "structure": structure}
    (out / "ablation.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    keys = sorted({k for r in rows for k in r})
    rep.write_tsv(out / "ablation.tsv", keys,
                  [[r.get(k, "") for k in keys] for r in rows])
    ok_rows = [r for r in rows if "error" not in r]
    if ok_rows:
        rep.ablation_figure(ok_rows, out / "figures" / "ablation.png")
    _snapshot(out, config)
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    if failed:
        print(f"error: variant(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 2
    if not all(structure.values()):
        print(f"error: ablation structure check failed: {structure}",
              file=sys.stderr)
        return 2
    return 0


def _check_ablation_structure(graphs: dict) -> dict:
    """Baseline edges must be a strict subset on identical node sets."""
    checks = {}
    if "baseline" in graphs and "bridges" in graphs:
        base, full = graphs["baseline"], graphs["bridges"]
        base_edges, full_edges = set(base.edges), set(full.edges)
        checks["same_nodes"] = set(base.nodes) == set(full.nodes)
        checks["strict_edge_subset"] = (
            base_edges < full_edges
            and all(e.kind == "bridge" for e in full_edges - base_edges)
        )
    if "bridges" in graphs and "bridges_attention" in graphs:
        checks["attention_preserves_edges"] = (
            set(graphs["bridges"].edges) == set(graphs["bridges_attention"].edges)
        )
    return checks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridgepose",
        description="Bridged dual-pyramid 2D pose estimation toolkit",
    )
    sub = parser.add_subparsers(dest="command")

    def common(p, needs_out=True):
        p.add_argument("--config", default=None,
                       help="flat key-value config file (defaults when omitted)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--device", default="cpu")
        if needs_out:
            p.add_argument("--out", required=True,
                           help="output directory (all files land here)")
        else:
            p.add_argument("--out", default=None)

    p = sub.add_parser("make-fixture", help="generate the synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_make_fixture)

    p = sub.add_parser("complexity", help="parameter/FLOP report for a config")
    common(p, needs_out=False)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data", required=True,
                   help="fixture dir, COCO json, or converted MPII json")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="predict keypoints for raw images")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("images", nargs="+", help="input image files")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="train/eval bridge and attention ablations")
    common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if getattr(args, "command", None) is None:
        parser.print_help()
        return 1
    try:
        if hasattr(args, "device"):
            _check_device(args.device)
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except BridgeposeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
