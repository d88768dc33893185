"""Training loop: Adam, step-decay schedule, masked heatmap MSE.

Randomness is fully determined by one base seed.  Named substreams are
derived with ``numpy.random.SeedSequence([seed, stream, *key])``: parameter
init uses stream 0, the per-epoch shuffle stream 1 keyed by epoch, and
augmentation stream 2 keyed by (epoch, sample_index).  Augmentation streams
therefore do not depend on batch composition or worker layout, and resuming
from an epoch-boundary checkpoint replays the exact uninterrupted run.

The loss averages squared error over the heatmaps of encodable labeled
joints only: sum((pred - target)^2 * mask) / (mask.sum() * H * W), giving
gradient 2 * (pred - target) / count on selected maps and 0 elsewhere.
A batch with no labeled joints contributes a zero loss and a warning.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, TrainSchedule, config_to_text, model_digest
from .datasets import Sample, joint_table, read_image
from .errors import CheckpointError, ConfigError, TrainAbort
from .graph import ModelGraph, build_graph
from .heatmaps import encode
from .augment import augment_sample, apply_transform, identity_params
from .network import build_network, init_params

STREAM_INIT, STREAM_SHUFFLE, STREAM_AUGMENT = 0, 1, 2


def stream_rng(seed: int, stream: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, *key]))


def lr_at(epoch: int, schedule: TrainSchedule) -> float:
    """Learning rate for a 0-based epoch under the step-decay schedule."""
    if not (0 <= epoch < schedule.total_epochs):
        raise ConfigError(
            f"epoch {epoch} outside [0, {schedule.total_epochs})"
        )
    passed = sum(1 for m in schedule.milestones if epoch >= m)
    return schedule.initial_lr * schedule.decay_factor ** passed


def heatmap_loss(pred: torch.Tensor, target: torch.Tensor,
                 mask: torch.Tensor) -> torch.Tensor:
    """Masked MSE over (N, J, H, W) heatmaps; mask is (N, J) bool."""
    if pred.shape != target.shape or mask.shape != pred.shape[:2]:
        raise ConfigError(
            f"loss shapes disagree: pred {tuple(pred.shape)}, "
            f"target {tuple(target.shape)}, mask {tuple(mask.shape)}"
        )
    count = mask.sum() * pred.shape[2] * pred.shape[3]
    if count == 0:
        warnings.warn("batch has no labeled joints; loss is zero")
        return pred.sum() * 0.0
    m = mask.to(pred.dtype)[:, :, None, None]
    return ((pred - target) ** 2 * m).sum() / count


def normalize_image(crop: np.ndarray) -> np.ndarray:
    """uint8 RGB (S, S, 3) -> float32 (3, S, S) in [-0.5, 0.5]."""
    return (crop.astype(np.float32) / 255.0 - 0.5).transpose(2, 0, 1)


def sample_to_tensors(image: np.ndarray, sample: Sample, config: RunConfig,
                      rng: np.random.Generator | None, table,
                      augmented: bool):
    """One sample -> (input, target, mask) numpy arrays.

    With ``augmented`` the policy is sampled from ``rng``; otherwise the
    deterministic identity crop is used.
    """
    size = config.model.input_size
    if augmented:
        crop, kps, _, _ = augment_sample(
            image, sample.keypoints, sample.center, sample.box_side,
            config.augment, rng, size, table.flip_pairs,
            list(table.upper), list(table.lower))
    else:
        crop, kps, _ = apply_transform(
            image, sample.keypoints, identity_params(sample.center, sample.box_side),
            size, table.flip_pairs)
    kps_map = kps.copy()
    kps_map[:, :2] /= 2.0  # input -> output stride
    target, mask = encode(kps_map, config.model.output_size,
                          config.train.target_sigma)
    return normalize_image(crop), target.astype(np.float32), mask


@dataclass
class TrainResult:
    out_dir: Path
    final_checkpoint: Path
    log_path: Path
    steps: int
    epochs: int
    final_loss: float


def save_train_state(path, net, optimizer, config: RunConfig, epoch: int,
                     step: int, seed: int) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, p in net.named_parameters():
        arrays[f"param/{name}"] = p.detach().cpu().numpy()
    for name, p in net.named_parameters():
        state = optimizer.state.get(p)
        if state:
            arrays[f"adam/{name}/exp_avg"] = state["exp_avg"].cpu().numpy()
            arrays[f"adam/{name}/exp_avg_sq"] = state["exp_avg_sq"].cpu().numpy()
            arrays[f"adam/{name}/step"] = np.asarray(
                float(state["step"]), dtype=np.float64)
    meta = {
        "format": "train_state",
        "epoch": epoch,
        "step": step,
        "seed": seed,
        "model_digest": model_digest(config.model),
        "run_config": config_to_text(config),
    }
    save_checkpoint(path, arrays, meta)


def load_params(path, graph: ModelGraph | None = None):
    """Checkpoint -> (params dict of float32 tensors, meta).

    When a graph is given, its config digest must match the stored one.
    """
    arrays, meta = load_checkpoint(path)
    if meta.get("format") != "train_state":
        raise CheckpointError(f"{path}: not a training checkpoint")
    if graph is not None and meta.get("model_digest") != model_digest(graph.config):
        raise CheckpointError(
            f"{path}: checkpoint was trained with a different model config"
        )
    params = {
        name[len("param/"):]: torch.from_numpy(arr.copy())
        for name, arr in arrays.items() if name.startswith("param/")
    }
    return params, meta


def _restore_optimizer(optimizer, net, arrays) -> None:
    for name, p in net.named_parameters():
        if f"adam/{name}/exp_avg" in arrays:
            optimizer.state[p] = {
                "step": torch.tensor(float(arrays[f"adam/{name}/step"])),
                "exp_avg": torch.from_numpy(arrays[f"adam/{name}/exp_avg"].copy()),
                "exp_avg_sq": torch.from_numpy(
                    arrays[f"adam/{name}/exp_avg_sq"].copy()),
            }


def train(config: RunConfig, samples: list[Sample], out_dir, seed: int = 0,
          device: str = "cpu", resume=None,
          images: list[np.ndarray] | None = None) -> TrainResult:
    """Train on the given samples; writes checkpoints and a JSONL step log.

    ``images`` optionally provides preloaded RGB arrays aligned with
    ``samples`` (the fixture is small enough to keep resident).
    """
    config.validate()
    if not samples:
        raise ConfigError("training needs at least one sample")
    out_dir = Path(out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    graph = build_graph(config.model)
    table = joint_table(samples[0].tag, config.model.num_joints)
    schedule = config.train
    dev = torch.device(device)

    net = build_network(graph).to(dev)
    start_epoch = global_step = 0
    optimizer = torch.optim.Adam(net.parameters(), lr=schedule.initial_lr,
                                 betas=(0.9, 0.999), eps=1e-8)
    if resume is not None:
        arrays, meta = load_checkpoint(resume)
        if meta.get("model_digest") != model_digest(config.model):
            raise CheckpointError(
                f"{resume}: checkpoint was trained with a different model config"
            )
        with torch.no_grad():
            for name, p in net.named_parameters():
                p.copy_(torch.from_numpy(arrays[f"param/{name}"].copy()))
        _restore_optimizer(optimizer, net, arrays)
        start_epoch, global_step = int(meta["epoch"]), int(meta["step"])
        seed = int(meta["seed"])
    else:
        init = init_params(graph, seed=int(stream_rng(seed, STREAM_INIT)
                                           .integers(2 ** 31)))
        with torch.no_grad():
            for name, p in net.named_parameters():
                p.copy_(init[name])

    if images is None:
        images = [read_image(s) for s in samples]

    log_path = out_dir / "train_log.jsonl"
    final_path = out_dir / "checkpoints" / "final.ckpt"
    net.train()
    last_loss = float("nan")
    epoch = start_epoch
    with open(log_path, "a", encoding="utf-8") as log:
        for epoch in range(start_epoch, schedule.total_epochs):
            if schedule.max_steps and global_step >= schedule.max_steps:
                break
            lr = lr_at(epoch, schedule)
            for group in optimizer.param_groups:
                group["lr"] = lr
            order = stream_rng(seed, STREAM_SHUFFLE, epoch).permutation(len(samples))
            for lo in range(0, len(order), schedule.batch_size):
                if schedule.max_steps and global_step >= schedule.max_steps:
                    break
                idx = order[lo:lo + schedule.batch_size]
                xs, ts, ms = [], [], []
                for i in idx:
                    rng = stream_rng(seed, STREAM_AUGMENT, epoch, int(i))
                    x, t, m = sample_to_tensors(images[i], samples[i], config,
                                                rng, table, augmented=True)
                    xs.append(x)
                    ts.append(t)
                    ms.append(m)
                xb = torch.from_numpy(np.stack(xs)).to(dev)
                tb = torch.from_numpy(np.stack(ts)).to(dev)
                mb = torch.from_numpy(np.stack(ms)).to(dev)
                pred = net(xb)
                loss = heatmap_loss(pred, tb, mb)
                if not torch.isfinite(loss):
                    snap = out_dir / "checkpoints" / "diagnostic.ckpt"
                    save_train_state(snap, net, optimizer, config,
                                     epoch, global_step, seed)
                    raise TrainAbort(
                        f"non-finite loss at step {global_step}; "
                        f"state saved to {snap}"
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                last_loss = float(loss.detach())
                log.write(json.dumps({
                    "step": global_step, "epoch": epoch,
                    "loss": last_loss, "lr": lr,
                }) + "\n")
                global_step += 1
            done = epoch + 1
            if done % schedule.eval_interval == 0 or done == schedule.total_epochs:
                save_train_state(
                    out_dir / "checkpoints" / f"epoch_{done:04d}.ckpt",
                    net, optimizer, config, done, global_step, seed)
    save_train_state(final_path, net, optimizer, config,
                     min(epoch + 1, schedule.total_epochs), global_step, seed)
    return TrainResult(out_dir, final_path, log_path, global_step,
                       min(epoch + 1, schedule.total_epochs), last_loss)
