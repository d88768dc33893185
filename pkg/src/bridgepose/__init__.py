"""Bridged dual-pyramid 2D human pose estimation toolkit."""

from .config import (AugmentPolicy, FixtureSpec, ModelConfig, RunConfig,
                     TrainSchedule)
from .graph import ModelGraph, NodeId, Edge, build_graph, column_roles
from .network import (build_network, backward, forward, fuse, hsa_forward,
                      init_params, spatial_attention_theta)
from .complexity import ComplexityReport, count_complexity
from .heatmaps import decode, encode, flip_merge
from .augment import (AugmentParams, apply_transform, build_affine,
                      half_body, sample_params)
from .metrics import average_precision, oks, pckh
from .datasets import (Sample, joint_table, load_coco, load_mpii,
                       load_fixture, make_fixture)
from .train import heatmap_loss, lr_at, train
from .evaluate import evaluate

__version__ = "0.1.0"

__all__ = [
    "AugmentPolicy", "FixtureSpec", "ModelConfig", "RunConfig", "TrainSchedule",
    "ModelGraph", "NodeId", "Edge", "build_graph", "column_roles",
    "build_network", "backward", "forward", "fuse", "hsa_forward",
    "init_params", "spatial_attention_theta",
    "ComplexityReport", "count_complexity",
    "decode", "encode", "flip_merge",
    "AugmentParams", "apply_transform", "build_affine", "half_body",
    "sample_params",
    "average_precision", "oks", "pckh",
    "Sample", "joint_table", "load_coco", "load_mpii", "load_fixture",
    "make_fixture",
    "heatmap_loss", "lr_at", "train",
    "evaluate",
    "__version__",
]
