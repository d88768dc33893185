"""Torch realization of the model graph.

Node compute is a residual block (two 3x3 conv-norm-relu stages plus an
identity shortcut).  Downsample edges are stride-2 3x3 convolutions, upsample
edges are nearest-neighbor x2 followed by a 1x1 channel adapter.  Channel-wise
normalization is GroupNorm, so a forward pass is a pure function of
(parameters, batch): no running statistics, bitwise reproducible on CPU.

The spatial attention block reweights a feature map with a second-order
correction: M = theta1(f), M' = theta2(M), f_out = f + f * (M + M * M').
Each theta is mean+max channel pooling, a 7x7 conv on the 2-channel stack and
a tanh, so |M| < 1 and zeroed theta1 parameters make the block an identity.

``forward``/``backward`` are functional: parameters travel in a flat
``dict[str, Tensor]`` keyed by module path, and gradients come back in the
same keys.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, GraphError
from .graph import ModelGraph

ParameterStore = dict[str, torch.Tensor]


def norm_groups(channels: int) -> int:
    """Largest of 8, 4, 2, 1 dividing the channel count."""
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    raise AssertionError


def spatial_attention_theta(x: torch.Tensor, weight: torch.Tensor,
                            bias: torch.Tensor) -> torch.Tensor:
    """Single-channel spatial map in (-1, 1) from mean+max channel pooling."""
    pooled = torch.cat(
        [x.mean(dim=-3, keepdim=True), x.amax(dim=-3, keepdim=True)], dim=-3
    )
    return torch.tanh(F.conv2d(pooled, weight, bias, padding=3))


def second_order_mix(f: torch.Tensor, m: torch.Tensor,
                     m_deeper: torch.Tensor) -> torch.Tensor:
    """Residual attention: f + f * (M + M * M')."""
    return f + f * (m + m * m_deeper)


def hsa_forward(x: torch.Tensor, params: ParameterStore) -> torch.Tensor:
    """Functional attention block; params keyed theta1/theta2 .weight/.bias."""
    m = spatial_attention_theta(x, params["theta1.weight"], params["theta1.bias"])
    m_deeper = spatial_attention_theta(m, params["theta2.weight"], params["theta2.bias"])
    return second_order_mix(x, m, m_deeper)


def fuse(x_l: torch.Tensor, x_history: torch.Tensor, mode: str,
         weight: torch.Tensor | None = None) -> torch.Tensor:
    """Binary fusion of the sweep path with a history path."""
    if x_l.shape[-2:] != x_history.shape[-2:]:
        raise GraphError(
            f"fuse: spatial mismatch {tuple(x_l.shape[-2:])} vs "
            f"{tuple(x_history.shape[-2:])}"
        )
    if mode == "add":
        if x_l.shape[-3] != x_history.shape[-3]:
            raise GraphError(
                f"fuse(add): channel mismatch {x_l.shape[-3]} vs {x_history.shape[-3]}"
            )
        return x_l + x_history
    if mode == "concat":
        if weight is None:
            raise GraphError("fuse(concat) needs a 1x1 projection kernel")
        return F.conv2d(torch.cat([x_l, x_history], dim=-3), weight)
    raise GraphError(f"unknown fusion mode {mode!r}")


class SpatialGate(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size=7, padding=3, bias=True)

    def forward(self, x):
        return spatial_attention_theta(x, self.conv.weight, self.conv.bias)


class SecondOrderSpatialAttention(nn.Module):
    def __init__(self):
        super().__init__()
        self.theta1 = SpatialGate()
        self.theta2 = SpatialGate()

    def forward(self, x):
        m = self.theta1(x)
        m_deeper = self.theta2(m)
        return second_order_mix(x, m, m_deeper)


class ForwardBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.norm1 = nn.GroupNorm(norm_groups(channels), channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.norm2 = nn.GroupNorm(norm_groups(channels), channels)

    def forward(self, x):
        h = F.relu(self.norm1(self.conv1(x)))
        h = F.relu(self.norm2(self.conv2(h)))
        return x + h


class DownsampleConv(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1, bias=False)

    def forward(self, x):
        return self.conv(x)


class UpsampleConv(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 1, bias=False)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class ConcatFuse(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 1, bias=False)

    def forward(self, x_l, x_history):
        return fuse(x_l, x_history, "concat", self.conv.weight)


class PoseNet(nn.Module):
    """The assembled graph: stem, node blocks, edge adapters, fusions, head."""

    def __init__(self, graph: ModelGraph):
        super().__init__()
        self.graph = graph
        cfg = graph.config
        c1 = graph.width(1)
        self.stem_conv = nn.Conv2d(3, c1, 3, stride=2, padding=1, bias=False)
        self.stem_norm = nn.GroupNorm(norm_groups(c1), c1)

        self.blocks = nn.ModuleDict(
            {str(n): ForwardBlock(graph.width(n.level)) for n in graph.nodes}
        )
        downs, ups, fuses, attn = {}, {}, {}, {}
        for e in graph.edges:
            if e.kind == "downsample":
                downs[str(e)] = DownsampleConv(graph.width(e.src.level),
                                               graph.width(e.dst.level))
            elif e.kind == "upsample":
                ups[str(e)] = UpsampleConv(graph.width(e.src.level),
                                           graph.width(e.dst.level))
        for n in graph.nodes:
            if graph.fusion_mode(n) == "concat":
                c = graph.width(n.level)
                fuses[str(n)] = ConcatFuse(2 * c, c)
        for n in graph.hsa_nodes:
            attn[str(n)] = SecondOrderSpatialAttention()
        self.downs = nn.ModuleDict(downs)
        self.ups = nn.ModuleDict(ups)
        self.fuses = nn.ModuleDict(fuses)
        self.attn = nn.ModuleDict(attn)
        self.head = nn.Conv2d(c1, cfg.num_joints, 1, bias=True)

    def forward(self, x):
        graph = self.graph
        x = F.relu(self.stem_norm(self.stem_conv(x)))
        feats = {}
        for node in graph.topo_order:
            ins = graph.in_edges(node)
            if not ins:
                assert node == graph.entry
                h = x
            else:
                vals = []
                for e in ins:
                    v = feats[e.src]
                    if e.kind == "downsample":
                        v = self.downs[str(e)](v)
                    elif e.kind == "upsample":
                        v = self.ups[str(e)](v)
                    vals.append(v)
                if len(vals) == 1:
                    h = vals[0]
                elif graph.fusion_mode(node) == "concat":
                    h = self.fuses[str(node)](vals[0], vals[1])
                else:
                    h = fuse(vals[0], vals[1], "add")
            h = self.blocks[str(node)](h)
            key = str(node)
            if key in self.attn:
                h = self.attn[key](h)
            feats[node] = h
        return self.head(feats[graph.output])


def build_network(graph: ModelGraph) -> PoseNet:
    return PoseNet(graph)


def network_for(graph: ModelGraph) -> PoseNet:
    """Cached parameterless skeleton used by the functional entry points."""
    net = getattr(graph, "_net", None)
    if net is None:
        net = build_network(graph)
        graph._net = net
    return net


def init_params(graph: ModelGraph, seed: int,
                dtype: torch.dtype = torch.float32) -> ParameterStore:
    """Deterministic parameter store for a graph.

    Conv weights and biases draw from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
    via a single explicitly seeded generator; norm affines start at identity.
    The output head starts at zero so the network begins as the
    zero-heatmap predictor instead of spending early steps unlearning the
    random output scale.
    """
    net = network_for(graph)
    gen = torch.Generator().manual_seed(seed)
    params: ParameterStore = {}
    for name, module in net.named_modules():
        if name == "head":
            params["head.weight"] = torch.zeros_like(module.weight, dtype=dtype)
            params["head.bias"] = torch.zeros_like(module.bias, dtype=dtype)
        elif isinstance(module, nn.Conv2d):
            fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
            bound = 1.0 / math.sqrt(fan_in)
            w = torch.empty_like(module.weight, dtype=dtype)
            w.uniform_(-bound, bound, generator=gen)
            params[f"{name}.weight"] = w
            if module.bias is not None:
                b = torch.empty_like(module.bias, dtype=dtype)
                b.uniform_(-bound, bound, generator=gen)
                params[f"{name}.bias"] = b
        elif isinstance(module, nn.GroupNorm):
            params[f"{name}.weight"] = torch.ones(module.num_channels, dtype=dtype)
            params[f"{name}.bias"] = torch.zeros(module.num_channels, dtype=dtype)
    expected = {n for n, _ in net.named_parameters()}
    assert set(params) == expected
    return params


def _check_params(net: PoseNet, params: ParameterStore) -> None:
    expected = dict(net.named_parameters())
    missing = sorted(set(expected) - set(params))
    extra = sorted(set(params) - set(expected))
    if missing or extra:
        raise ConfigError(
            f"parameter store does not match graph: missing={missing[:4]} "
            f"extra={extra[:4]} (showing up to 4)"
        )
    for name, ref in expected.items():
        if params[name].shape != ref.shape:
            raise ConfigError(
                f"parameter {name} has shape {tuple(params[name].shape)}, "
                f"graph wants {tuple(ref.shape)}"
            )


def forward(graph: ModelGraph, params: ParameterStore,
            batch: torch.Tensor) -> torch.Tensor:
    """Pure forward pass: (N, 3, S, S) -> (N, J, S/2, S/2)."""
    net = network_for(graph)
    _check_params(net, params)
    s = graph.config.input_size
    if batch.ndim != 4 or batch.shape[1] != 3 or batch.shape[2:] != (s, s):
        raise ConfigError(
            f"expected batch of shape (N, 3, {s}, {s}), got {tuple(batch.shape)}"
        )
    return torch.func.functional_call(net, dict(params), (batch,))


def backward(graph: ModelGraph, params: ParameterStore, batch: torch.Tensor,
             upstream: torch.Tensor) -> ParameterStore:
    """Vector-Jacobian product of the forward pass w.r.t. every parameter."""
    leaves = {k: v.detach().clone().requires_grad_(True) for k, v in params.items()}
    out = forward(graph, leaves, batch)
    if upstream.shape != out.shape:
        raise ConfigError(
            f"upstream gradient shape {tuple(upstream.shape)} does not match "
            f"output {tuple(out.shape)}"
        )
    names = list(leaves)
    grads = torch.autograd.grad(out, [leaves[n] for n in names],
                                grad_outputs=upstream)
    return dict(zip(names, grads))
