"""Analytic parameter and FLOP accounting for a model graph.

Counting conventions (one multiply-accumulate = one FLOP):

* convolution: params = C_out*C_in*k*k (+C_out if biased);
  flops = C_out*C_in*k*k*H_out*W_out.  Bias adds are not counted.
* group norm: params = 2*C; flops = 4*C*H*W (four elementwise passes).
* every other elementwise op costs one FLOP per element: relu C*H*W,
  residual/fusion add C*H*W, nearest-neighbor upsample C_out*H_out*W_out
  (one copy per output element), tanh H*W.
* concatenation moves memory only and costs nothing.

The walk below mirrors ``network.PoseNet`` layer by layer; edge adapters and
fusion projections are attributed to their destination node.  Totals are the
exact sum of the per-entry breakdown.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .graph import ModelGraph

ATTN_GATE_PARAMS = 2 * 49 + 1  # 7x7 conv on the 2-channel pooled stack, biased


@dataclass(frozen=True)
class Entry:
    name: str
    params: int
    flops: int


@dataclass(frozen=True)
class ComplexityReport:
    entries: tuple[Entry, ...]
    total_params: int
    total_flops: int
    input_size: int

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "total_params": self.total_params,
            "total_flops": self.total_flops,
            "entries": [
                {"name": e.name, "params": e.params, "flops": e.flops}
                for e in self.entries
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        lines = ["name\tparams\tflops"]
        lines += [f"{e.name}\t{e.params}\t{e.flops}" for e in self.entries]
        lines.append(f"total\t{self.total_params}\t{self.total_flops}")
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        width = max([len(e.name) for e in self.entries] + [5])
        lines = [f"{'name':<{width}}  {'params':>12}  {'flops':>16}"]
        for e in self.entries:
            lines.append(f"{e.name:<{width}}  {e.params:>12,}  {e.flops:>16,}")
        lines.append(
            f"{'total':<{width}}  {self.total_params:>12,}  {self.total_flops:>16,}"
        )
        return "\n".join(lines)


def conv_cost(c_in: int, c_out: int, k: int, h_out: int, w_out: int,
              bias: bool = False) -> tuple[int, int]:
    params = c_out * c_in * k * k + (c_out if bias else 0)
    flops = c_out * c_in * k * k * h_out * w_out
    return params, flops


def norm_cost(c: int, h: int, w: int) -> tuple[int, int]:
    return 2 * c, 4 * c * h * w


def block_cost(c: int, h: int, w: int) -> tuple[int, int]:
    """Residual block: two conv-norm-relu stages plus the shortcut add."""
    params = flops = 0
    for _ in range(2):
        p, f = conv_cost(c, c, 3, h, w)
        params, flops = params + p, flops + f
        p, f = norm_cost(c, h, w)
        params, flops = params + p, flops + f
        flops += c * h * w  # relu
    flops += c * h * w  # shortcut add
    return params, flops


def attention_cost(c: int, h: int, w: int) -> tuple[int, int]:
    """Both gates, the second-order map and the residual reweighting."""
    params = 2 * ATTN_GATE_PARAMS
    flops = 0
    for c_in in (c, 1):  # theta1 sees the features, theta2 the 1-channel map
        flops += 2 * c_in * h * w          # mean and max pooling
        flops += 1 * 2 * 49 * h * w        # 7x7 conv, 2 -> 1 channels
        flops += h * w                     # tanh
    flops += 2 * h * w                     # M * M' and M + (M * M')
    flops += 2 * c * h * w                 # f * (...) and the residual add
    return params, flops


def count_complexity(graph: ModelGraph) -> ComplexityReport:
    """Per-entry breakdown whose sums are the reported totals."""
    if not graph.nodes:
        return ComplexityReport((), 0, 0, graph.config.input_size)

    cfg = graph.config
    entries: list[Entry] = []

    c1, s1 = graph.width(1), graph.spatial(1)
    p, f = conv_cost(3, c1, 3, s1, s1)
    np_, nf = norm_cost(c1, s1, s1)
    entries.append(Entry("stem", p + np_, f + nf + c1 * s1 * s1))

    for node in graph.topo_order:
        c, s = graph.width(node.level), graph.spatial(node.level)
        params = flops = 0
        for e in graph.in_edges(node):
            if e.kind == "downsample":
                p, f = conv_cost(graph.width(e.src.level), c, 3, s, s)
                params, flops = params + p, flops + f
            elif e.kind == "upsample":
                c_src = graph.width(e.src.level)
                flops += c_src * s * s  # nearest-neighbor copy at dst size
                p, f = conv_cost(c_src, c, 1, s, s)
                params, flops = params + p, flops + f
        mode = graph.fusion_mode(node)
        if mode == "concat":
            p, f = conv_cost(2 * c, c, 1, s, s)
            params, flops = params + p, flops + f
        elif mode == "add":
            flops += c * s * s
        p, f = block_cost(c, s, s)
        params, flops = params + p, flops + f
        if node in graph.hsa_nodes:
            p, f = attention_cost(c, s, s)
            params, flops = params + p, flops + f
        entries.append(Entry(str(node), params, flops))

    p, f = conv_cost(c1, cfg.num_joints, 1, s1, s1, bias=True)
    entries.append(Entry("head", p, f))

    return ComplexityReport(
        tuple(entries),
        sum(e.params for e in entries),
        sum(e.flops for e in entries),
        cfg.input_size,
    )
