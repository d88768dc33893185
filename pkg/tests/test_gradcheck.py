"""Finite-difference validation of analytic gradients.

Every case builds a scalar loss (a fixed random projection of the output),
computes autograd gradients, and compares them against central finite
differences in float64 with step 1e-5. Agreement is the fraction of
coordinates whose relative error is at most 1e-4.
"""

import torch

from bridgepose.config import ModelConfig
from bridgepose.graph import build_graph
from bridgepose.network import ForwardBlock, backward, forward, fuse, hsa_forward, init_params

from oracles import finite_diff_grads, gradient_agreement

STEP = 1e-5


def _autograd(func, params):
    leaves = {k: v.detach().clone().requires_grad_(True) for k, v in params.items()}
    loss = func(leaves)
    grads = torch.autograd.grad(loss, list(leaves.values()))
    return dict(zip(leaves.keys(), grads))


def _agreement(func, params):
    analytic = _autograd(func, params)
    numeric = finite_diff_grads(func, params, step=STEP)
    return gradient_agreement(analytic, numeric)


def hsa_case():
    gen = torch.Generator().manual_seed(100)

    def draw(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    x = draw(1, 3, 8, 8)
    v = draw(1, 3, 8, 8)
    params = {
        "theta1.weight": 0.2 * draw(1, 2, 7, 7),
        "theta1.bias": 0.2 * draw(1),
        "theta2.weight": 0.2 * draw(1, 2, 7, 7),
        "theta2.bias": 0.2 * draw(1),
    }

    def func(p):
        return (hsa_forward(x, p) * v).sum()

    return _agreement(func, params)


def fuse_add_case():
    gen = torch.Generator().manual_seed(101)

    def draw(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    v = draw(1, 3, 4, 4)
    params = {"a": draw(1, 3, 4, 4), "b": draw(1, 3, 4, 4)}

    def func(p):
        return (fuse(p["a"], p["b"], "add") * v).sum()

    return _agreement(func, params)


def fuse_concat_case():
    gen = torch.Generator().manual_seed(102)

    def draw(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    v = draw(1, 3, 4, 4)
    params = {
        "a": draw(1, 3, 4, 4),
        "b": draw(1, 3, 4, 4),
        "weight": draw(3, 6, 1, 1),
    }

    def func(p):
        return (fuse(p["a"], p["b"], "concat", p["weight"]) * v).sum()

    return _agreement(func, params)


def forward_block_case():
    gen = torch.Generator().manual_seed(103)

    def draw(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    block = ForwardBlock(4)
    x = draw(1, 4, 8, 8)
    v = draw(1, 4, 8, 8)
    params = {}
    for name, ref in block.named_parameters():
        params[name] = draw(*ref.shape) * 0.3
    # identity-like norm affines keep activations in a well-behaved range
    params["norm1.weight"] = 1.0 + 0.1 * draw(4)
    params["norm2.weight"] = 1.0 + 0.1 * draw(4)

    def func(p):
        return (torch.func.functional_call(block, p, (x,)) * v).sum()

    return _agreement(func, params)


def mini_graph_case():
    cfg = ModelConfig(levels=2, columns=4, num_joints=2, base_channels=2,
                      channel_multipliers=(1, 2), input_size=16, output_size=8)
    graph = build_graph(cfg)
    params = init_params(graph, seed=104, dtype=torch.float64)
    gen = torch.Generator().manual_seed(105)
    x = torch.randn(1, 3, 16, 16, generator=gen, dtype=torch.float64)
    v = torch.randn(1, 2, 8, 8, generator=gen, dtype=torch.float64)

    def func(p):
        return (forward(graph, p, x) * v).sum()

    analytic = backward(graph, params, x, v)
    numeric = finite_diff_grads(func, params, step=STEP)
    return gradient_agreement(analytic, numeric)


GRADCHECK_CASES = {
    "hsa": hsa_case,
    "fuse_add": fuse_add_case,
    "fuse_concat": fuse_concat_case,
    "forward_block": forward_block_case,
    "mini_graph": mini_graph_case,
}


def test_hsa_gradients():
    fraction, worst = hsa_case()
    assert fraction >= 0.99, f"agreement {fraction}, worst rel err {worst}"


def test_fuse_add_gradients():
    fraction, worst = fuse_add_case()
    assert fraction == 1.0, f"agreement {fraction}, worst rel err {worst}"


def test_fuse_concat_gradients():
    fraction, worst = fuse_concat_case()
    assert fraction >= 0.99, f"agreement {fraction}, worst rel err {worst}"


def test_forward_block_gradients():
    fraction, worst = forward_block_case()
    assert fraction >= 0.99, f"agreement {fraction}, worst rel err {worst}"


def test_mini_graph_gradients():
    fraction, worst = mini_graph_case()
    assert fraction >= 0.99, f"agreement {fraction}, worst rel err {worst}"
