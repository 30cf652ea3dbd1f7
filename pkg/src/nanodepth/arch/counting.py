"""Exact parameter and multiply-accumulate counts.

Only convolutions contribute MACs; batchnorm, SELU, pooling, upsampling and
the output affine map are excluded (batchnorm folds into the neighbouring
convs at inference). Batchnorm contributes 2*C parameters (scale and shift);
running statistics are buffers, not parameters.
"""
from __future__ import annotations

from .graph import Layer, NetworkGraph


def layer_params(layer: Layer) -> int:
    k2 = layer.kernel * layer.kernel
    if layer.kind == "conv":
        return k2 * layer.in_c * layer.out_c + (layer.out_c if layer.bias else 0)
    if layer.kind == "depthwise":
        return k2 * layer.out_c
    if layer.kind == "batchnorm":
        return 2 * layer.out_c
    return 0


def layer_macs(layer: Layer) -> int:
    k2 = layer.kernel * layer.kernel
    hw = layer.out_hw[0] * layer.out_hw[1]
    if layer.kind == "conv":
        return k2 * layer.in_c * layer.out_c * hw
    if layer.kind == "depthwise":
        return k2 * layer.out_c * hw
    return 0


def count_params(graph: NetworkGraph) -> int:
    return sum(layer_params(l) for l in graph.layers())


def count_macs(graph: NetworkGraph) -> int:
    return sum(layer_macs(l) for l in graph.layers())


def breakdown(graph: NetworkGraph) -> list[tuple[str, tuple[int, int, int], int, int]]:
    """Per-node ``(name, out_shape, params, macs)`` rows."""
    return [(n.name, n.out_shape, sum(layer_params(l) for l in n.layers),
             sum(layer_macs(l) for l in n.layers)) for n in graph.nodes]
