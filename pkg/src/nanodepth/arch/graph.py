"""Compile a :class:`NetworkConfig` into an executable DAG and run it.

Each graph node is either a primitive (pool, upsample, concat) or a short
linear chain of primitive layers (a conv plus activation, a PBEP module, an
EP module). Weights live in a flat ``dict`` keyed by parameter name so the
optimiser and checkpoint code never need to know the topology.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import engine as E
from .config import ConvStage, EpSpec, NetworkConfig, PbepSpec

INPUT = -1


class GraphError(ValueError):
    """A configuration that cannot be wired into a consistent graph."""

    def __init__(self, node: str, message: str):
        super().__init__(f"{node}: {message}")
        self.node = node


@dataclass(frozen=True)
class Layer:
    kind: str  # conv | depthwise | batchnorm | selu | pool | upsample | affine
    in_c: int
    out_c: int
    out_hw: tuple[int, int]
    kernel: int = 1
    stride: int = 1
    pad: int = 0
    bias: bool = False
    prefix: str = ""
    pool: str = ""
    eps: float = 1e-5
    momentum: float = 0.99
    scale: float = 1.0
    shift: float = 0.0

    def pname(self, suffix: str) -> str:
        return f"{self.prefix}.{suffix}"


@dataclass
class Node:
    id: int
    name: str
    kind: str  # conv | pool | pbep | ep | stage | concat | upsample
    inputs: tuple[int, ...]
    out_shape: tuple[int, int, int]
    layers: list[Layer] = field(default_factory=list)
    spec: object = None


@dataclass(frozen=True)
class ParamEntry:
    name: str
    shape: tuple[int, ...]
    init: str  # lecun | zeros | ones
    fan_in: int = 1
    trainable: bool = True


@dataclass
class NetworkGraph:
    config: NetworkConfig | None
    input_shape: tuple[int, int, int]
    nodes: list[Node]
    params: list[ParamEntry]

    @property
    def output(self) -> Node:
        return self.nodes[-1]

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def trainable(self) -> list[ParamEntry]:
        return [p for p in self.params if p.trainable]

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {p.name: p.shape for p in self.params}

    def layers(self):
        for n in self.nodes:
            yield from n.layers


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

class _Builder:
    def __init__(self, in_shape):
        self.nodes: list[Node] = []
        self.params: list[ParamEntry] = []
        self.in_shape = in_shape

    def shape(self, nid):
        return self.in_shape if nid == INPUT else self.nodes[nid].out_shape

    def add(self, name, kind, inputs, out_shape, layers=(), spec=None):
        node = Node(len(self.nodes), name, kind, tuple(inputs), out_shape, list(layers), spec)
        self.nodes.append(node)
        for layer in node.layers:
            self._register(layer)
        return node.id

    def _register(self, layer: Layer):
        k = layer.kernel
        if layer.kind == "conv":
            self.params.append(ParamEntry(layer.pname("w"), (layer.out_c, layer.in_c, k, k),
                                          "lecun", layer.in_c * k * k))
            if layer.bias:
                self.params.append(ParamEntry(layer.pname("b"), (layer.out_c,), "zeros"))
        elif layer.kind == "depthwise":
            self.params.append(ParamEntry(layer.pname("w"), (layer.out_c, 1, k, k), "lecun", k * k))
        elif layer.kind == "batchnorm":
            c = layer.out_c
            self.params += [
                ParamEntry(layer.pname("gamma"), (c,), "ones"),
                ParamEntry(layer.pname("beta"), (c,), "zeros"),
                ParamEntry(layer.pname("running_mean"), (c,), "zeros", trainable=False),
                ParamEntry(layer.pname("running_var"), (c,), "ones", trainable=False),
            ]

    # -- composite nodes ---------------------------------------------------

    def conv(self, name, src, out_c, k, stride=1, bias=False, act=True):
        c, h, w = self.shape(src)
        if out_c < 1:
            raise GraphError(name, f"output channels must be >= 1, got {out_c}")
        if k % 2 == 0:
            raise GraphError(name, f"kernel must be odd, got {k}")
        pad = k // 2
        ho = E.conv_output_size(h, k, stride, pad)
        wo = E.conv_output_size(w, k, stride, pad)
        if ho < 1 or wo < 1:
            raise GraphError(name, f"non-positive output size {ho}x{wo}")
        layers = [Layer("conv", c, out_c, (ho, wo), kernel=k, stride=stride, pad=pad,
                        bias=bias, prefix=name)]
        if act:
            layers.append(Layer("selu", out_c, out_c, (ho, wo)))
        return self.add(name, "conv", [src], (out_c, ho, wo), layers)

    def pool(self, name, src, kind):
        c, h, w = self.shape(src)
        if h % 2 or w % 2:
            raise GraphError(name, f"cannot pool odd spatial dims {h}x{w}")
        if kind not in ("avg", "max"):
            raise GraphError(name, f"unknown pool kind {kind!r}")
        out = (c, h // 2, w // 2)
        return self.add(name, "pool", [src], out, [Layer("pool", c, c, out[1:], pool=kind)])

    def upsample(self, name, src, scale=1.0, shift=0.0):
        c, h, w = self.shape(src)
        out = (c, 2 * h, 2 * w)
        layers = [Layer("upsample", c, c, out[1:])]
        if scale != 1.0 or shift != 0.0:
            layers.append(Layer("affine", c, c, out[1:], scale=scale, shift=shift))
        return self.add(name, "upsample", [src], out, layers)

    def concat(self, name, srcs):
        shapes = [self.shape(s) for s in srcs]
        hw = shapes[0][1:]
        for s in shapes[1:]:
            if s[1:] != hw:
                raise GraphError(name, f"spatial mismatch in concat: {shapes}")
        return self.add(name, "concat", srcs, (sum(s[0] for s in shapes),) + hw)

    def pbep(self, name, src, spec: PbepSpec):
        c, h, w = self.shape(src)
        hw = (h, w)
        if not 1 <= spec.proj1_out <= c:
            raise GraphError(name, f"proj1_out={spec.proj1_out} must be in [1, {c}] (incoming)")
        if spec.expand_out < spec.proj1_out:
            raise GraphError(name, f"expand_out={spec.expand_out} < proj1_out={spec.proj1_out}")
        if spec.growth_out < 1:
            raise GraphError(name, "growth_out must be >= 1")
        if spec.dw_kernel % 2 == 0:
            raise GraphError(name, f"depthwise kernel must be odd, got {spec.dw_kernel}")
        p, e, g, k = spec.proj1_out, spec.expand_out, spec.growth_out, spec.dw_kernel
        layers = [
            Layer("conv", c, p, hw, prefix=f"{name}.proj1"),
            Layer("batchnorm", p, p, hw, prefix=f"{name}.bn", eps=spec.bn_epsilon,
                  momentum=spec.bn_momentum),
            Layer("selu", p, p, hw),
            Layer("conv", p, e, hw, prefix=f"{name}.expand"),
            Layer("selu", e, e, hw),
            Layer("depthwise", e, e, hw, kernel=k, pad=k // 2, prefix=f"{name}.dw"),
            Layer("selu", e, e, hw),
            Layer("conv", e, g, hw, prefix=f"{name}.proj2"),
        ]
        return self.add(name, "pbep", [src], (g, h, w), layers, spec)

    def stage(self, name, src, spec):
        c, h, w = self.shape(src)
        hw = (h, w)
        if isinstance(spec, EpSpec):
            if spec.expand_out < c:
                raise GraphError(name, f"EP expand_out={spec.expand_out} < incoming {c}")
            if spec.out < 1:
                raise GraphError(name, "EP out must be >= 1")
            if spec.dw_kernel % 2 == 0:
                raise GraphError(name, f"depthwise kernel must be odd, got {spec.dw_kernel}")
            e, k = spec.expand_out, spec.dw_kernel
            layers = [
                Layer("conv", c, e, hw, prefix=f"{name}.expand"),
                Layer("selu", e, e, hw),
                Layer("depthwise", e, e, hw, kernel=k, pad=k // 2, prefix=f"{name}.dw"),
                Layer("selu", e, e, hw),
                Layer("conv", e, spec.out, hw, prefix=f"{name}.project"),
            ]
            return self.add(name, "ep", [src], (spec.out, h, w), layers, spec)
        if isinstance(spec, ConvStage):
            if spec.out < 1 or spec.kernel % 2 == 0:
                raise GraphError(name, f"invalid conv stage {spec}")
            k = spec.kernel
            layers = [Layer("conv", c, spec.out, hw, kernel=k, pad=k // 2, bias=True,
                            prefix=name),
                      Layer("selu", spec.out, spec.out, hw)]
            return self.add(name, "stage", [src], (spec.out, h, w), layers, spec)
        raise GraphError(name, f"unknown stage spec {spec!r}")


def build_network(config: NetworkConfig) -> NetworkGraph:
    """Wire stem, dense blocks, transitions, decoder and head into a graph.

    Raises:
        GraphError: naming the first node whose dimensions are inconsistent.
    """
    h, w = config.input_hw
    nb = len(config.blocks)
    if nb < 1:
        raise GraphError("config", "need at least one dense block")
    div = config.resolution_divisor()
    if h % div or w % div:
        raise GraphError("input", f"input {h}x{w} must be divisible by {div} for {nb} blocks")
    if len(config.transitions) != nb - 1:
        raise GraphError("transitions", f"expected {nb - 1} transitions, got {len(config.transitions)}")
    if len(config.decoder) != nb:
        raise GraphError("decoder", f"expected {nb} decoder blocks, got {len(config.decoder)}")
    if config.in_channels < 1:
        raise GraphError("input", "input channels must be >= 1")

    b = _Builder((config.in_channels, h, w))
    named: dict[str, int] = {}
    stem = b.conv("stem", INPUT, config.stem_channels, config.stem_kernel, stride=2, bias=True)
    named["stem"] = stem
    cur = b.pool("stem.pool", stem, config.stem_pool)

    for bi, modules in enumerate(config.blocks, start=1):
        if not modules:
            raise GraphError(f"block{bi}", "dense block has no modules")
        members = [cur]
        for k, spec in enumerate(modules, start=1):
            src = members[0] if len(members) == 1 else b.concat(f"block{bi}.cat{k}", members)
            members.append(b.pbep(f"block{bi}.pbep{k}", src, spec))
        cur = b.concat(f"block{bi}.out", members)
        named[f"block{bi}"] = cur
        if bi < nb:
            t = b.conv(f"transition{bi}", cur, config.transitions[bi - 1], 1)
            named[f"transition{bi}"] = t
            cur = b.pool(f"transition{bi}.pool", t, config.transition_pool)

    cur = b.conv("bottleneck", cur, config.bottleneck, 1)
    for i, (blk, skip) in enumerate(zip(config.decoder, config.skip_names()), start=1):
        up = b.upsample(f"up{i}.upsample", cur)
        if skip not in named:
            raise GraphError(f"up{i}", f"unknown skip source {skip!r}")
        if b.shape(named[skip])[1:] != b.shape(up)[1:]:
            raise GraphError(f"up{i}", f"skip {skip!r} has spatial dims {b.shape(named[skip])[1:]}"
                                       f", upsampled tensor has {b.shape(up)[1:]}")
        cat = b.concat(f"up{i}.cat", [up, named[skip]])
        a = b.stage(f"up{i}.A", cat, blk.stage_a)
        cur = b.stage(f"up{i}.B", a, blk.stage_b)

    head = b.conv("head", cur, 1, config.head_kernel, bias=True, act=False)
    out = b.upsample("head.upsample", head, config.output_scale, config.output_shift)
    if b.shape(out) != (1, h, w):
        raise GraphError("head.upsample", f"output shape {b.shape(out)} != (1, {h}, {w})")
    return NetworkGraph(config, (config.in_channels, h, w), b.nodes, b.params)


def single_layer_graph(kind: str, in_c: int, out_c: int, hw: tuple[int, int], kernel: int = 1,
                       stride: int = 1, bias: bool = False) -> NetworkGraph:
    """A graph holding exactly one conv (``kind="conv"``) or depthwise layer."""
    b = _Builder((in_c,) + tuple(hw))
    if kind == "conv":
        b.conv("layer", INPUT, out_c, kernel, stride=stride, bias=bias, act=False)
    elif kind == "depthwise":
        if in_c != out_c:
            raise GraphError("layer", "depthwise preserves channel count")
        ho = E.conv_output_size(hw[0], kernel, stride, kernel // 2)
        wo = E.conv_output_size(hw[1], kernel, stride, kernel // 2)
        layer = Layer("depthwise", in_c, in_c, (ho, wo), kernel=kernel, stride=stride,
                      pad=kernel // 2, prefix="layer")
        b.add("layer", "conv", [INPUT], (in_c, ho, wo), [layer])
    else:
        raise ValueError(kind)
    return NetworkGraph(None, b.in_shape, b.nodes, b.params)


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

def init_weights(graph: NetworkGraph, rng: np.random.Generator | int = 0,
                 dtype=np.float32) -> dict[str, np.ndarray]:
    """LeCun-normal conv weights, zero biases, identity batchnorm."""
    if not isinstance(rng, np.random.Generator):
        rng = E.make_rng(rng)
    weights = {}
    for p in graph.params:
        if p.init == "lecun":
            weights[p.name] = E.lecun_normal_init(p.shape, p.fan_in, rng, dtype)
        elif p.init == "ones":
            weights[p.name] = np.ones(p.shape, dtype=dtype)
        else:
            weights[p.name] = np.zeros(p.shape, dtype=dtype)
    return weights


def check_weights(graph: NetworkGraph, weights: dict[str, np.ndarray]) -> None:
    for p in graph.params:
        if p.name not in weights:
            raise GraphError(p.name, "missing parameter")
        if tuple(weights[p.name].shape) != p.shape:
            raise GraphError(p.name, f"shape {weights[p.name].shape} != expected {p.shape}")


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass
class Tape:
    """Activations recorded by a forward pass for the matching backward."""
    node_inputs: dict[int, list[np.ndarray]]
    layer_inputs: dict[int, list[np.ndarray]]
    training: bool
    stat_updates: dict[str, np.ndarray]


def _layer_forward(layer: Layer, x, W, training, updates):
    k = layer.kind
    if k == "conv":
        b = W[layer.pname("b")] if layer.bias else None
        return E.conv2d(x, W[layer.pname("w")], b, layer.stride, layer.pad)
    if k == "depthwise":
        return E.depthwise_conv2d(x, W[layer.pname("w")], layer.stride, layer.pad)
    if k == "selu":
        return E.selu(x)
    if k == "batchnorm":
        g, bt = W[layer.pname("gamma")], W[layer.pname("beta")]
        rm, rv = W[layer.pname("running_mean")], W[layer.pname("running_var")]
        if training:
            y, mean, var = E.batchnorm_train(x, g, bt, layer.eps)
            if updates is not None:
                nm, nv = E.update_running_stats(rm, rv, mean, var, layer.momentum)
                updates[layer.pname("running_mean")] = nm
                updates[layer.pname("running_var")] = nv
            return y
        return E.batchnorm(x, rm, rv, g, bt, layer.eps)
    if k == "pool":
        return E.pool2(x, layer.pool)
    if k == "upsample":
        return E.bilinear_upsample2x(x)
    if k == "affine":
        return (x * layer.scale + layer.shift).astype(x.dtype, copy=False)
    raise ValueError(f"unknown layer kind {k!r}")


def _layer_backward(layer: Layer, dy, x, W, training, grads):
    k = layer.kind
    if k == "conv":
        b = W[layer.pname("b")] if layer.bias else None
        dx, dw, db = E.conv2d_backward(dy, x, W[layer.pname("w")], b, layer.stride, layer.pad)
        grads[layer.pname("w")] = dw
        if layer.bias:
            grads[layer.pname("b")] = db
        return dx
    if k == "depthwise":
        dx, dw = E.depthwise_conv2d_backward(dy, x, W[layer.pname("w")], layer.stride, layer.pad)
        grads[layer.pname("w")] = dw
        return dx
    if k == "selu":
        return E.selu_backward(dy, x)
    if k == "batchnorm":
        g, bt = W[layer.pname("gamma")], W[layer.pname("beta")]
        if training:
            dx, dg, db = E.batchnorm_train_backward(dy, x, g, bt, layer.eps)
        else:
            dx, dg, db = E.batchnorm_backward(dy, x, W[layer.pname("running_mean")],
                                              W[layer.pname("running_var")], g, bt, layer.eps)
        grads[layer.pname("gamma")] = dg
        grads[layer.pname("beta")] = db
        return dx
    if k == "pool":
        return E.pool2_backward(dy, x, layer.pool)
    if k == "upsample":
        return E.bilinear_upsample2x_backward(dy, x)
    if k == "affine":
        return dy * layer.scale
    raise ValueError(f"unknown layer kind {k!r}")


def _last_use(graph):
    last = {}
    for n in graph.nodes:
        for i in n.inputs:
            last[i] = n.id
    return last


def forward(graph: NetworkGraph, weights: dict[str, np.ndarray], x: np.ndarray,
            training: bool = False, record: bool = False):
    """Run the network on ``x`` of shape (n, C, H, W).

    In inference mode batchnorm uses running statistics. With ``record=True``
    returns ``(output, tape)`` for :func:`backward`; in training mode the
    tape's ``stat_updates`` hold the new running statistics, which the caller
    decides whether to commit.
    """
    E.check_tensor(x)
    if tuple(x.shape[1:]) != graph.input_shape:
        raise E.ShapeError(f"input shape {x.shape[1:]} does not match graph {graph.input_shape}")
    values: dict[int, np.ndarray] = {INPUT: x}
    last = _last_use(graph)
    tape = Tape({}, {}, training, {}) if record else None
    updates = tape.stat_updates if record else ({} if training else None)
    for node in graph.nodes:
        ins = [values[i] for i in node.inputs]
        if node.kind == "concat":
            y = E.concat_channels(*ins)
            if record:
                tape.node_inputs[node.id] = [t.shape[1] for t in ins]
        else:
            y = ins[0]
            seen = []
            for layer in node.layers:
                seen.append(y)
                y = _layer_forward(layer, y, weights, training, updates)
            if record:
                tape.layer_inputs[node.id] = seen
        values[node.id] = y
        if not record:
            for i in node.inputs:
                if last.get(i) == node.id and i != INPUT:
                    del values[i]
    out = values[graph.output.id]
    return (out, tape) if record else out


def backward(graph: NetworkGraph, weights: dict[str, np.ndarray], tape: Tape,
             dout: np.ndarray, input_grad: bool = False):
    """Gradients of a scalar loss given ``dout = dL/d(output)``.

    Returns a dict of trainable-parameter gradients, plus ``dL/dx`` when
    ``input_grad`` is set.
    """
    grads: dict[str, np.ndarray] = {}
    pending: dict[int, np.ndarray] = {graph.output.id: dout}
    for node in reversed(graph.nodes):
        dy = pending.pop(node.id, None)
        if dy is None:
            continue
        if node.kind == "concat":
            parts = E.split_channels(dy, tape.node_inputs[node.id])
        else:
            for layer, x in zip(reversed(node.layers), reversed(tape.layer_inputs[node.id])):
                dy = _layer_backward(layer, dy, x, weights, tape.training, grads)
            parts = [dy]
        for src, g in zip(node.inputs, parts):
            pending[src] = pending[src] + g if src in pending else g
    for p in graph.trainable():
        if p.name not in grads:
            grads[p.name] = np.zeros(p.shape, dtype=weights[p.name].dtype)
    if input_grad:
        return grads, pending.get(INPUT)
    return grads
