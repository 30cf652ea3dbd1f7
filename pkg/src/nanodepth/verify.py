"""Randomised finite-difference checks over every differentiable op and a whole network."""
from __future__ import annotations

import numpy as np

from . import engine as E
from .arch import backward, build_network, forward, init_weights, reduced_config
from .engine.gradcheck import numerical_gradient

OP_TOLERANCE = 1e-5
NETWORK_TOLERANCE = 1e-4


def _away_from_zero(x, margin=1e-3):
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * (margin + np.abs(x)), x)


def _no_pool_ties(x, gap=1e-3):
    """True when every 2x2 window's largest value leads the runner-up by ``gap``."""
    n, c, h, w = x.shape
    win = np.sort(x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
                  .reshape(n, c, h // 2, w // 2, 4), axis=-1)
    return bool((win[..., 3] - win[..., 2] > gap).all())


def _case(op: str, rng: np.random.Generator):
    """Returns ``(forward, backward, inputs)`` for one random instance of ``op``."""
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 4))
    if op in ("conv2d", "depthwise"):
        k = int(rng.choice([1, 3, 5]))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, k // 2 + 1))
        h, w = (int(v) for v in rng.integers(k, k + 4, size=2))
        x = rng.standard_normal((n, c, h, w))
        if op == "conv2d":
            oc = int(rng.integers(1, 4))
            wt = rng.standard_normal((oc, c, k, k))
            b = rng.standard_normal(oc)
            return (lambda x, wt, b: E.conv2d(x, wt, b, stride, pad),
                    lambda d, x, wt, b: E.conv2d_backward(d, x, wt, b, stride, pad),
                    [x, wt, b])
        wt = rng.standard_normal((c, 1, k, k))
        return (lambda x, wt: E.depthwise_conv2d(x, wt, stride, pad),
                lambda d, x, wt: E.depthwise_conv2d_backward(d, x, wt, stride, pad),
                [x, wt])
    h, w = (2 * int(v) for v in rng.integers(1, 4, size=2))
    x = rng.standard_normal((n, c, h, w))
    if op == "pointwise":
        oc = int(rng.integers(1, 5))
        return (E.pointwise_conv, E.pointwise_conv_backward,
                [x, rng.standard_normal((oc, c, 1, 1)), rng.standard_normal(oc)])
    if op == "selu":
        return E.selu, lambda d, x: [E.selu_backward(d, x)], [_away_from_zero(x)]
    if op == "batchnorm":
        mean, var = rng.standard_normal(c), rng.uniform(0.5, 2.0, c)
        g, b = rng.standard_normal(c), rng.standard_normal(c)
        return (lambda x, g, b: E.batchnorm(x, mean, var, g, b),
                lambda d, x, g, b: E.batchnorm_backward(d, x, mean, var, g, b),
                [x, g, b])
    if op == "batchnorm_train":
        x = x * rng.uniform(0.5, 2.0) + rng.standard_normal()
        if x.shape[0] * x.shape[2] * x.shape[3] < 2:
            x = rng.standard_normal((2, c, 2, 2))
        return (lambda x, g, b: E.batchnorm_train(x, g, b)[0],
                lambda d, x, g, b: E.batchnorm_train_backward(d, x, g, b),
                [x, rng.standard_normal(c), rng.standard_normal(c)])
    if op in ("avg_pool", "max_pool"):
        kind = op.split("_")[0]
        while kind == "max" and not _no_pool_ties(x):
            x = rng.standard_normal(x.shape)
        return (lambda x: E.pool2(x, kind), lambda d, x: [E.pool2_backward(d, x, kind)], [x])
    if op == "upsample":
        return (E.bilinear_upsample2x, lambda d, x: [E.bilinear_upsample2x_backward(d, x)], [x])
    if op == "concat":
        y = rng.standard_normal((n, int(rng.integers(1, 4)), h, w))
        return (E.concat_channels,
                lambda d, x, y: E.split_channels(d, [x.shape[1], y.shape[1]]), [x, y])
    raise ValueError(op)


OPS = ("conv2d", "depthwise", "pointwise", "selu", "batchnorm", "batchnorm_train",
       "avg_pool", "max_pool", "upsample", "concat")


def check_ops(cases: int = 100, seed: int = 0, ops=OPS) -> dict[str, float]:
    """Max relative error per op over ``cases`` random double-precision instances."""
    worst = {}
    for i, op in enumerate(ops):
        rng = np.random.default_rng([seed, i])
        worst[op] = max(E.grad_check(*_case(op, rng), rng=rng) for _ in range(cases))
    return worst


def _window_argmax(x):
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return win.reshape(n, c, h // 2, w // 2, 4).argmax(-1)


def _kink_pattern(graph, W, x):
    """SELU input signs and max-pool winners; the loss is smooth while these hold."""
    _, tape = forward(graph, W, x, training=True, record=True)
    pattern = []
    for node in graph.nodes:
        for layer, inp in zip(node.layers, tape.layer_inputs.get(node.id, [])):
            if layer.kind == "selu":
                pattern.append(inp > 0)
            elif layer.kind == "pool" and layer.pool == "max":
                pattern.append(_window_argmax(inp))
    return pattern


def _straddles_kink(graph, W, x, arr, idx, step):
    flat = arr.reshape(-1)
    orig = flat[idx]
    flat[idx] = orig + step
    hi = _kink_pattern(graph, W, x)
    flat[idx] = orig - step
    lo = _kink_pattern(graph, W, x)
    flat[idx] = orig
    return any(not np.array_equal(a, b) for a, b in zip(hi, lo))


def _smooth_coordinate(graph, W, x, arr, rng, step, draws=20, shrinks=4):
    """Pick an element of ``arr`` and a step that do not straddle a kink."""
    for _ in range(draws):
        idx = int(rng.integers(arr.size))
        for k in range(shrinks):
            h = step / 10 ** k
            if not _straddles_kink(graph, W, x, arr, idx, h):
                return idx, h
    raise RuntimeError("no kink-free coordinate found")


def tiny_network_config(input_hw=(32, 32)):
    return reduced_config(input_hw=input_hw, stem_channels=4, modules=(2, 1), growth=3,
                          transitions=(6,), bottleneck=6, decoder_width=4, expand_mult=2)


def check_network(cases: int = 100, seed: int = 0, coords: int = 4, batch: int = 1,
                  input_hw=(32, 32), step: float = 1e-5) -> float:
    """End-to-end check on a tiny network in training mode.

    Each case draws fresh double-precision weights and input, then compares
    ``coords`` randomly chosen weight elements and one input element against
    central differences of ``sum(output * r)``. Errors are scaled by the
    largest analytic gradient of the tensor the coordinate belongs to.
    A step that flips a SELU input sign or a max-pool winner straddles a kink,
    where central differences are meaningless; the step is shrunk and, failing
    that, the coordinate is redrawn.
    """
    graph = build_network(tiny_network_config(input_hw))
    names = [p.name for p in graph.trainable()]
    worst = 0.0
    for case in range(cases):
        rng = np.random.default_rng([seed, 1000 + case])
        W = init_weights(graph, rng, dtype=np.float64)
        for p in graph.trainable():
            if p.init != "lecun":  # perturb bias/bn params away from their trivial init
                W[p.name] = W[p.name] + 0.1 * rng.standard_normal(p.shape)
        x = rng.standard_normal((batch,) + graph.input_shape)
        out, tape = forward(graph, W, x, training=True, record=True)
        proj = rng.standard_normal(out.shape)
        grads, dx = backward(graph, W, tape, proj, input_grad=True)

        def loss():
            return float(np.sum(forward(graph, W, x, training=True) * proj))

        picks = [(names[j], W[names[j]], grads[names[j]])
                 for j in rng.choice(len(names), size=coords, replace=False)]
        picks.append(("input", x, dx))
        for _, arr, g in picks:
            idx, h = _smooth_coordinate(graph, W, x, arr, rng, step)
            num = numerical_gradient(loss, arr, h, indices=[idx]).reshape(-1)[idx]
            scale = max(np.abs(g).max(), 1e-12)
            worst = max(worst, abs(g.reshape(-1)[idx] - num) / scale)
    return float(worst)
