import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nanodepth.arch import (
    FormatError,
    ConvStage,
    DecoderBlock,
    GraphError,
    NetworkConfig,
    backward,
    breakdown,
    build_network,
    count_macs,
    count_params,
    default_config,
    dump_config,
    forward,
    init_weights,
    interpolate_growth,
    load_weights,
    minimal_config,
    parse_config,
    reduced_config,
    save_weights,
    single_layer_graph,
)
from nanodepth.arch.config import DEFAULT_LISTED, PbepSpec
from nanodepth.arch.serialize import decode_weights, encode_weights

# Every non-elided row of the microarchitecture table: node name -> (C, H, W).
REFERENCE_ROWS = {
    "nyu": {
        "stem": (15, 240, 320),
        "block1.pbep1": (16, 120, 160), "block1.pbep2": (16, 120, 160),
        "block1.pbep3": (18, 120, 160), "block1.pbep4": (20, 120, 160),
        "block1.pbep6": (20, 120, 160),
        "transition1.pool": (57, 60, 80),
        "block2.pbep1": (11, 60, 80), "block2.pbep2": (15, 60, 80),
        "block2.pbep3": (19, 60, 80), "block2.pbep4": (19, 60, 80),
        "block2.pbep12": (22, 60, 80),
        "transition2.pool": (133, 30, 40),
        "block3.pbep1": (17, 30, 40), "block3.pbep2": (16, 30, 40),
        "block3.pbep3": (16, 30, 40), "block3.pbep4": (17, 30, 40),
        "block3.pbep32": (20, 30, 40),
        "transition3.pool": (336, 15, 20),
        "block4.pbep1": (19, 15, 20), "block4.pbep2": (15, 15, 20),
        "block4.pbep3": (19, 15, 20), "block4.pbep4": (18, 15, 20),
        "block4.pbep32": (15, 15, 20),
        "bottleneck": (302, 15, 20),
        "up1.A": (138, 30, 40), "up1.B": (118, 30, 40),
        "up2.A": (54, 60, 80), "up2.B": (40, 60, 80),
        "up3.A": (23, 120, 160), "up3.B": (16, 120, 160),
        "up4.A": (11, 240, 320), "up4.B": (12, 240, 320),
        "head": (1, 240, 320), "head.upsample": (1, 480, 640),
    },
    "kitti": {
        "stem": (14, 192, 640),
        "block1.pbep1": (13, 96, 320), "block1.pbep2": (15, 96, 320),
        "block1.pbep3": (18, 96, 320), "block1.pbep4": (13, 96, 320),
        "block1.pbep6": (17, 96, 320),
        "transition1.pool": (30, 48, 160),
        "block2.pbep1": (9, 48, 160), "block2.pbep2": (13, 48, 160),
        "block2.pbep3": (13, 48, 160), "block2.pbep4": (18, 48, 160),
        "block2.pbep12": (19, 48, 160),
        "transition2.pool": (79, 24, 80),
        "block3.pbep1": (13, 24, 80), "block3.pbep2": (14, 24, 80),
        "block3.pbep3": (18, 24, 80), "block3.pbep4": (15, 24, 80),
        "block3.pbep32": (14, 24, 80),
        "transition3.pool": (117, 12, 40),
        "block4.pbep1": (17, 12, 40), "block4.pbep2": (13, 12, 40),
        "block4.pbep3": (14, 12, 40), "block4.pbep4": (12, 12, 40),
        "block4.pbep32": (11, 12, 40),
        "bottleneck": (176, 12, 40),
        "up1.A": (86, 24, 80), "up1.B": (112, 24, 80),
        "up2.A": (47, 48, 160), "up2.B": (48, 48, 160),
        "up3.A": (28, 96, 320), "up3.B": (25, 96, 320),
        "up4.A": (17, 192, 640), "up4.B": (24, 192, 640),
        "head": (1, 192, 640), "head.upsample": (1, 384, 1280),
    },
}


@pytest.fixture(scope="module")
def graphs():
    return {v: build_network(default_config(v)) for v in ("nyu", "kitti")}


# --- default config fidelity -----------------------------------------------------

@pytest.mark.parametrize("variant", ["nyu", "kitti"])
def test_default_rows(graphs, variant):
    g = graphs[variant]
    for name, shape in REFERENCE_ROWS[variant].items():
        assert g.node(name).out_shape == shape, name


@pytest.mark.parametrize("variant,modules", [("nyu", (6, 12, 32, 32)), ("kitti", (6, 12, 32, 32))])
def test_module_counts(variant, modules):
    assert tuple(len(b) for b in default_config(variant).blocks) == modules


def test_kitti_transitions():
    assert default_config("kitti").transitions == [30, 79, 117]


@pytest.mark.parametrize("variant,params,macs", [("kitti", 1.75e6, 4.66e9), ("nyu", 3.46e6, 4.4e9)])
def test_totals_within_factor_two(graphs, variant, params, macs):
    p, m = count_params(graphs[variant]), count_macs(graphs[variant])
    assert params / 2 <= p <= params * 2
    assert macs / 2 <= m <= macs * 2


def test_kitti_param_band(graphs):
    assert 0.9e6 <= count_params(graphs["kitti"]) <= 3.5e6


def test_frozen_default_totals(graphs):
    assert (count_params(graphs["kitti"]), count_macs(graphs["kitti"])) == (1851241, 4492579680)


def test_interpolate_growth_keeps_listed_values():
    listed = DEFAULT_LISTED["nyu"]["blocks"][2]
    g = interpolate_growth(listed)
    assert len(g) == 32
    for k, v in listed.items():
        assert g[k - 1] == v
    assert all(min(17, 20) - 1 <= x <= 20 for x in g[4:31])


# --- structure ------------------------------------------------------------

def test_dense_channel_arithmetic(graphs):
    cfg = default_config("nyu")
    g = graphs["nyu"]
    assert g.node("block1.cat2").out_shape[0] == 31
    for b, block in enumerate(cfg.blocks, start=1):
        incoming = g.node(f"block{b}.pbep1").layers[0].in_c
        for k, spec in enumerate(block, start=1):
            assert g.node(f"block{b}.pbep{k}").layers[0].in_c == incoming
            incoming += spec.growth_out


def test_minimal_graph_has_eleven_nodes_and_runs():
    g = build_network(minimal_config())
    assert len(g.nodes) == 11
    out = forward(g, init_weights(g, 0), np.zeros((1,) + g.input_shape, np.float32))
    assert out.shape == (1, 1, 64, 64)


def test_zero_weights_give_zero_output():
    g = build_network(minimal_config())
    w = {k: np.zeros_like(v) for k, v in init_weights(g, 0).items()}
    x = np.random.default_rng(0).random((1,) + g.input_shape).astype(np.float32)
    assert not forward(g, w, x).any()


def test_batch_independence():
    g = build_network(minimal_config())
    w = init_weights(g, 1)
    x = np.random.default_rng(0).random((1,) + g.input_shape).astype(np.float32)
    out = forward(g, w, np.concatenate([x, x]))
    np.testing.assert_array_equal(out[0], out[1])


def test_nyu_forward_shape(graphs):
    g = graphs["nyu"]
    out = forward(g, init_weights(g, 0), np.zeros((1, 3, 480, 640), np.float32))
    assert out.shape == (1, 1, 480, 640)


def test_only_selu_activations_and_one_bn_per_pbep(graphs):
    g = graphs["kitti"]
    kinds = {l.kind for l in g.layers()}
    assert kinds <= {"conv", "depthwise", "batchnorm", "selu", "pool", "upsample", "affine"}
    for n in g.nodes:
        if n.kind == "pbep":
            assert [l.kind for l in n.layers].count("batchnorm") == 1
        else:
            assert all(l.kind != "batchnorm" for l in n.layers)


def test_skip_sources():
    assert default_config("nyu").skip_names() == ["transition3", "transition2", "transition1", "stem"]


def test_graph_error_names_node():
    cfg = minimal_config()
    cfg = dataclasses.replace(cfg, input_hw=(62, 64))
    with pytest.raises(GraphError, match="input"):
        build_network(cfg)


def test_graph_error_on_decoder_count():
    cfg = dataclasses.replace(minimal_config(), decoder=[])
    with pytest.raises(GraphError):
        build_network(cfg)


# --- counting -------------------------------------------------------------

def test_stem_counts():
    g = single_layer_graph("conv", 3, 15, (480, 640), kernel=7, stride=2, bias=True)
    assert count_params(g) == 2220
    assert count_macs(g) == 169_344_000


def test_pbep_counts():
    cfg = NetworkConfig(input_hw=(480, 640), stem_channels=15,
                        blocks=[[PbepSpec(proj1_out=8, expand_out=48, growth_out=16)]],
                        transitions=[], bottleneck=4,
                        decoder=[DecoderBlock(ConvStage(4), ConvStage(4))])
    g = build_network(cfg)
    row = {name: (p, m) for name, _, p, m in breakdown(g)}
    assert row["block1.pbep1"] == (1720, 32_716_800)


def test_depthwise_and_pointwise_macs():
    assert count_macs(single_layer_graph("depthwise", 16, 16, (120, 160), kernel=3)) == 2_764_800
    assert count_macs(single_layer_graph("conv", 31, 16, (120, 160), kernel=1)) == 9_523_200


def test_breakdown_sums_to_totals(graphs):
    g = graphs["kitti"]
    rows = breakdown(g)
    assert sum(r[2] for r in rows) == count_params(g)
    assert sum(r[3] for r in rows) == count_macs(g)


def test_param_count_matches_weight_sizes(graphs):
    g = graphs["nyu"]
    assert count_params(g) == sum(int(np.prod(p.shape)) for p in g.trainable())


def test_doubling_resolution_quadruples_macs():
    a = build_network(minimal_config((64, 64)))
    b = build_network(minimal_config((128, 128)))
    assert count_macs(b) == 4 * count_macs(a)
    assert count_params(b) == count_params(a)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["conv", "depthwise"]), st.integers(1, 32), st.integers(1, 32),
       st.sampled_from([1, 3, 5, 7]), st.integers(1, 2), st.booleans(),
       st.integers(4, 40), st.integers(4, 40))
def test_random_single_layer_closed_form(kind, cin, cout, k, stride, bias, h, w):
    if kind == "depthwise":
        cout, bias = cin, False
    g = single_layer_graph(kind, cin, cout, (h, w), kernel=k, stride=stride, bias=bias)
    pad = k // 2
    ho, wo = (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1
    if kind == "conv":
        assert count_params(g) == k * k * cin * cout + (cout if bias else 0)
        assert count_macs(g) == k * k * cin * cout * ho * wo
    else:
        assert count_params(g) == k * k * cin
        assert count_macs(g) == k * k * cin * ho * wo


# --- training-mode plumbing ------------------------------------------------

def test_backward_returns_every_trainable():
    g = build_network(minimal_config())
    w = init_weights(g, 0, dtype=np.float64)
    x = np.random.default_rng(0).random((2,) + g.input_shape)
    out, tape = forward(g, w, x, training=True, record=True)
    grads = backward(g, w, tape, np.ones_like(out))
    assert set(grads) == {p.name for p in g.trainable()}
    for p in g.trainable():
        assert grads[p.name].shape == p.shape


def test_training_forward_reports_running_stat_updates():
    g = build_network(minimal_config())
    w = init_weights(g, 0)
    x = np.random.default_rng(0).random((2,) + g.input_shape).astype(np.float32)
    _, tape = forward(g, w, x, training=True, record=True)
    assert tape.stat_updates
    assert all(k.endswith(("running_mean", "running_var")) for k in tape.stat_updates)


# --- serialization ---------------------------------------------------------

def test_weights_round_trip_byte_identical(tmp_path):
    g = build_network(minimal_config())
    w = init_weights(g, 3)
    save_weights(g, w, tmp_path / "a.ndnw")
    loaded = load_weights(g, tmp_path / "a.ndnw")
    for k in w:
        np.testing.assert_array_equal(loaded[k], w[k])
    save_weights(g, loaded, tmp_path / "b.ndnw")
    assert (tmp_path / "a.ndnw").read_bytes() == (tmp_path / "b.ndnw").read_bytes()


def test_checkpoint_layout_prefix():
    g = build_network(minimal_config())
    data = encode_weights(g, init_weights(g, 0))
    assert data[:4] == b"NDNW"
    assert int.from_bytes(data[4:6], "little") == 1
    assert int.from_bytes(data[6:10], "little") == len(g.params)


@pytest.mark.parametrize("mutate", [
    lambda d: b"XDNW" + d[4:],                    # magic
    lambda d: d[:4] + b"\x09\x00" + d[6:],        # version
    lambda d: d[:-1],                             # truncated payload
    lambda d: d + b"\x00",                        # trailing bytes
    lambda d: d[:6] + (1).to_bytes(4, "little") + d[10:],  # count disagrees
    lambda d: d[:9],                              # truncated header
])
def test_corrupt_checkpoint_rejected(mutate):
    g = build_network(minimal_config())
    data = encode_weights(g, init_weights(g, 0))
    with pytest.raises(FormatError):
        decode_weights(g, mutate(data))


def test_checkpoint_for_wrong_graph_rejected():
    a = build_network(minimal_config())
    b = build_network(minimal_config(growth=6))
    with pytest.raises(FormatError):
        decode_weights(b, encode_weights(a, init_weights(a, 0)))


@pytest.mark.parametrize("make", [
    lambda: default_config("nyu"), lambda: default_config("kitti", decoder_stage="conv"),
    minimal_config, reduced_config,
])
def test_config_text_round_trip(make):
    cfg = make()
    text = dump_config(cfg)
    assert parse_config(text) == cfg
    assert dump_config(parse_config(text)) == text


@pytest.mark.parametrize("edit,msg", [
    (lambda t: t.replace("nanodepth-config v1", "nanodepth-config v2"), "header"),
    (lambda t: t.replace("[stem]", "[steam]"), "section"),
    (lambda t: t.replace("growth=4", "growth=four"), "integer"),
    (lambda t: t.replace("pool=max", "pool=max extra=1"), "unknown"),
    (lambda t: t.replace("conv kernel=3 out=1", "conv kernel=3 out=2"), "1 channel"),
    (lambda t: t.replace("bottleneck out=4\n", ""), "incomplete"),
])
def test_malformed_config_rejected(edit, msg):
    text = dump_config(minimal_config())
    with pytest.raises(FormatError, match=msg):
        parse_config(edit(text))
