"""Declarative network description: module specs and the top-level config."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class PbepSpec:
    """Projection, batchnorm, expansion, depthwise, projection.

    ``growth_out`` is what the module contributes to its dense block's
    running concatenation.
    """
    proj1_out: int
    expand_out: int
    growth_out: int
    dw_kernel: int = 3
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.99


@dataclass(frozen=True)
class EpSpec:
    """Expansion, depthwise, projection (decoder stage)."""
    expand_out: int
    out: int
    dw_kernel: int = 3


@dataclass(frozen=True)
class ConvStage:
    """Plain k x k convolution (with bias) followed by SELU."""
    out: int
    kernel: int = 3


Stage = Union[EpSpec, ConvStage]


@dataclass(frozen=True)
class DecoderBlock:
    stage_a: Stage
    stage_b: Stage
    # name of the encoder tensor concatenated after upsampling; "" = automatic
    skip: str = ""


@dataclass
class NetworkConfig:
    input_hw: tuple[int, int]
    stem_channels: int
    blocks: list[list[PbepSpec]]
    transitions: list[int]
    bottleneck: int
    decoder: list[DecoderBlock]
    in_channels: int = 3
    stem_kernel: int = 7
    stem_pool: str = "max"
    transition_pool: str = "avg"
    head_kernel: int = 3
    # fixed affine map applied to the upsampled head output: depth = shift + scale * y
    output_scale: float = 1.0
    output_shift: float = 0.0
    name: str = "custom"

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def resolution_divisor(self) -> int:
        """Input h and w must be divisible by this for exact halving."""
        return 2 ** (len(self.blocks) + 1)

    def skip_names(self) -> list[str]:
        """Skip source per decoder block, innermost first."""
        names = []
        for i, blk in enumerate(self.decoder):
            if blk.skip:
                names.append(blk.skip)
            else:
                k = len(self.blocks) - 1 - i
                names.append(f"transition{k}" if k >= 1 else "stem")
        return names


# ---------------------------------------------------------------------------
# default NYU and KITTI architectures
# ---------------------------------------------------------------------------

# Listed growth outputs per block as {module index (1-based): growth}; the
# module count is the largest index. Unlisted modules are interpolated.
_DEFAULTS = {
    "nyu": dict(
        input_hw=(480, 640),
        stem=15,
        blocks=[
            {1: 16, 2: 16, 3: 18, 4: 20, 6: 20},
            {1: 11, 2: 15, 3: 19, 4: 19, 12: 22},
            {1: 17, 2: 16, 3: 16, 4: 17, 32: 20},
            {1: 19, 2: 15, 3: 19, 4: 18, 32: 15},
        ],
        transitions=[57, 133, 336],
        bottleneck=302,
        decoder=[(138, 118), (54, 40), (23, 16), (11, 12)],
    ),
    "kitti": dict(
        input_hw=(384, 1280),
        stem=14,
        blocks=[
            {1: 13, 2: 15, 3: 18, 4: 13, 6: 17},
            {1: 9, 2: 13, 3: 13, 4: 18, 12: 19},
            {1: 13, 2: 14, 3: 18, 4: 15, 32: 14},
            {1: 17, 2: 13, 3: 14, 4: 12, 32: 11},
        ],
        transitions=[30, 79, 117],
        bottleneck=176,
        decoder=[(86, 112), (47, 48), (28, 25), (17, 24)],
    ),
}

DEFAULT_LISTED = _DEFAULTS

# Interior PBEP widths are never published; these ratios define the fill.
PROJ1_DIVISOR = 10
EXPAND_MULTIPLIER = 6


def interpolate_growth(listed: dict[int, int]) -> list[int]:
    """Fill unlisted module growths linearly between the nearest listed ones.

    Rounds half up so the result does not depend on banker's rounding.
    """
    count = max(listed)
    keys = sorted(listed)
    out = []
    for k in range(1, count + 1):
        if k in listed:
            out.append(listed[k])
            continue
        lo = max(i for i in keys if i < k)
        hi = min(i for i in keys if i > k)
        t = (k - lo) / (hi - lo)
        out.append(int(math.floor(listed[lo] + t * (listed[hi] - listed[lo]) + 0.5)))
    return out


def pbep_for(incoming: int, growth: int, proj_divisor: int = PROJ1_DIVISOR,
             expand_mult: int = EXPAND_MULTIPLIER) -> PbepSpec:
    proj1 = min(incoming, -(-incoming // proj_divisor))
    return PbepSpec(proj1_out=proj1, expand_out=expand_mult * proj1, growth_out=growth)


def dense_block_specs(block_in: int, growths: list[int], **kw) -> list[PbepSpec]:
    specs, c = [], block_in
    for g in growths:
        specs.append(pbep_for(c, g, **kw))
        c += g
    return specs


def default_config(variant: str = "nyu", decoder_stage: str = "ep") -> NetworkConfig:
    """Default architecture for ``"nyu"`` or ``"kitti"``.

    ``decoder_stage`` selects ``"ep"`` modules or plain ``"conv"`` 3x3 stages
    for the upconv A/B layers; the published channel counts bind either way.
    """
    try:
        t = _DEFAULTS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; expected 'nyu' or 'kitti'") from None
    blocks = []
    c = t["stem"]
    for i, listed in enumerate(t["blocks"]):
        growths = interpolate_growth(listed)
        blocks.append(dense_block_specs(c, growths))
        c += sum(growths)
        if i < len(t["transitions"]):
            c = t["transitions"][i]
    decoder = []
    skips = [t["transitions"][2], t["transitions"][1], t["transitions"][0], t["stem"]]
    prev = t["bottleneck"]
    for (a, b), skip_c in zip(t["decoder"], skips):
        decoder.append(DecoderBlock(_stage(decoder_stage, prev + skip_c, a),
                                    _stage(decoder_stage, a, b)))
        prev = b
    return NetworkConfig(
        input_hw=t["input_hw"],
        stem_channels=t["stem"],
        blocks=blocks,
        transitions=list(t["transitions"]),
        bottleneck=t["bottleneck"],
        decoder=decoder,
        name=variant,
    )


def _stage(kind: str, incoming: int, out: int) -> Stage:
    if kind == "ep":
        return EpSpec(expand_out=incoming, out=out)
    if kind == "conv":
        return ConvStage(out=out)
    raise ValueError(f"unknown decoder stage kind {kind!r}")


def minimal_config(input_hw=(64, 64), stem_channels: int = 4, growth: int = 4,
                   decoder_stage: str = "ep") -> NetworkConfig:
    """One dense block holding a single PBEP module, one decoder block."""
    pbep = pbep_for(stem_channels, growth, proj_divisor=2, expand_mult=2)
    bott = stem_channels
    dec = DecoderBlock(_stage(decoder_stage, bott + stem_channels, 4), _stage(decoder_stage, 4, 4))
    return NetworkConfig(input_hw=tuple(input_hw), stem_channels=stem_channels, blocks=[[pbep]],
                         transitions=[], bottleneck=bott, decoder=[dec], name="minimal")


def reduced_config(input_hw=(48, 64), stem_channels: int = 8, modules=(2, 2),
                   growth: int = 8, transitions=(16,), bottleneck: int = 16,
                   decoder_width: int = 8, decoder_stage: str = "ep",
                   expand_mult: int = 4) -> NetworkConfig:
    """Small multi-block network for desk-scale training and search."""
    if len(transitions) != len(modules) - 1:
        raise ValueError("need exactly one transition between consecutive blocks")
    blocks, c = [], stem_channels
    for i, m in enumerate(modules):
        blocks.append(dense_block_specs(c, [growth] * m, proj_divisor=2,
                                        expand_mult=expand_mult))
        c += growth * m
        if i < len(transitions):
            c = transitions[i]
    skips = list(reversed(transitions)) + [stem_channels]
    decoder, prev = [], bottleneck
    for skip_c in skips:
        decoder.append(DecoderBlock(_stage(decoder_stage, prev + skip_c, decoder_width),
                                    _stage(decoder_stage, decoder_width, decoder_width)))
        prev = decoder_width
    return NetworkConfig(input_hw=tuple(input_hw), stem_channels=stem_channels, blocks=blocks,
                         transitions=list(transitions), bottleneck=bottleneck,
                         decoder=decoder, name="reduced")


__all__ = [
    "ConvStage", "DecoderBlock", "EpSpec", "NetworkConfig", "PbepSpec", "Stage",
    "DEFAULT_LISTED", "default_config", "dense_block_specs", "interpolate_growth",
    "minimal_config", "pbep_for", "reduced_config",
]
