"""Weight checkpoints (``NDNW`` binary) and ``nanodepth-config v1`` text files.

Checkpoint layout, all little-endian::

    b"NDNW" | u16 version | u32 entry count
    per entry: u16 name length | utf-8 name | 4 x u32 dims | f32 payload

Vectors are stored with trailing unit dims, e.g. a bias of 15 as (15, 1, 1, 1).
"""
from __future__ import annotations

import io
import os
import struct

import numpy as np

from .config import ConvStage, DecoderBlock, EpSpec, NetworkConfig, PbepSpec
from .graph import NetworkGraph

MAGIC = b"NDNW"
VERSION = 1
CONFIG_HEADER = "nanodepth-config v1"


class FormatError(ValueError):
    """Malformed, truncated or mismatched file content."""


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _dims4(shape):
    if len(shape) > 4:
        raise FormatError(f"cannot store tensor of rank {len(shape)}")
    return tuple(shape) + (1,) * (4 - len(shape))


def encode_weights(graph: NetworkGraph, weights: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(graph.params)))
    for p in graph.params:
        arr = np.asarray(weights[p.name])
        if tuple(arr.shape) != p.shape:
            raise FormatError(f"{p.name}: shape {arr.shape} does not match graph {p.shape}")
        name = p.name.encode("utf-8")
        buf.write(struct.pack("<H", len(name)))
        buf.write(name)
        buf.write(struct.pack("<4I", *_dims4(p.shape)))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def decode_weights(graph: NetworkGraph, data: bytes) -> dict[str, np.ndarray]:
    view = memoryview(data)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError(f"truncated checkpoint while reading {what}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise FormatError("bad magic: not an NDNW checkpoint")
    version, count = struct.unpack("<HI", take(6, "header"))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    expected = {p.name: p.shape for p in graph.params}
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = bytes(take(nlen, "name")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("entry name is not valid utf-8") from exc
        dims = struct.unpack("<4I", take(16, f"dims of {name}"))
        size = int(np.prod(dims, dtype=np.int64))
        payload = take(4 * size, f"payload of {name}")
        if name not in expected:
            raise FormatError(f"checkpoint entry {name!r} is not a parameter of this graph")
        if dims != _dims4(expected[name]):
            raise FormatError(f"{name}: stored dims {dims} disagree with graph {expected[name]}")
        if name in out:
            raise FormatError(f"duplicate entry {name!r}")
        out[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(expected[name])
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after last entry")
    missing = set(expected) - set(out)
    if missing:
        raise FormatError(f"checkpoint lacks {len(missing)} parameters, e.g. {sorted(missing)[0]}")
    return out


def save_weights(graph: NetworkGraph, weights: dict[str, np.ndarray], path) -> None:
    data = encode_weights(graph, weights)
    with open(path, "wb") as f:
        f.write(data)


def load_weights(graph: NetworkGraph, path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        return decode_weights(graph, f.read())


# ---------------------------------------------------------------------------
# Config text
# ---------------------------------------------------------------------------

def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def _line(tag, /, **fields):
    return " ".join([tag] + [f"{k}={_fmt(v)}" for k, v in fields.items()])


def _stage_line(stage):
    if isinstance(stage, EpSpec):
        return _line("stage", kind="ep", expand=stage.expand_out, out=stage.out,
                     kernel=stage.dw_kernel)
    return _line("stage", kind="conv", out=stage.out, kernel=stage.kernel)


def dump_config(cfg: NetworkConfig) -> str:
    if not cfg.name or any(ch.isspace() or ch in "#=" for ch in cfg.name):
        raise FormatError(f"config name {cfg.name!r} must be non-empty without spaces, '#' or '='")
    lines = [CONFIG_HEADER,
             _line("name", value=cfg.name),
             _line("input", h=cfg.input_hw[0], w=cfg.input_hw[1], c=cfg.in_channels),
             _line("output", scale=float(cfg.output_scale), shift=float(cfg.output_shift)),
             "[stem]",
             _line("conv", kernel=cfg.stem_kernel, out=cfg.stem_channels, pool=cfg.stem_pool),
             "[blocks]"]
    for i, block in enumerate(cfg.blocks, start=1):
        lines.append(_line("block", index=i))
        for s in block:
            lines.append(_line("pbep", proj1=s.proj1_out, expand=s.expand_out,
                               growth=s.growth_out, kernel=s.dw_kernel,
                               eps=float(s.bn_epsilon), momentum=float(s.bn_momentum)))
    lines.append("[transitions]")
    for t in cfg.transitions:
        lines.append(_line("transition", out=t, pool=cfg.transition_pool))
    lines.append(_line("bottleneck", out=cfg.bottleneck))
    lines.append("[decoder]")
    for d in cfg.decoder:
        lines.append(_line("upconv", skip=d.skip or "auto"))
        lines.append(_stage_line(d.stage_a))
        lines.append(_stage_line(d.stage_b))
    lines.append("[head]")
    lines.append(_line("conv", kernel=cfg.head_kernel, out=1))
    return "\n".join(lines) + "\n"


def parse_fields(tokens, lineno):
    fields = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or not key:
            raise FormatError(f"line {lineno}: expected key=value, got {tok!r}")
        if key in fields:
            raise FormatError(f"line {lineno}: duplicate field {key!r}")
        fields[key] = val
    return fields


class _Fields:
    def __init__(self, fields, lineno):
        self.f = dict(fields)
        self.lineno = lineno

    def _get(self, key):
        if key not in self.f:
            raise FormatError(f"line {self.lineno}: missing field {key!r}")
        return self.f.pop(key)

    def int(self, key):
        raw = self._get(key)
        try:
            return int(raw)
        except ValueError:
            raise FormatError(f"line {self.lineno}: {key}={raw!r} is not an integer") from None

    def float(self, key):
        raw = self._get(key)
        try:
            return float(raw)
        except ValueError:
            raise FormatError(f"line {self.lineno}: {key}={raw!r} is not a number") from None

    def str(self, key):
        return self._get(key)

    def done(self):
        if self.f:
            raise FormatError(f"line {self.lineno}: unknown fields {sorted(self.f)}")


def iter_lines(text: str, header: str):
    """Yield ``(lineno, kind, fields)`` for every content line after ``header``."""
    lines = text.splitlines()
    body = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(lines)]
    body = [(i, ln) for i, ln in body if ln]
    if not body or body[0][1] != header:
        raise FormatError(f"missing header line {header!r}")
    for lineno, ln in body[1:]:
        parts = ln.split()
        yield lineno, parts[0], parts[1:]


def parse_config(text: str) -> NetworkConfig:
    section = None
    meta = {}
    stem = None
    blocks: list[list[PbepSpec]] = []
    transitions, pools = [], []
    bottleneck = None
    decoder_raw: list[list] = []
    head_kernel = None
    for lineno, kind, tokens in iter_lines(text, CONFIG_HEADER):
        if kind.startswith("[") and kind.endswith("]") and not tokens:
            section = kind[1:-1]
            if section not in ("stem", "blocks", "transitions", "decoder", "head"):
                raise FormatError(f"line {lineno}: unknown section {kind}")
            continue
        f = _Fields(parse_fields(tokens, lineno), lineno)
        if section is None:
            if kind == "name":
                meta["name"] = f.str("value")
            elif kind == "input":
                meta["input_hw"] = (f.int("h"), f.int("w"))
                meta["in_channels"] = f.int("c")
            elif kind == "output":
                meta["output_scale"] = f.float("scale")
                meta["output_shift"] = f.float("shift")
            else:
                raise FormatError(f"line {lineno}: unexpected {kind!r} before first section")
        elif section == "stem" and kind == "conv":
            stem = (f.int("kernel"), f.int("out"), f.str("pool"))
        elif section == "blocks" and kind == "block":
            idx = f.int("index")
            if idx != len(blocks) + 1:
                raise FormatError(f"line {lineno}: block index {idx} out of order")
            blocks.append([])
        elif section == "blocks" and kind == "pbep":
            if not blocks:
                raise FormatError(f"line {lineno}: pbep before any block line")
            blocks[-1].append(PbepSpec(proj1_out=f.int("proj1"), expand_out=f.int("expand"),
                                       growth_out=f.int("growth"), dw_kernel=f.int("kernel"),
                                       bn_epsilon=f.float("eps"), bn_momentum=f.float("momentum")))
        elif section == "transitions" and kind == "transition":
            transitions.append(f.int("out"))
            pools.append(f.str("pool"))
        elif section == "transitions" and kind == "bottleneck":
            bottleneck = f.int("out")
        elif section == "decoder" and kind == "upconv":
            skip = f.str("skip")
            decoder_raw.append(["" if skip == "auto" else skip])
        elif section == "decoder" and kind == "stage":
            if not decoder_raw or len(decoder_raw[-1]) >= 3:
                raise FormatError(f"line {lineno}: stage outside an upconv (two per upconv)")
            sk = f.str("kind")
            if sk == "ep":
                decoder_raw[-1].append(EpSpec(expand_out=f.int("expand"), out=f.int("out"),
                                              dw_kernel=f.int("kernel")))
            elif sk == "conv":
                decoder_raw[-1].append(ConvStage(out=f.int("out"), kernel=f.int("kernel")))
            else:
                raise FormatError(f"line {lineno}: unknown stage kind {sk!r}")
        elif section == "head" and kind == "conv":
            head_kernel = f.int("kernel")
            if f.int("out") != 1:
                raise FormatError(f"line {lineno}: head must emit 1 channel")
        else:
            raise FormatError(f"line {lineno}: unexpected {kind!r} in section [{section}]")
        f.done()

    if stem is None or bottleneck is None or head_kernel is None or "input_hw" not in meta:
        raise FormatError("incomplete config: need input, [stem], bottleneck and [head]")
    if len(set(pools)) > 1:
        raise FormatError(f"transitions must share one pool kind, got {sorted(set(pools))}")
    for d in decoder_raw:
        if len(d) != 3:
            raise FormatError("each upconv needs exactly two stage lines")
    return NetworkConfig(
        input_hw=meta["input_hw"], in_channels=meta["in_channels"],
        stem_kernel=stem[0], stem_channels=stem[1], stem_pool=stem[2],
        blocks=blocks, transitions=transitions,
        transition_pool=pools[0] if pools else "avg",
        bottleneck=bottleneck,
        decoder=[DecoderBlock(a, b, skip) for skip, a, b in decoder_raw],
        head_kernel=head_kernel,
        output_scale=meta.get("output_scale", 1.0), output_shift=meta.get("output_shift", 0.0),
        name=meta.get("name", "custom"),
    )


def save_config(cfg: NetworkConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_config(cfg))


def load_config(path) -> NetworkConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
