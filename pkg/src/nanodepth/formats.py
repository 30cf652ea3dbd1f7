"""PFM depth maps and binary PPM colour images."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np


class ImageFormatError(ValueError):
    pass


@dataclass
class PfmImage:
    """Float image; ``pixels`` has shape (height, width, channels), top row first."""
    width: int
    height: int
    channels: int
    scale: float
    pixels: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ImageFormatError(f"PFM supports 1 or 3 channels, got {self.channels}")
        if self.width < 1 or self.height < 1:
            raise ImageFormatError(f"bad PFM dims {self.width}x{self.height}")
        if self.scale == 0:
            raise ImageFormatError("PFM scale must be non-zero")
        if self.pixels.shape != (self.height, self.width, self.channels):
            raise ImageFormatError(f"pixel array {self.pixels.shape} does not match header")

    @classmethod
    def from_tensor(cls, t: np.ndarray, scale: float = -1.0) -> "PfmImage":
        """From a 1xCxHxW tensor with C in (1, 3)."""
        if t.ndim != 4 or t.shape[0] != 1:
            raise ImageFormatError(f"expected a 1xCxHxW tensor, got {t.shape}")
        px = np.ascontiguousarray(t[0].transpose(1, 2, 0), dtype=np.float32)
        return cls(t.shape[3], t.shape[2], t.shape[1], scale, px)

    def to_tensor(self) -> np.ndarray:
        return np.ascontiguousarray(self.pixels.transpose(2, 0, 1)[None], dtype=np.float32)


def encode_pfm(img: PfmImage) -> bytes:
    magic = b"Pf" if img.channels == 1 else b"PF"
    header = magic + b"\n%d %d\n%s\n" % (img.width, img.height, repr(float(img.scale)).encode())
    dtype = "<f4" if img.scale < 0 else ">f4"
    rows = np.ascontiguousarray(img.pixels[::-1], dtype=dtype)
    return header + rows.tobytes()


_HEADER_LINE = re.compile(rb"([^\n]*)\n")


def decode_pfm(data: bytes) -> PfmImage:
    pos = 0
    fields = []
    for _ in range(3):
        m = _HEADER_LINE.match(data, pos)
        if m is None:
            raise ImageFormatError("truncated PFM header")
        fields.append(m.group(1).strip())
        pos = m.end()
    magic, dims, scale_raw = fields
    if magic == b"Pf":
        channels = 1
    elif magic == b"PF":
        channels = 3
    else:
        raise ImageFormatError(f"bad PFM magic {magic[:8]!r}")
    try:
        w, h = (int(v) for v in dims.split())
        scale = float(scale_raw)
    except ValueError:
        raise ImageFormatError("malformed PFM dimensions or scale line") from None
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad PFM dims {w}x{h}")
    if scale == 0 or not np.isfinite(scale):
        raise ImageFormatError("PFM scale must be finite and non-zero")
    need = w * h * channels * 4
    payload = data[pos:]
    if len(payload) < need:
        raise ImageFormatError(f"truncated PFM payload: {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise ImageFormatError(f"{len(payload) - need} trailing bytes after PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    px = np.frombuffer(payload, dtype=dtype).reshape(h, w, channels)[::-1]
    return PfmImage(w, h, channels, scale, px.astype(np.float32))


def write_pfm(path, img: PfmImage) -> None:
    with open(path, "wb") as f:
        f.write(encode_pfm(img))


def read_pfm(path) -> PfmImage:
    with open(path, "rb") as f:
        return decode_pfm(f.read())


# ---------------------------------------------------------------------------
# PPM (P6, 8-bit)
# ---------------------------------------------------------------------------

def _ppm_tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= n or not data[pos:pos + 1].isspace():
        raise ImageFormatError("truncated PPM header")
    return tokens, pos + 1


def decode_ppm(data: bytes) -> np.ndarray:
    """Binary P6 image as a float32 1x3xHxW tensor scaled to [0, 1]."""
    if data[:2] != b"P6":
        raise ImageFormatError(f"bad PPM magic {data[:2]!r}; only binary P6 is supported")
    (magic, w, h, maxval), pos = _ppm_tokens(data, 4)
    if magic != b"P6":
        raise ImageFormatError(f"bad PPM magic {magic!r}")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageFormatError("non-integer PPM header field") from None
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}")
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad PPM dims {w}x{h}")
    need = w * h * 3
    payload = data[pos:]
    if len(payload) < need:
        raise ImageFormatError(f"truncated PPM payload: {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise ImageFormatError(f"{len(payload) - need} trailing bytes after PPM payload")
    px = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return (px.transpose(2, 0, 1)[None].astype(np.float32) / np.float32(255.0))


def encode_ppm(rgb: np.ndarray) -> bytes:
    """1x3xHxW tensor in [0, 1] to P6 bytes (rounded to nearest level)."""
    if rgb.ndim != 4 or rgb.shape[:2] != (1, 3):
        raise ImageFormatError(f"expected a 1x3xHxW tensor, got {rgb.shape}")
    px = np.clip(np.rint(rgb[0].transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    return b"P6\n%d %d\n255\n" % (rgb.shape[3], rgb.shape[2]) + px.tobytes()


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_ppm(f.read())


def write_ppm(path, rgb: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(rgb))
