"""Procedurally generated RGB/depth pairs for desk-scale training.

A scene is a tilted depth plane with a few axis-aligned rectangles pasted in
front of it. The colour channels are fixed monotone shadings of depth plus
Gaussian noise, so depth is recoverable from the image.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SceneConfig:
    resolution: tuple[int, int] = (48, 64)
    rect_count: tuple[int, int] = (1, 4)  # inclusive range
    near: float = 1.0
    far: float = 10.0
    noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        h, w = self.resolution
        if h < 1 or w < 1:
            raise ValueError(f"bad resolution {self.resolution}")
        if not 0 < self.near < self.far:
            raise ValueError("need 0 < near < far")
        if not 0 <= self.rect_count[0] <= self.rect_count[1]:
            raise ValueError(f"bad rectangle count range {self.rect_count}")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


def shade(depth: np.ndarray, near: float, far: float) -> np.ndarray:
    """Three strictly decreasing functions of depth, values in [0, 1]."""
    s = (far - depth) / (far - near)
    return np.stack([s, s * s, np.sqrt(s)], axis=0)


def generate_scene(cfg: SceneConfig, rng: np.random.Generator):
    """Returns ``(rgb, depth)`` as float32 tensors of shape 1x3xHxW and 1x1xHxW."""
    h, w = cfg.resolution
    yy, xx = np.meshgrid(np.linspace(0.0, 1.0, h), np.linspace(0.0, 1.0, w), indexing="ij")
    a, b = rng.uniform(0.0, 1.0, size=2) + 1e-3
    if rng.random() < 0.5:
        yy = 1.0 - yy
    if rng.random() < 0.5:
        xx = 1.0 - xx
    t = (a * yy + b * xx) / (a + b)
    depth = cfg.near + (cfg.far - cfg.near) * t

    k = int(rng.integers(cfg.rect_count[0], cfg.rect_count[1] + 1))
    rects = []
    for _ in range(k):
        rh = int(rng.integers(max(1, h // 8), max(2, h // 2) + 1))
        rw = int(rng.integers(max(1, w // 8), max(2, w // 2) + 1))
        top = int(rng.integers(0, h - rh + 1))
        left = int(rng.integers(0, w - rw + 1))
        d = float(rng.uniform(cfg.near, cfg.far))
        rects.append((d, top, left, rh, rw))
    # paint far to near so nearer rectangles occlude
    for d, top, left, rh, rw in sorted(rects, key=lambda r: -r[0]):
        depth[top:top + rh, left:left + rw] = d
    depth = np.clip(depth, cfg.near, cfg.far)

    rgb = shade(depth, cfg.near, cfg.far)
    if cfg.noise > 0:
        rgb = rgb + rng.normal(0.0, cfg.noise, size=rgb.shape)
    return rgb[None].astype(np.float32), depth[None, None].astype(np.float32)


TRAIN_STREAM = 0
HOLDOUT_STREAM = 1


def scene_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, index])


def make_batch(cfg: SceneConfig, stream: int, start: int, count: int):
    """Scenes ``start .. start+count-1`` of a stream, stacked along the batch axis."""
    pairs = [generate_scene(cfg, scene_rng(cfg.seed, stream, start + i)) for i in range(count)]
    return (np.concatenate([p[0] for p in pairs]), np.concatenate([p[1] for p in pairs]))
