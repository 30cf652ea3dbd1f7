"""Depth-estimation error and accuracy metrics.

Notation follows the usual depth benchmark convention: ``pred`` is the
prediction y, ``gt`` the ground truth y-hat, and every relative error divides
by the ground truth. ``rmse_log`` uses natural logs, ``log10`` base-10 logs.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

DELTA_BASE = 1.25

# Fractional crop rectangles (top, bottom, left, right) commonly used with the
# Eigen test split. External convention, not derived from the model.
EIGEN_CROPS = {
    "kitti": (0.40810811, 0.99189189, 0.03594771, 0.96405229),
    "nyu": (45 / 480, 471 / 480, 41 / 640, 601 / 640),
}


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    log10: float
    delta1: float
    delta2: float
    delta3: float
    valid_pixel_count: int

    FIELDS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "log10",
              "delta1", "delta2", "delta3", "valid_pixel_count")

    def as_text(self) -> str:
        """Human-readable ``key=value`` block, one metric per line."""
        d = asdict(self)
        return "\n".join(f"{k}={_fmt(d[k])}" for k in self.FIELDS) + "\n"

    def as_record(self) -> str:
        """Single ``#DATA`` line with fields in the fixed order of ``FIELDS``."""
        d = asdict(self)
        return "#DATA " + ",".join(_fmt(d[k]) for k in self.FIELDS)


def _fmt(v):
    return str(v) if isinstance(v, int) else f"{v:.6f}"


@dataclass(frozen=True)
class EvalOptions:
    crop: tuple[int, int, int, int] | None = None  # top, left, height, width
    depth_clamp: tuple[float, float] = (1e-3, 80.0)
    invalid_threshold: float = 1e-3

    def __post_init__(self):
        lo, hi = self.depth_clamp
        if not 0 < lo < hi:
            raise MetricsError(f"depth_clamp must satisfy 0 < min < max, got {self.depth_clamp}")


NYU_OPTIONS = EvalOptions(depth_clamp=(1e-3, 10.0))
KITTI_OPTIONS = EvalOptions(depth_clamp=(1e-3, 80.0))


def eigen_crop(h: int, w: int, dataset: str = "kitti") -> tuple[int, int, int, int]:
    """Integer crop rectangle from the fractional convention, rounding down."""
    top, bottom, left, right = EIGEN_CROPS[dataset]
    t, b = math.floor(top * h), math.floor(bottom * h)
    l, r = math.floor(left * w), math.floor(right * w)
    return t, l, b - t, r - l


def center_crop(image: np.ndarray, crop: tuple[int, int, int, int]) -> np.ndarray:
    """Copy of ``image[..., top:top+height, left:left+width]``."""
    top, left, height, width = crop
    h, w = image.shape[-2:]
    if top < 0 or left < 0 or height < 1 or width < 1 or top + height > h or left + width > w:
        raise MetricsError(f"crop {crop} does not fit inside a {h}x{w} image")
    return image[..., top:top + height, left:left + width].copy()


def _valid_pairs(pred, gt, opts: EvalOptions):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricsError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if opts.crop is not None:
        pred = center_crop(pred, opts.crop)
        gt = center_crop(gt, opts.crop)
    mask = gt > opts.invalid_threshold
    if not mask.any():
        raise MetricsError("no valid ground-truth pixels after cropping and masking")
    y = np.clip(pred[mask], *opts.depth_clamp)
    return y, gt[mask]


def evaluate(pred, gt, opts: EvalOptions | None = None) -> MetricsReport:
    """All seven metrics over the valid pixels of a prediction/ground-truth pair.

    Batched inputs (n x 1 x H x W) are pooled over every valid pixel.
    """
    y, t = _valid_pairs(pred, gt, opts or EvalOptions())
    diff = y - t
    log_diff = np.log(y) - np.log(t)
    ratio = np.maximum(y / t, t / y)
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(diff) / t)),
        sq_rel=float(np.mean(diff ** 2 / t)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean(log_diff ** 2))),
        log10=float(np.mean(np.abs(np.log10(y) - np.log10(t)))),
        delta1=float(np.mean(ratio < DELTA_BASE)),
        delta2=float(np.mean(ratio < DELTA_BASE ** 2)),
        delta3=float(np.mean(ratio < DELTA_BASE ** 3)),
        valid_pixel_count=int(y.size),
    )


def parse_record(line: str) -> MetricsReport:
    """Inverse of :meth:`MetricsReport.as_record` (to 6 decimals)."""
    if not line.startswith("#DATA "):
        raise MetricsError("record must start with '#DATA '")
    parts = line[6:].strip().split(",")
    names = [f.name for f in fields(MetricsReport)]
    if len(parts) != len(names):
        raise MetricsError(f"expected {len(names)} fields, got {len(parts)}")
    vals = [float(p) for p in parts[:-1]] + [int(parts[-1])]
    return MetricsReport(*vals)
