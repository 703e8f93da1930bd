"""Rasters, baselines and the view container shared by every other module.

Images and disparity fields are plain 2-D ``float64`` numpy arrays indexed
``[row, col]``.  A pixel location ``s = (s1, s2)`` has ``s1`` along columns
(horizontal) and ``s2`` along rows (vertical), origin at the top-left pixel
centre.  Baselines follow the same ``(b1, b2)`` ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DimensionError, ParameterError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def as_image(data, name: str = "image") -> np.ndarray:
    """Validate ``data`` as a finite 2-D raster and return a read-only float64 copy."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one pixel, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite samples")
    arr.flags.writeable = False
    return arr


def to_grayscale(rgb) -> np.ndarray:
    """Luminance of an RGB raster (BT.601 weights), clamped to [0, 1].

    ``rgb`` is either an ``(H, W, 3)`` array or a sequence of three ``(H, W)``
    channel arrays.
    """
    if isinstance(rgb, np.ndarray) and rgb.ndim == 3:
        channels = [rgb[..., c] for c in range(rgb.shape[-1])]
    else:
        channels = [np.asarray(c, dtype=np.float64) for c in rgb]
    if len(channels) != 3:
        raise DimensionError(f"expected 3 colour channels, got {len(channels)}")
    shape = channels[0].shape
    for c in channels[1:]:
        if c.shape != shape:
            raise DimensionError(f"channel shapes differ: {shape} vs {c.shape}")
    r, g, b = (np.asarray(c, dtype=np.float64) for c in channels)
    lum = LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    return np.clip(lum, 0.0, 1.0)


class Baseline(NamedTuple):
    """Offset of a target camera from the reference camera, in baseline units."""

    b1: float
    b2: float

    @property
    def magnitude(self) -> float:
        return math.hypot(self.b1, self.b2)

    def scaled(self, factor: float) -> "Baseline":
        return Baseline(self.b1 * factor, self.b2 * factor)


def displacement_of(baseline, w):
    """Displacement ``B * w`` induced by disparity ``w`` (scalar or array).

    Returns a pair ``(d1, d2)`` matching the shape of ``w``.
    """
    b1, b2 = baseline
    return (b1 * w, b2 * w)


@dataclass(frozen=True)
class TargetView:
    view_id: str
    image: np.ndarray
    baseline: Baseline


@dataclass(frozen=True)
class ViewSet:
    """A reference image, its target views, and an optional ground-truth disparity.

    All rasters share the reference's dimensions; baselines must be distinct
    and nonzero.  Use :meth:`build` to construct from raw arrays.
    """

    reference: np.ndarray
    targets: tuple[TargetView, ...]
    ground_truth: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        shape = self.reference.shape
        seen = set()
        for t in self.targets:
            if t.image.shape != shape:
                raise DimensionError(
                    f"view {t.view_id!r} has shape {t.image.shape}, reference is {shape}"
                )
            if t.baseline.magnitude == 0.0:
                raise ParameterError(f"view {t.view_id!r} has a zero baseline")
            key = (float(t.baseline.b1), float(t.baseline.b2))
            if key in seen:
                raise ParameterError(f"duplicate baseline {key} in view set")
            seen.add(key)
        if self.ground_truth is not None and self.ground_truth.shape != shape:
            raise DimensionError(
                f"ground truth has shape {self.ground_truth.shape}, reference is {shape}"
            )

    @classmethod
    def build(cls, reference, targets: Sequence, ground_truth=None, meta=None) -> "ViewSet":
        """Construct from ``reference`` and ``(view_id, image, (b1, b2))`` triples."""
        ref = as_image(reference, "reference")
        views = tuple(
            TargetView(str(vid), as_image(img, f"view {vid}"), Baseline(float(b[0]), float(b[1])))
            for vid, img, b in targets
        )
        gt = None if ground_truth is None else as_image(ground_truth, "ground truth")
        return cls(ref, views, gt, dict(meta or {}))

    @property
    def shape(self) -> tuple[int, int]:
        return self.reference.shape

    @property
    def baselines(self) -> list[Baseline]:
        return [t.baseline for t in self.targets]

    @property
    def max_baseline(self) -> float:
        return max(t.baseline.magnitude for t in self.targets)

    def subset(self, indices: Sequence[int]) -> "ViewSet":
        """The same scene restricted to the targets at ``indices``."""
        return ViewSet(
            self.reference, tuple(self.targets[i] for i in indices), self.ground_truth, self.meta
        )

    def with_targets(self, images: Sequence[np.ndarray]) -> "ViewSet":
        """Replace the target images, keeping ids and baselines (no validation copy)."""
        targets = tuple(
            TargetView(t.view_id, img, t.baseline) for t, img in zip(self.targets, images)
        )
        return ViewSet(self.reference, targets, self.ground_truth, self.meta)
