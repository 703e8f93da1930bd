"""Gaussian scale space: kernels, separable convolution and per-scale data terms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import convolve1d

from .errors import DimensionError, ParameterError
from .grids import ViewSet

#: Pre-smoothing applied at the finest scale.
BASE_SIGMA = 1.0 / math.sqrt(2.0)
#: Boundary extension used by every filter: mirror about the edge pixel
#: without repeating it (``d c b | a b c d | c b a``).
BOUNDARY_MODE = "mirror"
TRUNCATE = 4.0


@dataclass(frozen=True)
class Kernel1D:
    taps: np.ndarray
    radius: int
    sigma: float


def _check_sigma(sigma: float) -> None:
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise ParameterError(f"sigma must be positive and finite, got {sigma}")


def kernel_radius(sigma: float) -> int:
    return int(math.ceil(TRUNCATE * sigma))


def gaussian_kernel(sigma: float, radius: Optional[int] = None) -> Kernel1D:
    """Sampled Gaussian with unit sum, truncated at ``ceil(4 sigma)`` by default."""
    _check_sigma(sigma)
    r = kernel_radius(sigma) if radius is None else int(radius)
    x = np.arange(-r, r + 1, dtype=np.float64)
    taps = np.exp(-(x * x) / (2.0 * sigma * sigma))
    taps /= taps.sum()
    return Kernel1D(taps, r, float(sigma))


def dog_kernel(sigma: float, radius: Optional[int] = None) -> Kernel1D:
    """Sampled derivative-of-Gaussian, scaled to unit response on ``f(x) = x``.

    The taps are for true convolution, so convolving a ramp of slope ``a``
    yields ``a`` away from the borders.
    """
    _check_sigma(sigma)
    r = kernel_radius(sigma) if radius is None else int(radius)
    x = np.arange(-r, r + 1, dtype=np.float64)
    taps = -x / (sigma * sigma) * np.exp(-(x * x) / (2.0 * sigma * sigma))
    # (k * f)(0) = sum_j k[j] f(-j) = -sum_j j k[j] for the ramp
    taps /= -np.dot(x, taps)
    # exact antisymmetry, so the taps sum to zero to rounding
    taps = 0.5 * (taps - taps[::-1])
    return Kernel1D(taps, r, float(sigma))


def conv_separable(grid: np.ndarray, kh: Kernel1D, kv: Kernel1D) -> np.ndarray:
    """Convolve rows with ``kh`` then columns with ``kv`` (mirror boundaries)."""
    h, w = grid.shape
    if max(kh.radius, kv.radius) >= min(h, w):
        raise DimensionError(
            f"kernel radius {max(kh.radius, kv.radius)} does not fit a {h}x{w} grid"
        )
    out = convolve1d(np.asarray(grid, dtype=np.float64), kh.taps, axis=1, mode=BOUNDARY_MODE)
    return convolve1d(out, kv.taps, axis=0, mode=BOUNDARY_MODE)


def gaussian_blur(grid: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma)
    return conv_separable(grid, k, k)


def scale_sigma(q: int) -> float:
    """Relative scale of level ``q``: ``2**q / sqrt(2)``."""
    return 2.0 ** q / math.sqrt(2.0)


def effective_sigma(q: int) -> float:
    """Total smoothing from the original image to level ``q``.

    Level 0 is the pre-smoothed image at ``BASE_SIGMA``; coarser levels add
    ``scale_sigma(q)`` on top of it.
    """
    if q == 0:
        return BASE_SIGMA
    return math.sqrt(BASE_SIGMA ** 2 + scale_sigma(q) ** 2)


@dataclass(frozen=True)
class ScaleStack:
    """Per-(target, scale) linearised data terms.

    Array layout is ``[t, k, ...]`` where ``k`` indexes ``scales``.

    - ``delta_I``: smoothed difference ``I_t - I_r``
    - ``grad``: averaged gradient, shape ``[t, k, 2, H, W]`` with components
      ``(d/ds1, d/ds2)``
    - ``g``: gradient projected on the baseline
    - ``grad_diff``: half the baseline-projected gradient difference
    """

    scales: tuple[int, ...]
    sigma: np.ndarray
    sigma_eff: np.ndarray
    baselines: np.ndarray
    delta_I: np.ndarray
    grad: np.ndarray
    g: np.ndarray
    grad_diff: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.delta_I.shape[-2:]

    @property
    def n_targets(self) -> int:
        return self.delta_I.shape[0]

    def index_of(self, q: int) -> int:
        return self.scales.index(q)


def _gradients(image: np.ndarray, gk: Kernel1D, dk: Kernel1D) -> tuple[np.ndarray, np.ndarray]:
    return conv_separable(image, dk, gk), conv_separable(image, gk, dk)


def build_scale_stack(views: ViewSet, scales) -> ScaleStack:
    """Filtered differences, gradients and gradient differences at each scale.

    ``scales`` is either a count ``Q`` (levels ``0..Q-1``) or an explicit
    sequence of level indices.
    """
    if isinstance(scales, (int, np.integer)):
        if scales < 1:
            raise ParameterError(f"need at least one scale, got {scales}")
        scales = tuple(range(int(scales)))
    else:
        scales = tuple(int(q) for q in scales)
        if not scales or min(scales) < 0:
            raise ParameterError(f"invalid scale list {scales}")

    ref = views.reference
    n_t = len(views.targets)
    n_s = len(scales)
    h, w = ref.shape
    delta_I = np.empty((n_t, n_s, h, w))
    grad = np.empty((n_t, n_s, 2, h, w))
    grad_diff = np.empty((n_t, n_s, h, w))
    baselines = np.array([[t.baseline.b1, t.baseline.b2] for t in views.targets], dtype=np.float64)

    for k, q in enumerate(scales):
        s = effective_sigma(q)
        gk = gaussian_kernel(s)
        dk = dog_kernel(s)
        rx, ry = _gradients(ref, gk, dk)
        for i, tv in enumerate(views.targets):
            img = tv.image
            delta_I[i, k] = conv_separable(img - ref, gk, gk)
            tx, ty = _gradients(img, gk, dk)
            grad[i, k, 0] = 0.5 * (tx + rx)
            grad[i, k, 1] = 0.5 * (ty + ry)
            b1, b2 = baselines[i]
            grad_diff[i, k] = 0.5 * (b1 * (tx - rx) + b2 * (ty - ry))

    g = baselines[:, 0, None, None, None] * grad[:, :, 0] + baselines[:, 1, None, None, None] * grad[:, :, 1]
    return ScaleStack(
        scales=scales,
        sigma=np.array([scale_sigma(q) for q in scales]),
        sigma_eff=np.array([effective_sigma(q) for q in scales]),
        baselines=baselines,
        delta_I=delta_I,
        grad=grad,
        g=g,
        grad_diff=grad_diff,
    )
