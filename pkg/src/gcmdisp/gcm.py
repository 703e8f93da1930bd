"""Gradient Consistency Model weights for the multi-view, multi-scale data term.

Each (target view, scale) data term is weighted by ``Z / N2`` where ``N2`` is
an equivalent noise power combining three contributions:

* gradient inconsistency between target and reference, scaled by a bound on
  the current disparity error,
* scale inconsistency between filtering the linearised constraint and
  linearising the filtered images,
* a white acquisition-noise floor ``eps**2 / (4 pi sigma_q**2)``.

Weights are then made non-increasing with baseline length inside each of
eight angular sectors, since a wide-baseline pair cannot be more reliable
than the narrower pairs lying between it and the reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError
from .filtering import ScaleStack, build_scale_stack, gaussian_blur, scale_sigma
from .grids import ViewSet

N_SECTORS = 8


@dataclass(frozen=True)
class GcmConfig:
    epsilon: float = 2e-4
    #: variance window; ``None`` means ``2 * sigma_q`` at each scale
    sigma_c: Optional[float] = None
    Z: float = 1.0
    zero_G: bool = False
    zero_O: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.sigma_c is not None and not self.sigma_c > 0:
            raise ParameterError(f"sigma_c must be positive, got {self.sigma_c}")
        if not self.Z > 0:
            raise ParameterError(f"Z must be positive, got {self.Z}")

    def variance_sigma(self, q: int) -> float:
        return self.sigma_c if self.sigma_c is not None else 2.0 * scale_sigma(q)


@dataclass(frozen=True)
class NoiseComponents:
    """Noise-power breakdown, arrays shaped ``[t, k, H, W]`` over ``scales``."""

    scales: tuple[int, ...]
    grad_term: np.ndarray
    scale_term: np.ndarray
    floor: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.grad_term + self.scale_term + self.floor[None, :, None, None]


@dataclass(frozen=True)
class WeightField:
    scales: tuple[int, ...]
    weights: np.ndarray
    Z: float = 1.0
    components: Optional[NoiseComponents] = field(default=None, compare=False)


def acquisition_noise(epsilon: float, sigma_q: float) -> float:
    """Power of white noise of density ``epsilon**2`` after a Gaussian of ``sigma_q``."""
    return epsilon * epsilon / (4.0 * math.pi * sigma_q * sigma_q)


def local_variance(x: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian-windowed variance ``G*x^2 - (G*x)^2``, clipped at zero."""
    m = gaussian_blur(x, sigma)
    return np.maximum(gaussian_blur(x * x, sigma) - m * m, 0.0)


def residual_proxy(stack: ScaleStack, epsilon: float = 2e-4) -> np.ndarray:
    """Point-wise residual disparity estimate shared by all views and scales.

    Uses only the finest level of ``stack``:
    ``sum_t |dI_t0| / (sum_t |g_t0| + eps)``.
    """
    k = stack.index_of(0)
    num = np.abs(stack.delta_I[:, k]).sum(axis=0)
    den = np.abs(stack.g[:, k]).sum(axis=0) + epsilon
    return num / den


def scale_inconsistency(base: ScaleStack, proxy: np.ndarray, q: int) -> np.ndarray:
    """Bound on the scale-inconsistency power at level ``q``, one grid per target.

    Product of the ``sigma_q``-smoothed squared projected gradient (finest
    level) with the ``sigma_q``-smoothed squared residual proxy.
    """
    sigma = scale_sigma(q)
    k0 = base.index_of(0)
    smooth_dw = gaussian_blur(proxy * proxy, sigma)
    out = np.empty_like(base.g[:, k0])
    for t in range(base.n_targets):
        g0 = base.g[t, k0]
        out[t] = gaussian_blur(g0 * g0, sigma) * smooth_dw
    return np.maximum(out, 0.0)


def error_bound(stack: ScaleStack, w_prev: np.ndarray, cfg: GcmConfig, q: int) -> np.ndarray:
    """Upper bound on the squared error of the current disparity, for level ``q``.

    Data-driven bound (sums run over every target and every level held by
    ``stack``) plus the local variance of ``w_prev`` in a window of
    ``cfg.variance_sigma(q)``.
    """
    if w_prev.shape != stack.shape:
        raise ParameterError(f"w_prev shape {w_prev.shape} != stack shape {stack.shape}")
    eps = cfg.epsilon
    num = acquisition_noise(eps, scale_sigma(q)) + np.sum(stack.delta_I ** 2, axis=(0, 1))
    den = np.sum(stack.g ** 2, axis=(0, 1)) + eps
    return num / den + local_variance(w_prev, cfg.variance_sigma(q))


def noise_components(
    stack: ScaleStack,
    base: ScaleStack,
    proxy: np.ndarray,
    w_prev: np.ndarray,
    cfg: GcmConfig,
) -> NoiseComponents:
    n_t, n_s = stack.delta_I.shape[:2]
    grad_term = np.zeros_like(stack.delta_I)
    scale_term = np.zeros_like(stack.delta_I)
    floor = np.empty(n_s)
    for k, q in enumerate(stack.scales):
        floor[k] = acquisition_noise(cfg.epsilon, scale_sigma(q))
        if not cfg.zero_G:
            dw2 = error_bound(stack, w_prev, cfg, q)
            grad_term[:, k] = stack.grad_diff[:, k] ** 2 * dw2[None]
        if not cfg.zero_O:
            scale_term[:, k] = scale_inconsistency(base, proxy, q)
    return NoiseComponents(stack.scales, grad_term, scale_term, floor)


def noise_power(
    stack: ScaleStack,
    proxy: np.ndarray,
    w_prev: np.ndarray,
    cfg: GcmConfig,
    t: int,
    q: int,
    base: Optional[ScaleStack] = None,
) -> np.ndarray:
    """Equivalent noise power of target ``t`` at level ``q``."""
    base = stack if base is None else base
    k = stack.index_of(q)
    total = np.full(stack.shape, acquisition_noise(cfg.epsilon, scale_sigma(q)))
    if not cfg.zero_G:
        total += stack.grad_diff[t, k] ** 2 * error_bound(stack, w_prev, cfg, q)
    if not cfg.zero_O:
        total += scale_inconsistency(base, proxy, q)[t]
    return total


def expected_error(weights, g, noise) -> float:
    """Expected squared error of the weighted point-wise solution.

    With independent zero-mean noise of power ``noise`` on each term,
    ``E = sum W^2 g^2 N / (sum W g^2)^2``; ``W = Z / N`` minimises it.
    """
    weights, g, noise = (np.asarray(a, dtype=np.float64) for a in (weights, g, noise))
    g2 = g * g
    return float(np.sum(weights ** 2 * g2 * noise) / np.sum(weights * g2) ** 2)


def sector_of(baseline) -> int:
    """Angular sector ``k`` with ``k*pi/4 <= angle < (k+1)*pi/4``, angle in [0, 2 pi)."""
    b1, b2 = float(baseline[0]), float(baseline[1])
    if b1 == 0.0 and b2 == 0.0:
        raise ParameterError("zero baseline has no sector")
    angle = math.atan2(b2, b1) % (2.0 * math.pi)
    # tolerance keeps exact multiples of pi/4 on their lower boundary
    k = int(math.floor(angle / (math.pi / 4.0) + 1e-9))
    return min(k, N_SECTORS - 1)


def apply_monotonicity(raw: np.ndarray, baselines: Sequence, tol: float = 1e-9) -> np.ndarray:
    """Enforce non-increasing weights with baseline length inside each sector.

    ``raw`` is shaped ``[t, ...]``; view ``t`` receives the point-wise minimum
    over every view in its sector whose baseline is no longer than its own.
    """
    raw = np.asarray(raw)
    sectors = [sector_of(b) for b in baselines]
    mags = [math.hypot(float(b[0]), float(b[1])) for b in baselines]
    out = np.empty_like(raw)
    for t in range(len(baselines)):
        members = [
            n for n in range(len(baselines))
            if sectors[n] == sectors[t] and mags[n] <= mags[t] + tol
        ]
        out[t] = np.min(raw[members], axis=0)
    return out


def compute_weights(
    stack: ScaleStack,
    w_prev: np.ndarray,
    views: ViewSet,
    cfg: GcmConfig = GcmConfig(),
    base: Optional[ScaleStack] = None,
) -> WeightField:
    """GCM weights for every (target, level) term held by ``stack``.

    ``views`` must be the (warped) views ``stack`` was built from; the finest
    level is rebuilt from them when ``stack`` does not include level 0.
    """
    if base is None:
        base = stack if 0 in stack.scales else build_scale_stack(views, (0,))
    proxy = residual_proxy(base, cfg.epsilon)
    comps = noise_components(stack, base, proxy, w_prev, cfg)
    raw = cfg.Z / comps.total
    weights = apply_monotonicity(raw, stack.baselines)
    return WeightField(stack.scales, weights, cfg.Z, comps)
