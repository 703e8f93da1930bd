"""One variational iteration: warp, reweight, assemble, CG solve, limit, median.

The normal equations live on the 5-point stencil of the pixel grid and are
never formed as a matrix.  A :class:`LinearSystem` stores the diagonal and the
four (non-negative) neighbour couplings; the operator is

    (A x)(s) = diag(s) x(s) - sum_n c_n(s) x(n)

which is symmetric when each coupling equals the reverse coupling of its
neighbour.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import median_filter as _nd_median

from .errors import NumericalError, ParameterError
from .filtering import ScaleStack, build_scale_stack
from .grids import ViewSet

logger = logging.getLogger(__name__)

DENOM_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.5
    cg_tol: float = 1e-6
    cg_max_iter: int = 2000
    irls_delta: float = 1e-3
    median_radius: int = 2

    def __post_init__(self):
        if self.alpha < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.cg_tol < 1:
            raise ParameterError(f"cg_tol must lie in (0, 1), got {self.cg_tol}")
        if self.irls_delta <= 0:
            raise ParameterError(f"irls_delta must be > 0, got {self.irls_delta}")
        if self.cg_max_iter < 1:
            raise ParameterError(f"cg_max_iter must be >= 1, got {self.cg_max_iter}")
        if self.median_radius < 0:
            raise ParameterError(f"median_radius must be >= 0, got {self.median_radius}")


@dataclass(frozen=True)
class Couplings:
    """Neighbour couplings; ``east[i, j]`` links ``(i, j)`` with ``(i, j+1)``."""

    north: np.ndarray
    south: np.ndarray
    east: np.ndarray
    west: np.ndarray

    @classmethod
    def from_edges(cls, east: np.ndarray, south: np.ndarray) -> "Couplings":
        """Mirror east/south edge weights onto west/north (zero at the border)."""
        east = east.copy()
        south = south.copy()
        east[:, -1] = 0.0
        south[-1, :] = 0.0
        west = np.zeros_like(east)
        west[:, 1:] = east[:, :-1]
        north = np.zeros_like(south)
        north[1:, :] = south[:-1, :]
        return cls(north, south, east, west)

    def scaled(self, factor: float) -> "Couplings":
        return Couplings(self.north * factor, self.south * factor, self.east * factor, self.west * factor)

    def total(self) -> np.ndarray:
        return self.north + self.south + self.east + self.west

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``sum_n c_n(s) x(n)``."""
        out = np.zeros_like(x)
        out[:, :-1] += self.east[:, :-1] * x[:, 1:]
        out[:, 1:] += self.west[:, 1:] * x[:, :-1]
        out[:-1, :] += self.south[:-1, :] * x[1:, :]
        out[1:, :] += self.north[1:, :] * x[:-1, :]
        return out

    def is_symmetric(self) -> bool:
        return (
            np.array_equal(self.west[:, 1:], self.east[:, :-1])
            and np.array_equal(self.north[1:, :], self.south[:-1, :])
            and not self.east[:, -1].any()
            and not self.west[:, 0].any()
            and not self.south[-1, :].any()
            and not self.north[0, :].any()
        )


@dataclass(frozen=True)
class LinearSystem:
    diag: np.ndarray
    couplings: Couplings
    rhs: np.ndarray

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.diag * x - self.couplings.apply(x)

    def is_symmetric(self) -> bool:
        return self.couplings.is_symmetric()

    def is_diagonally_dominant(self) -> bool:
        c = self.couplings
        if min(c.north.min(), c.south.min(), c.east.min(), c.west.min()) < 0:
            return False
        return bool(np.all(self.diag >= c.total()))

    def to_dense(self) -> np.ndarray:
        """Dense matrix in row-major pixel order (small grids only)."""
        h, w = self.diag.shape
        n = h * w
        basis = np.zeros((h, w))
        cols = []
        for idx in range(n):
            basis.flat[idx] = 1.0
            cols.append(self.matvec(basis).ravel())
            basis.flat[idx] = 0.0
        return np.stack(cols, axis=1)


@dataclass(frozen=True)
class IterationReport:
    solve_count: int
    linearised_energy: float
    max_abs_dw: float
    clipped: bool
    cg_iterations: int = 0


def warp_target(target: np.ndarray, reference: np.ndarray, w: np.ndarray, baseline) -> np.ndarray:
    """Backward-warp ``target`` by ``B * w`` with bilinear interpolation.

    Samples whose source position falls outside the image take the
    reference value instead.
    """
    h, wd = target.shape
    b1, b2 = float(baseline[0]), float(baseline[1])
    rows, cols = np.mgrid[0:h, 0:wd].astype(np.float64)
    x = cols + b1 * w
    y = rows + b2 * w
    inside = (x >= 0) & (x <= wd - 1) & (y >= 0) & (y <= h - 1)
    x0 = np.clip(np.floor(x), 0, max(wd - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(y), 0, max(h - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, wd - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(x - x0, 0.0, 1.0)
    fy = np.clip(y - y0, 0.0, 1.0)
    top = target[y0, x0] * (1 - fx) + target[y0, x1] * fx
    bot = target[y1, x0] * (1 - fx) + target[y1, x1] * fx
    val = top * (1 - fy) + bot * fy
    return np.where(inside, val, reference)


def warp_views(views: ViewSet, w: np.ndarray) -> ViewSet:
    if not np.any(w):
        return views
    images = [warp_target(t.image, views.reference, w, t.baseline) for t in views.targets]
    return views.with_targets(images)


def closed_form_update(weights: np.ndarray, stack: ScaleStack) -> np.ndarray:
    """Unregularised weighted least-squares residual disparity, point-wise."""
    num = np.sum(weights * stack.g * stack.delta_I, axis=(0, 1))
    den = np.sum(weights * stack.g ** 2, axis=(0, 1))
    return -num / np.maximum(den, DENOM_FLOOR)


def irls_data_weights(stack: ScaleStack, dw: np.ndarray, delta: float) -> np.ndarray:
    """L1 reweighting of each linearised residual ``g*dw + dI``."""
    r = stack.g * dw + stack.delta_I
    return 1.0 / np.sqrt(r * r + delta * delta)


def _forward_diffs(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dx = np.zeros_like(w)
    dy = np.zeros_like(w)
    dx[:, :-1] = w[:, 1:] - w[:, :-1]
    dy[:-1, :] = w[1:, :] - w[:-1, :]
    return dx, dy


def tv_energy(w: np.ndarray, delta: float) -> float:
    """Charbonnier-smoothed total variation on forward differences."""
    dx, dy = _forward_diffs(w)
    return float(np.sum(np.sqrt(dx * dx + dy * dy + delta * delta)))


def irls_reg_weights(w: np.ndarray, delta: float) -> Couplings:
    """Lagged-diffusivity couplings ``1/sqrt(|grad w|^2 + delta^2)``.

    The diffusivity of pixel ``s`` is placed on its east and south edges and
    mirrored onto the neighbours' west and north edges, which makes the
    quadratic form an exact majoriser of :func:`tv_energy` (up to the factor 1/2).
    """
    dx, dy = _forward_diffs(w)
    d = 1.0 / np.sqrt(dx * dx + dy * dy + delta * delta)
    return Couplings.from_edges(d, d)


def assemble(
    weights: np.ndarray,
    irls: np.ndarray,
    stack: ScaleStack,
    alpha: float,
    reg: Couplings,
    w: Optional[np.ndarray] = None,
) -> LinearSystem:
    """Normal equations for the residual disparity.

    Data part: ``sum W R g^2`` on the diagonal, ``-sum W R g dI`` on the
    right.  The TV part acts on the absolute disparity ``w + dw``, so the
    right-hand side also carries ``-alpha * L w``.
    """
    wr = weights * irls
    data_diag = np.sum(wr * stack.g ** 2, axis=(0, 1))
    rhs = -np.sum(wr * stack.g * stack.delta_I, axis=(0, 1))
    c = reg.scaled(alpha)
    diag = data_diag + c.total()
    if w is not None:
        rhs = rhs - (c.total() * w - c.apply(w))
    return LinearSystem(diag, c, rhs)


def cg_solve(
    system: LinearSystem,
    tol: float = 1e-6,
    max_iter: int = 2000,
    callback: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None,
) -> tuple[np.ndarray, int]:
    """Jacobi-preconditioned conjugate gradients from a zero start.

    Stops once ``||b - A x|| <= tol * ||b||``.  Returns ``(x, iterations)``.
    ``callback(k, x, r)`` is invoked after every iteration.
    """
    b = system.rhs
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm) or not np.all(np.isfinite(system.diag)):
        raise NumericalError("non-finite values in linear system")
    if bnorm == 0.0:
        return x, 0
    inv_diag = np.where(system.diag > 0, 1.0 / np.where(system.diag > 0, system.diag, 1.0), 1.0)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(np.vdot(r, z))
    k = 0
    while k < max_iter:
        ap = system.matvec(p)
        pap = float(np.vdot(p, ap))
        if pap <= 0.0:
            if not np.isfinite(pap):
                raise NumericalError(f"non-finite curvature at CG iteration {k}")
            break
        step = rz / pap
        x += step * p
        r -= step * ap
        k += 1
        if callback is not None:
            callback(k, x, r)
        rnorm = np.linalg.norm(r)
        if not np.isfinite(rnorm):
            raise NumericalError(f"non-finite residual at CG iteration {k}")
        if rnorm <= tol * bnorm:
            break
        z = inv_diag * r
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, k


def limit_update(dw: np.ndarray, M: float) -> tuple[np.ndarray, bool]:
    """Clamp to ``[-M, M]``; the flag reports whether anything was clipped."""
    if not M > 0:
        raise ParameterError(f"limit must be positive, got {M}")
    clipped = bool(np.any(np.abs(dw) > M))
    return np.clip(dw, -M, M), clipped


def median_filter(w: np.ndarray, radius: int = 2) -> np.ndarray:
    if radius == 0:
        return w.copy()
    return _nd_median(w, size=2 * radius + 1, mode="mirror")


WeightFn = Callable[[ViewSet, ScaleStack, np.ndarray], Optional[np.ndarray]]


def solve_iteration(
    views: ViewSet,
    w: np.ndarray,
    scales,
    cfg: SolverConfig,
    limit_M: float,
    weight_fn: Optional[WeightFn] = None,
    solve_count: int = 0,
) -> tuple[np.ndarray, IterationReport]:
    """Run one counted solve and return the updated disparity and its report.

    ``weight_fn(warped_views, stack, w)`` supplies data-term weights shaped
    like ``stack.g``; ``None`` (or a ``None`` result) means all ones.
    """
    warped = warp_views(views, w)
    stack = build_scale_stack(warped, scales)
    weights = weight_fn(warped, stack, w) if weight_fn is not None else None
    if weights is None:
        weights = np.ones_like(stack.g)
    zero = np.zeros_like(w)
    irls = irls_data_weights(stack, zero, cfg.irls_delta)
    reg = irls_reg_weights(w, cfg.irls_delta)
    system = assemble(weights, irls, stack, cfg.alpha, reg, w)
    dw, iters = cg_solve(system, cfg.cg_tol, cfg.cg_max_iter)
    max_abs = float(np.max(np.abs(dw)))
    dw_lim, clipped = limit_update(dw, limit_M)

    resid = stack.g * dw[None, None] + stack.delta_I
    energy = float(np.sum(weights * irls * resid * resid)) + cfg.alpha * tv_energy(w + dw, cfg.irls_delta)

    w_new = median_filter(w + dw_lim, cfg.median_radius)
    report = IterationReport(solve_count + 1, energy, max_abs, clipped, iters)
    logger.debug("solve %d: max|dw|=%.3g clipped=%s cg=%d", report.solve_count, max_abs, clipped, iters)
    return w_new, report
