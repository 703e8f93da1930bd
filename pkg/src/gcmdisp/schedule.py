"""Estimation strategies built on :func:`gcmdisp.solver.solve_iteration`.

=============  ===========================================  ======================
kind           data term                                     limit ``M``
=============  ===========================================  ======================
naive          all views, finest level, unit weights         ``1/|B_max|``
piv            innermost views first, 4 more per stage       ``1/|B_max(active)|``
c2f            one level at a time, coarse to fine           ``2**q/|B_max|``
gcm            all views, all levels, GCM weights            ``1/|B_max|``
gcm_sliding    GCM over a 3-level window sliding to fine     ``2**q/|B_max|``
=============  ===========================================  ======================

Staged strategies move on after a solve in which no update was clipped.
Every strategy stops after ``conv_patience`` consecutive final-stage solves
with ``max|dw| < conv_tol``, or at ``max_solves``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import solver
from .errors import ConfigurationError, ParameterError
from .gcm import GcmConfig, compute_weights, sector_of
from .grids import ViewSet

KINDS = ("naive", "piv", "c2f", "gcm", "gcm_sliding")
PIV_FIRST = 4
PIV_STEP = 4
SLIDING_WINDOW = 3


@dataclass(frozen=True)
class Strategy:
    kind: str = "gcm"
    n_scales: int = 3
    max_solves: int = 300
    conv_tol: float = 1e-4
    conv_patience: int = 3

    def __post_init__(self):
        kind = self.kind.replace("-", "_")
        if kind not in KINDS:
            raise ConfigurationError(f"unknown strategy {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.n_scales < 1:
            raise ConfigurationError(f"n_scales must be >= 1, got {self.n_scales}")
        if self.max_solves < 1:
            raise ConfigurationError(f"max_solves must be >= 1, got {self.max_solves}")
        if self.conv_tol <= 0 or self.conv_patience < 1:
            raise ConfigurationError("convergence criterion must be positive")


@dataclass(frozen=True)
class StageState:
    views: tuple[int, ...]
    scales: tuple[int, ...]
    limit: float
    final: bool


@dataclass(frozen=True)
class TraceEntry:
    report: solver.IterationReport
    rmse: Optional[float]
    stage: StageState


@dataclass
class RunResult:
    w: np.ndarray
    trace: list[TraceEntry] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def rmse_trace(self) -> list[float]:
        return [e.rmse for e in self.trace]

    @property
    def solves(self) -> int:
        return len(self.trace)


def normalise_baselines(views: ViewSet) -> ViewSet:
    """Rescale baselines so the nearest view has unit length.

    Ground truth is multiplied by the same minimum length, so every
    displacement ``B * w`` is unchanged.
    """
    if not views.targets:
        raise ParameterError("view set has no targets")
    mags = [t.baseline.magnitude for t in views.targets]
    if min(mags) == 0.0:
        raise ParameterError("zero baseline cannot be normalised")
    unit = min(mags)
    if unit == 1.0:
        return views
    targets = [(t.view_id, t.image, t.baseline.scaled(1.0 / unit)) for t in views.targets]
    gt = None if views.ground_truth is None else views.ground_truth * unit
    return ViewSet.build(views.reference, targets, gt, views.meta)


def piv_order(views: ViewSet) -> list[int]:
    """Target indices sorted by baseline length, ties broken by sector."""
    return sorted(
        range(len(views.targets)),
        key=lambda i: (round(views.targets[i].baseline.magnitude, 9), sector_of(views.targets[i].baseline), i),
    )


def piv_stages(views: ViewSet) -> list[tuple[int, ...]]:
    order = piv_order(views)
    stages = []
    n = min(PIV_FIRST, len(order))
    while True:
        stages.append(tuple(sorted(order[:n])))
        if n >= len(order):
            return stages
        n = min(n + PIV_STEP, len(order))


def _max_baseline(views: ViewSet, idx) -> float:
    return max(views.targets[i].baseline.magnitude for i in idx)


def _stages(views: ViewSet, strategy: Strategy) -> list[StageState]:
    all_views = tuple(range(len(views.targets)))
    bmax = _max_baseline(views, all_views)
    Q = strategy.n_scales
    kind = strategy.kind
    if kind == "naive":
        return [StageState(all_views, (0,), 1.0 / bmax, True)]
    if kind == "gcm":
        return [StageState(all_views, tuple(range(Q)), 1.0 / bmax, True)]
    if kind == "piv":
        stages = piv_stages(views)
        return [
            StageState(s, (0,), 1.0 / _max_baseline(views, s), i == len(stages) - 1)
            for i, s in enumerate(stages)
        ]
    if kind == "c2f":
        return [StageState(all_views, (q,), 2.0 ** q / bmax, q == 0) for q in range(Q - 1, -1, -1)]
    # gcm_sliding: the window follows the coarse-to-fine pointer but never
    # shrinks below SLIDING_WINDOW levels
    size = min(SLIDING_WINDOW, Q)
    out = []
    for p in range(Q - 1, -1, -1):
        top = max(p, size - 1)
        out.append(StageState(all_views, tuple(range(top - size + 1, top + 1)), 2.0 ** p / bmax, p == 0))
    return out


def rmse(w: np.ndarray, gt: np.ndarray) -> float:
    from .evaluation import rmse as _rmse

    return _rmse(w, gt)


def run(
    views: ViewSet,
    strategy: Strategy,
    solver_cfg: solver.SolverConfig = solver.SolverConfig(),
    gcm_cfg: GcmConfig = GcmConfig(),
    on_solve: Optional[Callable[[np.ndarray, TraceEntry], None]] = None,
) -> RunResult:
    """Estimate disparity from zero with the given strategy.

    ``on_solve(w, entry)`` is called after every counted solve.
    """
    if not views.targets:
        raise ConfigurationError("view set has no targets")
    start = time.perf_counter()
    stages = _stages(views, strategy)
    use_gcm = strategy.kind in ("gcm", "gcm_sliding")

    def gcm_weights(warped, stack, w):
        return compute_weights(stack, w, warped, gcm_cfg).weights

    weight_fn = gcm_weights if use_gcm else None
    w = np.zeros(views.shape)
    result = RunResult(w)
    stage_idx = 0
    quiet = 0
    count = 0
    sub_cache: dict[tuple[int, ...], ViewSet] = {}
    while count < strategy.max_solves:
        stage = stages[stage_idx]
        sub = sub_cache.get(stage.views)
        if sub is None:
            sub = views if len(stage.views) == len(views.targets) else views.subset(stage.views)
            sub_cache[stage.views] = sub
        w, report = solver.solve_iteration(
            sub, w, stage.scales, solver_cfg, stage.limit, weight_fn, solve_count=count
        )
        count = report.solve_count
        err = rmse(w, views.ground_truth) if views.ground_truth is not None else None
        entry = TraceEntry(report, err, stage)
        result.trace.append(entry)
        if on_solve is not None:
            on_solve(w, entry)
        if not stage.final:
            if not report.clipped:
                stage_idx += 1
            continue
        quiet = quiet + 1 if report.max_abs_dw < strategy.conv_tol else 0
        if quiet >= strategy.conv_patience:
            break
    result.w = w
    result.wall_time = time.perf_counter() - start
    return result
