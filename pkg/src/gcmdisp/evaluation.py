"""Evaluation harness: RMSE, k-fold alpha selection, convergence traces, spectra."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigurationError, DimensionError, ParameterError
from .filtering import BASE_SIGMA
from .gcm import GcmConfig
from .grids import ViewSet
from .schedule import Strategy, run
from .solver import SolverConfig

METHODS = ("naive", "piv", "c2f", "gcm", "gcm-sliding", "gcm-zero-g", "gcm-zero-o")
SPECTRUM_MODELS = {"white": 0.0, "1/f": 1.0, "1/f2": 2.0, "1/f3": 3.0}
DEFAULT_ALPHAS = (0.125, 0.25, 0.5, 1.0, 2.0)


def rmse(w, gt) -> float:
    """Root-mean-square difference over all pixels."""
    w = np.asarray(w, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if w.shape != gt.shape:
        raise DimensionError(f"shape mismatch {w.shape} vs {gt.shape}")
    return float(np.sqrt(np.mean((w - gt) ** 2)))


# --------------------------------------------------------------------------- runs


@dataclass
class RunRecord:
    scene: str
    method: str
    alpha: float
    epsilon: float
    rmse: list[float] = field(default_factory=list)
    final_rmse: float = float("nan")
    wall_time: float = 0.0


def method_config(method: str, n_scales: int = 3, max_solves: int = 300, epsilon: float = 2e-4):
    """Map a method name to ``(Strategy, GcmConfig)``."""
    name = method.lower().replace("_", "-")
    if name not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; expected one of {METHODS}")
    zero_g = name == "gcm-zero-g"
    zero_o = name == "gcm-zero-o"
    kind = "gcm" if zero_g or zero_o else name
    return Strategy(kind, n_scales, max_solves), GcmConfig(epsilon=epsilon, zero_G=zero_g, zero_O=zero_o)


def run_method(
    views: ViewSet,
    method: str,
    alpha: float = 0.5,
    n_scales: int = 3,
    max_solves: int = 300,
    epsilon: float = 2e-4,
    scene: Optional[str] = None,
    solver_cfg: Optional[SolverConfig] = None,
) -> RunRecord:
    """Run one estimation and summarise it as a :class:`RunRecord`."""
    if views.ground_truth is None:
        raise ConfigurationError("scene has no ground truth to evaluate against")
    strategy, gcm_cfg = method_config(method, n_scales, max_solves, epsilon)
    cfg = SolverConfig(alpha=alpha) if solver_cfg is None else solver_cfg
    start = time.perf_counter()
    result = run(views, strategy, cfg, gcm_cfg)
    trace = result.rmse_trace
    return RunRecord(
        scene=scene or views.meta.get("name", "scene"),
        method=method,
        alpha=cfg.alpha,
        epsilon=epsilon,
        rmse=trace,
        final_rmse=trace[-1],
        wall_time=time.perf_counter() - start,
    )


def _run_job(args):
    views, kwargs = args
    return run_method(views, **kwargs)


def run_grid(
    scenes: Mapping[str, ViewSet],
    methods: Sequence[str],
    alphas: Sequence[float],
    jobs: int = 1,
    **kwargs,
) -> list[RunRecord]:
    """Every (scene, method, alpha) combination, optionally in worker processes."""
    tasks = [
        (scenes[s], dict(method=m, alpha=a, scene=s, **kwargs))
        for s in sorted(scenes)
        for m in methods
        for a in alphas
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_job, tasks))
    return [_run_job(t) for t in tasks]


# --------------------------------------------------------------------------- k-fold


def make_folds(scene_ids: Iterable[str], k: int) -> list[list[str]]:
    """Round-robin folds over the sorted scene ids."""
    ids = sorted(scene_ids)
    if not 2 <= k <= len(ids):
        raise ConfigurationError(f"k must lie in [2, {len(ids)}], got {k}")
    return [ids[i::k] for i in range(k)]


@dataclass
class FoldResult:
    method: str
    mean_rmse: float
    selected_alpha: list[float]
    per_scene: dict[str, float]
    mean_trace: list[float]


def kfold_validate(records: Sequence[RunRecord], k: int) -> dict[str, FoldResult]:
    """Cross-validated RMSE per method.

    For each held-out fold the alpha with the lowest mean final RMSE over the
    remaining folds is selected (ties go to the earlier alpha in sorted
    order); the reported value is the mean over all scenes of their
    held-out RMSE.
    """
    if not records:
        raise ConfigurationError("no runs to validate")
    table: dict[str, dict[float, dict[str, RunRecord]]] = {}
    for r in records:
        table.setdefault(r.method, {}).setdefault(r.alpha, {})[r.scene] = r
    out = {}
    for method, by_alpha in table.items():
        alphas = sorted(by_alpha)
        scenes = sorted(set.intersection(*(set(v) for v in by_alpha.values())))
        folds = make_folds(scenes, k)
        per_scene: dict[str, float] = {}
        chosen_runs: list[RunRecord] = []
        selected = []
        for i, held in enumerate(folds):
            train = [s for j, f in enumerate(folds) if j != i for s in f]
            best = min(alphas, key=lambda a: np.mean([by_alpha[a][s].final_rmse for s in train]))
            selected.append(best)
            for s in held:
                per_scene[s] = by_alpha[best][s].final_rmse
                chosen_runs.append(by_alpha[best][s])
        out[method] = FoldResult(
            method,
            float(np.mean(list(per_scene.values()))),
            selected,
            per_scene,
            mean_trace(chosen_runs),
        )
    return out


def kfold_sweep(
    scenes: Mapping[str, ViewSet],
    methods: Sequence[str],
    alphas: Sequence[float],
    k: int,
    jobs: int = 1,
    **kwargs,
) -> tuple[dict[str, FoldResult], list[RunRecord]]:
    if not alphas:
        raise ConfigurationError("empty alpha grid")
    if not methods:
        raise ConfigurationError("no methods requested")
    make_folds(scenes, k)
    records = run_grid(scenes, methods, alphas, jobs=jobs, **kwargs)
    return kfold_validate(records, k), records


def mean_trace(records: Sequence[RunRecord]) -> list[float]:
    """Per-solve mean RMSE; runs that stopped early hold their last value."""
    if not records:
        return []
    n = max(len(r.rmse) for r in records)
    padded = np.array([r.rmse + [r.rmse[-1]] * (n - len(r.rmse)) for r in records])
    return padded.mean(axis=0).tolist()


# --------------------------------------------------------------------------- traces


def write_trace_csv(records: Sequence[RunRecord], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["solve", "rmse", "method", "scene", "alpha"])
        for r in records:
            for i, v in enumerate(r.rmse, 1):
                writer.writerow([i, repr(float(v)), r.method, r.scene, repr(float(r.alpha))])
    return path


def read_trace_csv(path) -> list[RunRecord]:
    records: dict[tuple[str, str, str], RunRecord] = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["scene"], row["method"], row["alpha"])
            rec = records.get(key)
            if rec is None:
                rec = records[key] = RunRecord(row["scene"], row["method"], float(row["alpha"]), float("nan"))
            rec.rmse.append(float(row["rmse"]))
    for rec in records.values():
        rec.final_rmse = rec.rmse[-1]
    return list(records.values())


_COLOURS = ("#1f77b4", "#ff7f0e", "#8c564b", "#9467bd", "#d62728", "#2ca02c", "#17becf", "#7f7f7f")


def render_svg(series: Mapping[str, Sequence[float]], width: int = 640, height: int = 400) -> str:
    """Line chart of RMSE against solve count, log-scaled x axis."""
    left, right, top, bottom = 60, 150, 20, 45
    pw, ph = width - left - right, height - top - bottom
    n_max = max(len(v) for v in series.values())
    y_max = max(max(v) for v in series.values())
    y_max = y_max * 1.05 if y_max > 0 else 1.0
    x_hi = math.log10(max(n_max, 2))

    def px(i):
        return left + pw * (math.log10(i) / x_hi)

    def py(v):
        return top + ph * (1.0 - v / y_max)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="white" stroke="black"/>',
    ]
    decade = 1
    while decade <= n_max:
        for m in range(1, 10):
            x = decade * m
            if x > n_max:
                break
            xp = px(x)
            parts.append(f'<line x1="{xp:.2f}" y1="{top + ph}" x2="{xp:.2f}" y2="{top + ph + (6 if m == 1 else 3)}" stroke="black"/>')
            if m == 1:
                parts.append(f'<text x="{xp:.2f}" y="{top + ph + 18}" text-anchor="middle">{x}</text>')
        decade *= 10
    for j in range(6):
        v = y_max * j / 5
        yp = py(v)
        parts.append(f'<line x1="{left - 4}" y1="{yp:.2f}" x2="{left}" y2="{yp:.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 6}" y="{yp + 4:.2f}" text-anchor="end">{v:.3g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">solves (log scale)</text>')
    parts.append(f'<text x="14" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 14 {top + ph / 2})">RMSE</text>')
    for idx, (name, values) in enumerate(series.items()):
        colour = _COLOURS[idx % len(_COLOURS)]
        pts = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(values, 1))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"><title>{name}</title></polyline>')
        ly = top + 14 + 16 * idx
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 35}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_trace(records: Sequence[RunRecord], path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` and ``<path>.svg``; one SVG polyline per method."""
    if not records:
        raise ConfigurationError("no records to emit")
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    svg_path = path.with_suffix(".svg")
    write_trace_csv(records, csv_path)
    by_method: dict[str, list[RunRecord]] = {}
    for r in records:
        by_method.setdefault(r.method, []).append(r)
    series = {m: mean_trace(rs) for m, rs in by_method.items()}
    svg_path.write_text(render_svg(series))
    return csv_path, svg_path


# --------------------------------------------------------------------------- spectrum analysis


@dataclass(frozen=True)
class SpectrumModel:
    """Image power spectrum ``1/|omega|^k``; ``white`` is ``k = 0``.

    Accepts ``white``, ``1/f``, ``1/f2`` and ``1/f3`` (also ``1/f^2``, ``1/f²``).
    """

    kind: str = "white"

    def __post_init__(self):
        key = self.kind.lower().replace("^", "").replace(" ", "").replace("²", "2").replace("³", "3")
        if key not in SPECTRUM_MODELS:
            raise ParameterError(f"unknown spectrum model {self.kind!r}; expected one of {tuple(SPECTRUM_MODELS)}")
        object.__setattr__(self, "kind", key)

    @property
    def exponent(self) -> float:
        return SPECTRUM_MODELS[self.kind]


def _model_power(model) -> float:
    return (model if isinstance(model, SpectrumModel) else SpectrumModel(model)).exponent


def gradient_spectrum(omega1: np.ndarray, omega2: np.ndarray, model, sigma0: float = BASE_SIGMA) -> np.ndarray:
    """Power spectrum of a horizontal derivative-of-Gaussian response to a 1/f^k image."""
    k = _model_power(model)
    r2 = omega1 ** 2 + omega2 ** 2
    image = r2 ** (-k / 2.0) if k else np.ones_like(r2)
    return omega1 ** 2 * np.exp(-sigma0 ** 2 * r2) * image


def spectrum_powers(sigma_q: float, model, n: int = 1024) -> tuple[float, float]:
    """Expected powers ``(P_A, P_B)`` of the two scale-inconsistency factors.

    The projected gradient ``g`` is a zero-mean stationary Gaussian field
    band-limited to ``[-pi, pi]^2``.  With ``h = G * g``:

    * ``P_A = E[(G * g^2)^2] = v^2 + Var(G * g^2)``
    * ``P_B = E[(g h)^2] = v E[h^2] + 2 E[g h]^2``

    where ``v = E[g^2]``; ``Var(G * g^2)`` integrates ``|G|^2`` against twice
    the auto-convolution of the spectrum.  Midpoint rule on an ``n x n`` grid.
    """
    if not sigma_q > 0:
        raise ParameterError(f"sigma_q must be positive, got {sigma_q}")
    step = 2.0 * math.pi / n
    axis = -math.pi + (np.arange(n) + 0.5) * step
    o1, o2 = np.meshgrid(axis, axis, indexing="ij")
    spec = gradient_spectrum(o1, o2, model)
    cell = step * step / (2.0 * math.pi) ** 2
    r2 = o1 ** 2 + o2 ** 2
    v = spec.sum() * cell
    eh2 = (np.exp(-sigma_q ** 2 * r2) * spec).sum() * cell
    egh = (np.exp(-0.5 * sigma_q ** 2 * r2) * spec).sum() * cell
    p_b = v * eh2 + 2.0 * egh ** 2

    # spectrum of g^2 lives on [-2 pi, 2 pi]^2 at offsets (m + 1) * step
    auto = fftconvolve(spec, spec, mode="full") * step * step
    axis2 = -2.0 * math.pi + (np.arange(2 * n - 1) + 1.0) * step
    a1, a2 = np.meshgrid(axis2, axis2, indexing="ij")
    gain = np.exp(-sigma_q ** 2 * (a1 ** 2 + a2 ** 2))
    var = 2.0 * (gain * auto).sum() * cell / (2.0 * math.pi) ** 2
    return float(v * v + var), float(p_b)


def spectrum_ratio(sigma_q: float, model="white", n: int = 1024) -> float:
    """Ratio ``P_A / P_B``; large values mean the bound's leading term dominates."""
    p_a, p_b = spectrum_powers(sigma_q, model, n)
    return p_a / p_b
