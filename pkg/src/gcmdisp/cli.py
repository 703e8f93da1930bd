"""Command-line front end.

Exit status is 0 on success, 1 for usage errors and 2 when the input data
cannot be read or processed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import dataio, evaluation
from .errors import ConfigurationError, DimensionError, FormatError, LoadError, NumericalError, ParameterError
from .filtering import build_scale_stack
from .gcm import compute_weights
from .schedule import run
from .solver import SolverConfig, warp_views

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gcmdisp", description="Multi-view disparity estimation with gradient-consistency weights.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("estimate", help="estimate disparity for one scene")
    e.add_argument("--manifest", required=True, type=Path)
    e.add_argument("--method", default="gcm", help=f"one of {', '.join(evaluation.METHODS)}")
    e.add_argument("--alpha", type=float, default=0.5)
    e.add_argument("--scales", type=_positive_int, default=3)
    e.add_argument("--zero-g", action="store_true", help="drop the gradient-consistency term")
    e.add_argument("--zero-o", action="store_true", help="drop the scale-consistency term")
    e.add_argument("--epsilon", type=float, default=2e-4)
    e.add_argument("--max-solves", type=_positive_int, default=300)
    e.add_argument("--dump-every", type=_positive_int, default=None, help="write w every N solves")
    e.add_argument("--dump-weights", type=Path, default=None, help="write final GCM weights here")
    e.add_argument("--out", required=True, type=Path)
    e.add_argument("--trace", type=Path, default=None)

    v = sub.add_parser("eval", help="RMSE of an estimate against ground truth")
    v.add_argument("--est", required=True, type=Path)
    src = v.add_mutually_exclusive_group(required=True)
    src.add_argument("--gt", type=Path, help="ground-truth PFM, compared as stored")
    src.add_argument("--manifest", type=Path, help="use the scene's normalised ground truth")

    s = sub.add_parser("sweep", help="k-fold alpha selection over a directory of scenes")
    s.add_argument("--scenes", required=True, type=Path)
    s.add_argument("--methods", type=_names, default=["naive", "piv", "c2f", "gcm"])
    s.add_argument("--alphas", type=_floats, default=list(evaluation.DEFAULT_ALPHAS))
    s.add_argument("--k", type=_positive_int, default=6)
    s.add_argument("--jobs", type=_positive_int, default=1)
    s.add_argument("--scales", type=_positive_int, default=3)
    s.add_argument("--epsilon", type=float, default=2e-4)
    s.add_argument("--max-solves", type=_positive_int, default=300)
    s.add_argument("--out", required=True, type=Path)

    y = sub.add_parser("synth", help="render a synthetic scene")
    y.add_argument("--spec", required=True, help="JSON scene description, or 'two-plane'")
    y.add_argument("--out", required=True, type=Path)
    y.add_argument("--name", default=None)

    a = sub.add_parser("analyze-spectrum", help="expected-power ratio of the scale-consistency factors")
    a.add_argument("--sigmas", type=_floats, default=[1.0, 2.0, 4.0, 8.0])
    a.add_argument("--models", type=_names, default=list(evaluation.SPECTRUM_MODELS))
    a.add_argument("--grid", type=_positive_int, default=1024)
    a.add_argument("--out", required=True, type=Path)
    return p


# --------------------------------------------------------------------------- commands


def _load(path: Path):
    return dataio.load_scene(dataio.read_manifest(path))


def cmd_estimate(args) -> int:
    if args.zero_g or args.zero_o:
        if args.method != "gcm":
            raise UsageError("--zero-g/--zero-o apply to the gcm method only")
        if args.zero_g and args.zero_o:
            raise UsageError("--zero-g and --zero-o are mutually exclusive")
        method = "gcm-zero-g" if args.zero_g else "gcm-zero-o"
    else:
        method = args.method
    strategy, gcm_cfg = evaluation.method_config(method, args.scales, args.max_solves, args.epsilon)
    if args.dump_weights is not None and strategy.kind not in ("gcm", "gcm_sliding"):
        raise UsageError("--dump-weights needs a gcm method")
    views = _load(args.manifest)

    def dump(w, entry):
        n = entry.report.solve_count
        if n % args.dump_every == 0:
            path = args.out.with_name(f"{args.out.stem}_{n:04d}.pfm")
            path.write_bytes(dataio.write_pfm(w))

    result = run(views, strategy, SolverConfig(alpha=args.alpha), gcm_cfg, dump if args.dump_every else None)
    args.out.write_bytes(dataio.write_pfm(result.w))

    if args.dump_weights is not None:
        args.dump_weights.mkdir(parents=True, exist_ok=True)
        warped = warp_views(views, result.w)
        stack = build_scale_stack(warped, strategy.n_scales)
        field = compute_weights(stack, result.w, warped, gcm_cfg)
        for i, t in enumerate(views.targets):
            for k, q in enumerate(field.scales):
                out = args.dump_weights / f"weights_{t.view_id}_q{q}.pfm"
                out.write_bytes(dataio.write_pfm(field.weights[i, k]))

    trace = result.rmse_trace
    if args.trace is not None:
        record = evaluation.RunRecord(
            args.manifest.stem, method, args.alpha, args.epsilon,
            [float("nan") if v is None else v for v in trace],
        )
        if views.ground_truth is None:
            evaluation.write_trace_csv([record], args.trace)
        else:
            evaluation.emit_trace([record], args.trace)
    msg = f"{method}: {result.solves} solves in {result.wall_time:.1f}s"
    if trace and trace[-1] is not None:
        msg += f", RMSE {trace[-1]:.5f}"
    print(msg)
    return 0


def cmd_eval(args) -> int:
    est = dataio.read_image(args.est)
    if args.gt is not None:
        gt = dataio.read_image(args.gt)
    else:
        gt = _load(args.manifest).ground_truth
        if gt is None:
            raise LoadError("manifest has no ground truth", args.manifest)
    print(f"{evaluation.rmse(est, gt):.6f}")
    return 0


def cmd_sweep(args) -> int:
    paths = sorted(args.scenes.glob("*.manifest"))
    if not paths:
        raise LoadError("no *.manifest files found", args.scenes)
    scenes = {p.stem: _load(p) for p in paths}
    table, records = evaluation.kfold_sweep(
        scenes, args.methods, args.alphas, args.k, jobs=args.jobs,
        n_scales=args.scales, max_solves=args.max_solves, epsilon=args.epsilon,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    evaluation.write_trace_csv(records, args.out / "runs.csv")
    with (args.out / "summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "mean_rmse", "selected_alphas"])
        for method in args.methods:
            r = table[method]
            writer.writerow([method, repr(r.mean_rmse), " ".join(repr(a) for a in r.selected_alpha)])
            print(f"{method:12s} {r.mean_rmse:.5f}  alpha per fold: {r.selected_alpha}")
    means = [
        evaluation.RunRecord("kfold-mean", m, float("nan"), args.epsilon, table[m].mean_trace)
        for m in args.methods
    ]
    evaluation.emit_trace(means, args.out / "trace")
    return 0


def cmd_synth(args) -> int:
    if args.spec == "two-plane":
        spec = dataio.two_plane_spec()
        name = args.name or "two_plane"
    else:
        spec = dataio.load_synth_spec(args.spec)
        name = args.name or Path(args.spec).stem
    path = dataio.write_scene(dataio.synth_scene(spec), args.out, name)
    print(path)
    return 0


def cmd_analyze_spectrum(args) -> int:
    if not args.sigmas or not args.models:
        raise UsageError("need at least one sigma and one model")
    try:
        models = [evaluation.SpectrumModel(m) for m in args.models]
    except ParameterError as exc:
        raise UsageError(str(exc))
    if min(args.sigmas) <= 0:
        raise UsageError("sigmas must be positive")
    rows = []
    for model in models:
        for sigma in args.sigmas:
            p_a, p_b = evaluation.spectrum_powers(sigma, model, args.grid)
            rows.append((model.kind, sigma, p_a, p_b, p_a / p_b))
            print(f"{model.kind:6s} sigma={sigma:<8g} ratio={p_a / p_b:.6g}")
    with args.out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "sigma", "p_a", "p_b", "ratio"])
        for row in rows:
            writer.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "analyze-spectrum": cmd_analyze_spectrum,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigurationError) as exc:
        print(f"gcmdisp {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LoadError, FormatError, DimensionError, ParameterError, NumericalError, OSError) as exc:
        print(f"gcmdisp {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
