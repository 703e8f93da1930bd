"""Compare the schedules on the synthetic two-plane scene.

Renders the 128x128 nine-view scene, runs each method for a fixed number of
solves and writes an RMSE-vs-solves plot (CSV + SVG) next to this script.

    python3 demos/compare_methods.py [max_solves]
"""

import sys
from pathlib import Path

from gcmdisp.dataio import synth_scene, two_plane_spec
from gcmdisp.evaluation import emit_trace, run_method

OUT = Path(__file__).with_name("out")


def main(max_solves=150):
    views = synth_scene(two_plane_spec(128))
    records = []
    for method in ("naive", "piv", "c2f", "gcm", "gcm-zero-g", "gcm-zero-o"):
        rec = run_method(views, method, alpha=0.5, max_solves=max_solves, scene="two_plane")
        records.append(rec)
        at40 = rec.rmse[min(40, len(rec.rmse)) - 1]
        print(f"{method:11s} final {rec.final_rmse:.4f}  @40 {at40:.4f}  ({len(rec.rmse)} solves, {rec.wall_time:.1f}s)")

    OUT.mkdir(exist_ok=True)
    csv_path, svg_path = emit_trace(records, OUT / "two_plane_trace")
    print(f"wrote {csv_path} and {svg_path}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 150)
