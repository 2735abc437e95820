"""Case 1: one load step, every second-order model against the reference.

Runs the 90 s scenario, prints the RMSE table and the speed error just
after the step and over the tail, and writes one CSV per model.

    python demos/case1_comparison.py [output-dir]
"""

import sys
from pathlib import Path

from synchro import case1_scenario, export_csv, run_comparison
from synchro.harness import window_rmse


def main(out="case1_out"):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    trajectories, report = run_comparison(case1_scenario(), strict=False)
    print(report.to_text())

    ref = trajectories["high-order"]
    print(f"{'model':<13}{'30-31 s':>12}{'31-90 s':>12}   speed RMSE [rpm]")
    for kind, traj in trajectories.items():
        export_csv(traj, out / f"{kind}.csv")
        if kind == "high-order":
            continue
        early = window_rmse(traj, ref, "omega_rpm", 30.0, 31.0)
        late = window_rmse(traj, ref, "omega_rpm", 31.0, 90.0)
        print(f"{kind:<13}{early:>12.4g}{late:>12.4g}")
    print(f"\nCSV files in {out.resolve()}")


if __name__ == "__main__":
    main(*sys.argv[1:])
