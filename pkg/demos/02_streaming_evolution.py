"""Streaming prototype evolution across a ten-stage class-incremental run.

Compares three ways of handling drifting old-class prototypes on the same
scenario: no compensation, an online gradient-descent projector, and the
closed-form least-squares projector refit after every arriving sample.
"""

import os

from driftcomp import load_config, run_engine
from driftcomp.sources import SyntheticSource

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs",
                      "reference_cold10.txt")

config = load_config(CONFIG)
source = SyntheticSource.from_config(config)

print(f"{config.num_tasks} stages, {sum(config.class_counts())} classes, "
      f"d={config.dimension}, drift={config.drift_kind}({config.drift_magnitude})")
print()

runs = {}
for solver in ("none", "gd_with_queue", "analytic"):
    result = run_engine(source, config.replace(solver=solver))
    runs[solver] = result
    accs = " ".join(f"{a:.3f}" for a in result.per_task_accuracy)
    print(f"{solver:>14}: per-stage [{accs}]")

print()
for solver, result in runs.items():
    print(f"{solver:>14}: final mean per-class accuracy {result.last_accuracy:.4f}")
print()
print("the stale baseline collapses as boundary drifts compound; the")
print("closed-form refit tracks each boundary from the streamed pairs alone")
