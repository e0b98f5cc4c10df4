"""FRSGD against SGD with momentum on two-moons, step-decay schedules.

The FR coefficient is a ratio of minibatch gradient norms, so it can be far
above 1 from one batch to the next. Watch ``beta_n`` in the FRSGD traces.

    python3 notebooks/03_two_moons_training.py runs/two_moons
"""

import sys
from pathlib import Path

from frmomentum import harness

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/two_moons")
cfg = harness.load_config(Path(__file__).parents[1] / "configs" / "two_moons.toml")
result = harness.run_experiment(cfg, out_dir=out, workers=2)

for row in result.summary:
    print(row)
for cell in result.cells:
    if cell.label.startswith("frsgd"):
        betas = [r.beta_n for r in cell.records[1:]]
        print(f"seed {cell.seed}: max beta_n over epochs {max(betas):.3g}")
