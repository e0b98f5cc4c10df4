"""Loss curves on the cycle-Laplacian quadratic.

Runs GD, heavy-ball, NAG and FRGD at the same step and writes long-format
plot data (log10 |f|) next to the traces. Plot ``plot.csv`` with anything
that reads CSV; one series per optimizer.

    python3 notebooks/01_cycle500_loss_curves.py runs/cycle500
"""

import sys
from pathlib import Path

from frmomentum import harness

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/cycle500")
cfg = harness.load_config(Path(__file__).parents[1] / "configs" / "cycle500.toml")
result = harness.run_experiment(cfg, out_dir=out)

rows = []
for cell in result.cells:
    # f is negative here, so plot log10 of its magnitude
    recs = [harness.IterationRecord(r.n, abs(r.f_value), r.grad_norm) for r in cell.records]
    rows += harness.emit_plot_data(recs, series=cell.label, log=True)
harness.write_plot_data(rows, out / "plot.csv")

for cell in result.cells:
    print(f"{cell.label:>10}  f_final = {cell.metrics['final_f']:.6g}")
