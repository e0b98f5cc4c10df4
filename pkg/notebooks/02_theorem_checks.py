"""Empirical checks of the FRGD descent/decay and residual bounds.

Draws random SPD quadratics, runs FRGD at the admissible step (descent
check) and at 1/lambda_max (residual bound), and prints the worst margins.
"""

import numpy as np

from frmomentum.objectives import make_rng, random_spd_problem
from frmomentum.theory import run_frgd, theorem1_alpha_bound, theorem1_check, theorem2_bound

rng = make_rng(0)
K = 30
worst_ratio, descent_viol, bound_viol, degenerate = -np.inf, 0, 0, 0
for _ in range(25):
    d = int(rng.integers(2, 40))
    q = random_spd_problem(d, 10 ** rng.uniform(0.3, 3), rng)
    lam = np.linalg.eigvalsh(q.A)
    w0 = rng.standard_normal(d)

    alpha = theorem1_alpha_bound(lam[0], lam[-1], 0.0, d, np.linalg.norm(q.gradient(w0)), K)
    rep = theorem1_check(run_frgd(q, w0, alpha, K), q, K)
    descent_viol += rep.violations
    worst_ratio = max(worst_ratio, float(np.max(rep.ratios - rep.rate_ceiling)))

    rep2 = theorem2_bound(run_frgd(q, w0, 1.0 / lam[-1], 20), q.A)
    bound_viol += rep2.violations
    degenerate += sum(r.degenerate for r in rep2.rows)

print(f"descent/decay violations: {descent_viol}, worst ratio - ceiling: {worst_ratio:.3e}")
print(f"residual-bound violations: {bound_viol} ({degenerate} degenerate rows skipped)")
