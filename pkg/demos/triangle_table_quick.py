"""Triangle-count table at reduced sample size; pass a sample count to override (default 20000)."""

import sys

from ldnormal.experiments import reproduce_triangle_table

samples = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
res = reproduce_triangle_table(samples=samples, seed=7, bootstrap_reps=20,
                       progress=lambda r: print(f"N={r.N} e={r.exponent}: d_TV={r.dtv_estimate:.4f} "
                                                f"2*d_TV={r.l1:.4f} published={r.published}"))  # fmt: skip
print(f"slope {res.slope:.4f}, R^2 {res.r2:.4f}; on 2*d_TV: slope {res.l1_fit()[0]:.4f}, R^2 {res.l1_fit()[1]:.4f}")
